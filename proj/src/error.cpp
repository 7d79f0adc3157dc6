/*
 * Copyright 2026 The ckaprune Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ckaprune/error.hpp"

namespace ckaprune {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::BadVersion: return "unsupported version";
    case ErrorKind::Truncated: return "truncated file";
    case ErrorKind::Checksum: return "checksum mismatch";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::NotPrunable: return "nothing prunable";
    case ErrorKind::Internal: return "internal error";
  }
  return "unknown error";
}

}  // namespace ckaprune
