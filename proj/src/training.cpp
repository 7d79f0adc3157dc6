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

#include "ckaprune/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "ckaprune/error.hpp"
#include "ckaprune/rng.hpp"

namespace ckaprune {

void Dataset::validate() const {
  require(!y.empty(), ErrorKind::InvalidArgument, "dataset is empty");
  require(x.rows() == y.size(), ErrorKind::DimensionMismatch,
          "dataset has " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
              " labels");
  for (int label : y)
    require(label >= 0 && static_cast<std::size_t>(label) < num_classes,
            ErrorKind::InvalidArgument, "label " + std::to_string(label) + " out of range");
}

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
          "learning_rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::InvalidArgument,
          "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  require(jitter >= 0.0, ErrorKind::InvalidArgument, "jitter must be >= 0");
}

namespace {

// Row-wise softmax probabilities with max subtraction.
Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return p;
}

double row_loss(std::span<const double> row, int label) {
  const double m = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - m);
  return std::log(z) + m - row[static_cast<std::size_t>(label)];
}

struct BlockCache {
  Matrix input;
  Matrix pre;     // expand output before ReLU
  Matrix hidden;  // after ReLU
};

struct ForwardCache {
  Matrix stem_pre;
  std::vector<Matrix> transition_in;   // stage s > 0: activations entering transition
  std::vector<Matrix> transition_pre;  // pre-ReLU transition output
  std::vector<std::vector<BlockCache>> blocks;
  Matrix final_pre;
  Matrix rep;
  Matrix logits;
};

ForwardCache forward_cached(const ResidualNet& net, const Matrix& x) {
  ForwardCache c;
  c.stem_pre = apply_affine(net.stem, x);
  Matrix h = c.stem_pre;
  relu_inplace(h);
  c.blocks.resize(net.stages.size());
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    if (s > 0) {
      c.transition_in.push_back(h);
      c.transition_pre.push_back(apply_affine(net.transitions[s - 1], h));
      h = c.transition_pre.back();
      relu_inplace(h);
    }
    for (const Block& b : net.stages[s].blocks) {
      BlockCache bc;
      bc.input = h;
      bc.pre = apply_affine(b.expand, h);
      bc.hidden = bc.pre;
      relu_inplace(bc.hidden);
      const Matrix branch = apply_affine(b.project, bc.hidden);
      auto hd = h.data();
      auto bd = branch.data();
      for (std::size_t i = 0; i < hd.size(); ++i) hd[i] += bd[i];
      c.blocks[s].push_back(std::move(bc));
    }
  }
  c.final_pre = h;
  c.rep = h;
  relu_inplace(c.rep);
  c.logits = apply_affine(net.classifier, c.rep);
  return c;
}

// Fills grad with dL/dW and dL/db, returns dL/d(input).
Matrix affine_backward(const Affine& layer, const Matrix& input, const Matrix& dout,
                       Affine& grad) {
  grad.weight = matmul_at(dout, input);
  std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
  for (std::size_t i = 0; i < dout.rows(); ++i) {
    auto row = dout.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) grad.bias[j] += row[j];
  }
  return matmul(dout, layer.weight);
}

void relu_backward(Matrix& grad, const Matrix& pre) {
  auto g = grad.data();
  auto p = pre.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(p[i] > 0.0)) g[i] = 0.0;
}

}  // namespace

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  require(logits.rows() == labels.size() && !labels.empty(), ErrorKind::DimensionMismatch,
          "cross_entropy: " + logits.shape() + " logits for " + std::to_string(labels.size()) +
              " labels");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) total += row_loss(logits.row(i), labels[i]);
  return total / static_cast<double>(labels.size());
}

Gradients backprop(const ResidualNet& net, const Matrix& x, std::span<const int> labels) {
  require(x.rows() == labels.size() && !labels.empty(), ErrorKind::DimensionMismatch,
          "backprop: " + std::to_string(x.rows()) + " rows for " +
              std::to_string(labels.size()) + " labels");
  ForwardCache c = forward_cached(net, x);
  Gradients g;
  g.loss = cross_entropy(c.logits, labels);
  g.logits = c.logits;
  g.params = zeros_like(net);

  const double inv_n = 1.0 / static_cast<double>(labels.size());
  Matrix d = softmax(c.logits);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    d(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    for (double& v : d.row(i)) v *= inv_n;
  }

  Matrix dh = affine_backward(net.classifier, c.rep, d, g.params.classifier);
  relu_backward(dh, c.final_pre);
  for (std::size_t s = net.stages.size(); s-- > 0;) {
    const auto& blocks = net.stages[s].blocks;
    for (std::size_t b = blocks.size(); b-- > 0;) {
      const BlockCache& bc = c.blocks[s][b];
      Block& gb = g.params.stages[s].blocks[b];
      Matrix du = affine_backward(blocks[b].project, bc.hidden, dh, gb.project);
      relu_backward(du, bc.pre);
      const Matrix dz_in = affine_backward(blocks[b].expand, bc.input, du, gb.expand);
      auto hd = dh.data();
      auto zd = dz_in.data();
      for (std::size_t i = 0; i < hd.size(); ++i) hd[i] += zd[i];
    }
    if (s > 0) {
      relu_backward(dh, c.transition_pre[s - 1]);
      dh = affine_backward(net.transitions[s - 1], c.transition_in[s - 1], dh,
                           g.params.transitions[s - 1]);
    }
  }
  relu_backward(dh, c.stem_pre);
  g.input = affine_backward(net.stem, x, dh, g.params.stem);
  return g;
}

TrainResult train(const ResidualNet& net, const Dataset& data, const TrainConfig& cfg,
                  const Dataset* test) {
  cfg.validate();
  data.validate();
  require(data.x.cols() == net.spec.input_dim, ErrorKind::DimensionMismatch,
          "training data has " + std::to_string(data.x.cols()) + " features, network expects " +
              std::to_string(net.spec.input_dim));

  TrainResult result{net, {}};
  if (cfg.epochs == 0) return result;

  ResidualNet& model = result.net;
  auto params = parameter_spans(model);
  std::vector<std::vector<double>> velocity;
  for (auto p : params) velocity.emplace_back(p.size(), 0.0);

  const std::size_t n = data.size();
  const std::size_t dim = data.x.cols();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    if (cfg.shuffle) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(std::span<std::size_t>(order));
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Matrix xb(count, dim);
      std::vector<int> yb(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(data.x.row(src).begin(), dim, xb.row(i).begin());
        yb[i] = data.y[src];
      }
      if (cfg.jitter > 0.0)
        for (double& v : xb.data()) v += cfg.jitter * rng.normal();

      Gradients g = backprop(model, xb, yb);
      if (!std::isfinite(g.loss)) {
        fail(ErrorKind::Numeric, "training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", sample offset " +
                                     std::to_string(start) + "; lower the learning rate");
      }
      loss_sum += g.loss * static_cast<double>(count);
      // Accuracy on the pre-update forward pass of this batch.
      const Matrix& logits = g.logits;
      for (std::size_t i = 0; i < count; ++i)
        if (argmax(logits.row(i)) == static_cast<std::size_t>(yb[i])) ++correct;

      auto grads = parameter_spans(std::as_const(g.params));
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto w = params[t];
        auto gr = grads[t];
        auto& v = velocity[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = cfg.momentum * v[i] + gr[i] + cfg.weight_decay * w[i];
          w[i] -= cfg.learning_rate * v[i];
        }
      }
    }
    result.history.train_loss.push_back(loss_sum / static_cast<double>(n));
    result.history.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    if (test) result.history.test_accuracy.push_back(evaluate(model, *test));
  }
  return result;
}

ResidualNet finetune(const ResidualNet& net, const Dataset& data, const TrainConfig& cfg) {
  return train(net, data, cfg).net;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

double accuracy_from_logits(const Matrix& logits, std::span<const int> labels) {
  require(!labels.empty(), ErrorKind::InvalidArgument, "cannot evaluate on empty data");
  require(logits.rows() == labels.size(), ErrorKind::DimensionMismatch,
          "accuracy: logits/labels row mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (argmax(logits.row(i)) == static_cast<std::size_t>(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const ResidualNet& net, const Dataset& data) {
  require(data.size() > 0, ErrorKind::InvalidArgument, "cannot evaluate on empty data");
  return accuracy_from_logits(forward(net, data.x), data.y);
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.x = Matrix(rows.size(), data.x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < data.size(), ErrorKind::InvalidArgument, "subset row out of range");
    std::copy_n(data.x.row(rows[i]).begin(), data.x.cols(), out.x.row(i).begin());
    out.y.push_back(data.y[rows[i]]);
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> rows_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> groups(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    groups[static_cast<std::size_t>(data.y[i])].push_back(i);
  return groups;
}

}  // namespace

DataSplit stratified_split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  data.validate();
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::InvalidArgument,
          "train_fraction must lie in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (auto& group : rows_by_class(data)) {
    rng.shuffle(std::span<std::size_t>(group));
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(group.size())));
    train_rows.insert(train_rows.end(), group.begin(), group.begin() + n_train);
    test_rows.insert(test_rows.end(), group.begin() + n_train, group.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {subset(data, train_rows), subset(data, test_rows), {}};
}

std::vector<std::size_t> stratified_sample(const Dataset& data, std::size_t count,
                                           std::uint64_t seed) {
  if (count >= data.size()) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  Rng rng(seed);
  auto groups = rows_by_class(data);
  for (auto& g : groups) rng.shuffle(std::span<std::size_t>(g));
  std::vector<std::size_t> picked;
  picked.reserve(count);
  for (std::size_t round = 0; picked.size() < count; ++round)
    for (const auto& g : groups)
      if (round < g.size() && picked.size() < count) picked.push_back(g[round]);
  std::sort(picked.begin(), picked.end());
  return picked;
}

DataSplit synth_dataset(std::size_t n, std::size_t dim, std::size_t classes, double spread,
                        std::uint64_t seed) {
  require(classes >= 2, ErrorKind::InvalidArgument, "synthetic data needs >= 2 classes");
  require(n >= classes, ErrorKind::InvalidArgument, "synthetic data needs n >= classes");
  require(dim >= 1, ErrorKind::InvalidArgument, "synthetic data needs dim >= 1");
  require(spread >= 0.0, ErrorKind::InvalidArgument, "spread must be >= 0");
  Rng rng(seed);
  Matrix means(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (double& v : means.row(c)) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : means.row(c)) v /= norm;
  }
  Dataset all;
  all.num_classes = classes;
  all.x = Matrix(n, dim);
  all.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    all.y[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < dim; ++j) all.x(i, j) = means(c, j) + spread * rng.normal();
  }
  return stratified_split(all, 0.8, derive_seed(seed, 1));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

}  // namespace

CsvTable load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) == std::vector<std::string>{""})
    fail(ErrorKind::Parse, path.string() + ": empty file (line 1 has no header)");
  const auto header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end())
    fail(ErrorKind::Parse, path.string() + ":1: missing label column \"" + label_column + "\"");
  const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

  CsvTable table;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_idx) table.feature_names.push_back(header[c]);

  std::map<std::string, int> label_ids;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_idx) {
        auto [it, inserted] =
            label_ids.emplace(cells[c], static_cast<int>(table.label_names.size()));
        if (inserted) table.label_names.push_back(cells[c]);
        labels.push_back(it->second);
        continue;
      }
      double v = 0.0;
      const char* first = cells[c].data();
      const char* last = first + cells[c].size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (cells[c].empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                   ": non-numeric value \"" + cells[c] + "\" in column \"" +
                                   header[c] + "\"");
      values.push_back(v);
    }
  }
  if (labels.empty()) fail(ErrorKind::Parse, path.string() + ": empty file (no data rows)");
  table.data.x = Matrix::from_data(labels.size(), table.feature_names.size(), std::move(values));
  table.data.y = std::move(labels);
  table.data.num_classes = table.label_names.size();
  return table;
}

}  // namespace ckaprune
