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

#include "ckaprune/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ckaprune/checkpoint.hpp"
#include "ckaprune/error.hpp"
#include "ckaprune/rng.hpp"

namespace ckaprune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Strict reader over one JSON object: typed getters with defaults and a
// final check that rejects unknown keys.
class Fields {
 public:
  Fields(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) fail(ErrorKind::Config, path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_ && j_->contains(key); }

  const json* raw(const char* key) {
    seen_.insert(key);
    return has(key) ? &j_->at(key) : nullptr;
  }

  Fields child(const char* key) { return Fields(raw(key), name(key)); }

  std::uint64_t u64(const char* key, std::uint64_t fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) fail(ErrorKind::Config, name(key) + ": expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::size_t count(const char* key, std::size_t fallback) {
    return static_cast<std::size_t>(u64(key, fallback));
  }

  double number(const char* key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(ErrorKind::Config, name(key) + ": expected a number");
    return v->get<double>();
  }

  bool flag(const char* key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(ErrorKind::Config, name(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(ErrorKind::Config, name(key) + ": expected a string");
    return v->get<std::string>();
  }

  template <typename T>
  std::vector<T> list(const char* key, std::vector<T> fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(ErrorKind::Config, name(key) + ": expected an array");
    std::vector<T> out;
    for (const auto& item : *v) {
      if constexpr (std::is_floating_point_v<T>) {
        if (!item.is_number()) fail(ErrorKind::Config, name(key) + ": expected numbers");
      } else if constexpr (std::is_integral_v<T>) {
        if (!item.is_number_integer()) fail(ErrorKind::Config, name(key) + ": expected integers");
      } else {
        if (!item.is_string()) fail(ErrorKind::Config, name(key) + ": expected strings");
      }
      out.push_back(item.get<T>());
    }
    return out;
  }

  void done() const {
    if (!j_) return;
    for (const auto& [key, value] : j_->items())
      if (!seen_.count(key)) fail(ErrorKind::Config, name(key.c_str()) + ": unknown field");
  }

  std::string name(const char* key) const { return path_ + "." + key; }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-raises validation failures from the component modules as config
// errors prefixed with the section name.
template <typename F>
void as_config(const std::string& section, F&& check) {
  try {
    check();
  } catch (const Error& e) {
    fail(ErrorKind::Config, section + ": " + e.what());
  }
}

TrainConfig read_train(Fields f, const TrainConfig& base) {
  TrainConfig t = base;
  t.epochs = f.count("epochs", base.epochs);
  t.batch_size = f.count("batch_size", base.batch_size);
  t.learning_rate = f.number("learning_rate", base.learning_rate);
  t.momentum = f.number("momentum", base.momentum);
  t.weight_decay = f.number("weight_decay", base.weight_decay);
  t.seed = f.u64("seed", base.seed);
  t.shuffle = f.flag("shuffle", base.shuffle);
  t.jitter = f.number("jitter", base.jitter);
  f.done();
  return t;
}

KernelKind read_kernel(const json* j, const std::string& path) {
  if (!j) return KernelKind::linear();
  if (j->is_string()) {
    const auto s = j->get<std::string>();
    if (s == "linear") return KernelKind::linear();
    if (s == "rbf") return KernelKind::rbf();
    fail(ErrorKind::Config, path + ": expected \"linear\" or \"rbf\"");
  }
  Fields f(j, path);
  const std::string type = f.text("type", "linear");
  KernelKind k;
  if (type == "linear") {
    k = KernelKind::linear();
  } else if (type == "rbf") {
    k = KernelKind::rbf();
    const json* bw = f.raw("bandwidth");
    if (bw && bw->is_number()) {
      k.bandwidth = bw->get<double>();
      if (!(*k.bandwidth > 0.0)) fail(ErrorKind::Config, path + ".bandwidth: must be positive");
    } else if (bw && !(bw->is_string() && bw->get<std::string>() == "median")) {
      fail(ErrorKind::Config, path + ".bandwidth: expected a positive number or \"median\"");
    }
  } else {
    fail(ErrorKind::Config, path + ".type: expected \"linear\" or \"rbf\"");
  }
  f.done();
  return k;
}

json kernel_json(const KernelKind& k) {
  if (k.type == KernelKind::Type::Linear) return {{"type", "linear"}};
  return {{"type", "rbf"},
          {"bandwidth", k.bandwidth ? json(*k.bandwidth) : json("median")}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate}, {"momentum", t.momentum},
          {"weight_decay", t.weight_decay}, {"seed", t.seed},
          {"shuffle", t.shuffle},        {"jitter", t.jitter}};
}

json block_json(const BlockId& id) { return {{"stage", id.stage}, {"position", id.position}}; }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir,
                                         std::optional<std::uint64_t> seed_override) {
  Fields root(&doc, "config");
  ExperimentConfig cfg;
  cfg.seed = root.u64("seed", 0);
  if (seed_override) cfg.seed = *seed_override;
  cfg.output_dir = root.text("output_dir", "out");

  {
    const json* arch = root.raw("arch");
    if (!arch) fail(ErrorKind::Config, "config.arch: missing field");
    Fields f(arch, "config.arch");
    for (const char* key : {"input_dim", "stage_widths", "blocks_per_stage", "num_classes",
                            "activation", "seed"})
      f.raw(key);
    f.done();
    json resolved = *arch;
    if (!resolved.contains("seed")) resolved["seed"] = derive_seed(cfg.seed, 1);
    cfg.arch = arch_from_json(resolved, "config.arch");
  }

  {
    Fields data = root.child("data");
    if (!data.has("synthetic") && !data.has("csv"))
      fail(ErrorKind::Config, "config.data: expected a \"synthetic\" or \"csv\" section");
    if (data.has("synthetic") && data.has("csv"))
      fail(ErrorKind::Config, "config.data: \"synthetic\" and \"csv\" are mutually exclusive");
    if (data.has("synthetic")) {
      Fields f = data.child("synthetic");
      SyntheticSource s;
      s.n = f.count("n", s.n);
      s.dim = f.count("dim", cfg.arch.input_dim);
      s.classes = f.count("classes", cfg.arch.num_classes);
      s.spread = f.number("spread", s.spread);
      s.seed = f.u64("seed", derive_seed(cfg.seed, 2));
      f.done();
      if (s.classes < 2 || s.n < s.classes)
        fail(ErrorKind::Config, "config.data.synthetic: need classes >= 2 and n >= classes");
      if (s.spread < 0.0) fail(ErrorKind::Config, "config.data.synthetic.spread: must be >= 0");
      cfg.synthetic = s;
    } else {
      Fields f = data.child("csv");
      CsvSource c;
      const std::string path = f.text("path", "");
      if (path.empty()) fail(ErrorKind::Config, "config.data.csv.path: missing field");
      c.path = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
      c.label = f.text("label", "");
      if (c.label.empty()) fail(ErrorKind::Config, "config.data.csv.label: missing field");
      c.train_fraction = f.number("train_fraction", c.train_fraction);
      c.seed = f.u64("seed", derive_seed(cfg.seed, 2));
      f.done();
      if (!fs::exists(c.path))
        fail(ErrorKind::Config, "config.data.csv.path: file not found: " + c.path.string());
      if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        fail(ErrorKind::Config, "config.data.csv.train_fraction: must lie in (0, 1)");
      cfg.csv = c;
    }
    data.done();
  }

  TrainConfig train_defaults;
  train_defaults.seed = derive_seed(cfg.seed, 3);
  cfg.train = read_train(root.child("train"), train_defaults);
  as_config("config.train", [&] { cfg.train.validate(); });

  {
    Fields f = root.child("prune");
    PruneConfig& p = cfg.prune;
    p.iterations = f.count("iterations", p.iterations);
    p.score_sample_count = f.count("score_sample_count", p.score_sample_count);
    p.kernel = read_kernel(f.raw("kernel"), "config.prune.kernel");
    as_config("config.prune.stage_cap",
              [&] { p.stage_cap = stage_cap_from_string(f.text("stage_cap", "k-2")); });
    as_config("config.prune.reference",
              [&] { p.reference = reference_mode_from_string(f.text("reference", "refresh")); });
    p.seed = f.u64("seed", derive_seed(cfg.seed, 4));
    p.threads = f.count("threads", 0);
    cfg.l1_fraction = f.number("l1_fraction", 0.0);
    TrainConfig ft_defaults = cfg.train;
    ft_defaults.epochs = 10;
    ft_defaults.learning_rate = 0.1 * cfg.train.learning_rate;
    ft_defaults.seed = derive_seed(cfg.seed, 5);
    p.finetune = read_train(f.child("finetune"), ft_defaults);
    f.done();
    as_config("config.prune", [&] { p.validate(); });
    if (cfg.l1_fraction < 0.0 || cfg.l1_fraction >= 1.0)
      fail(ErrorKind::Config, "config.prune.l1_fraction: must lie in [0, 1)");
  }

  {
    Fields f = root.child("eval");
    EvalConfig& e = cfg.eval;
    {
      Fields l = f.child("latency");
      e.latency.options.n_samples = l.count("n_samples", e.latency.options.n_samples);
      e.latency.options.runs = l.count("runs", e.latency.options.runs);
      e.latency.options.warmup_runs = l.count("warmup_runs", e.latency.options.warmup_runs);
      e.latency.options.batch_size = l.count("batch_size", e.latency.options.batch_size);
      e.latency.options.seed = l.u64("seed", derive_seed(cfg.seed, 6));
      e.latency.tolerance = l.number("tolerance", e.latency.tolerance);
      e.latency.layer_steps = l.list<std::size_t>("layer_steps", e.latency.layer_steps);
      e.latency.in_eval = l.flag("enabled", e.latency.in_eval);
      l.done();
      if (e.latency.options.n_samples < 1 || e.latency.options.runs < 1)
        fail(ErrorKind::Config, "config.eval.latency: n_samples and runs must be >= 1");
      if (e.latency.tolerance < 0.0)
        fail(ErrorKind::Config, "config.eval.latency.tolerance: must be >= 0");
    }
    e.fgsm_epsilons = f.list<double>("fgsm_epsilons", e.fgsm_epsilons);
    for (double eps : e.fgsm_epsilons)
      if (!(eps >= 0.0)) fail(ErrorKind::Config, "config.eval.fgsm_epsilons: must be >= 0");
    {
      Fields c = f.child("corruption");
      if (c.has("kinds")) {
        e.corruption.kinds.clear();
        for (const auto& k : c.list<std::string>("kinds", {}))
          as_config("config.eval.corruption.kinds",
                    [&] { e.corruption.kinds.push_back(corruption_from_string(k)); });
      }
      e.corruption.severities = c.list<int>("severities", e.corruption.severities);
      for (int s : e.corruption.severities)
        if (s < 1 || s > 5) fail(ErrorKind::Config, "config.eval.corruption.severities: must be in 1..5");
      e.corruption.repeats = c.count("repeats", e.corruption.repeats);
      e.corruption.seed = c.u64("seed", derive_seed(cfg.seed, 8));
      c.done();
    }
    {
      Fields c = f.child("co2");
      e.co2.throughput_flops = c.number("throughput_flops", e.co2.throughput_flops);
      e.co2.power_w = c.number("power_w", e.co2.power_w);
      e.co2.intensity_kg_per_kwh = c.number("intensity_kg_per_kwh", e.co2.intensity_kg_per_kwh);
      c.done();
      if (!(e.co2.throughput_flops > 0.0) || !(e.co2.power_w > 0.0) ||
          !(e.co2.intensity_kg_per_kwh > 0.0))
        fail(ErrorKind::Config, "config.eval.co2: throughput_flops, power_w and intensity_kg_per_kwh must be > 0");
    }
    f.done();
  }

  {
    Fields f = root.child("oracle");
    TrainConfig defaults = cfg.prune.finetune;
    defaults.epochs = 2;
    defaults.seed = derive_seed(cfg.seed, 7);
    cfg.oracle_finetune = read_train(f.child("finetune"), defaults);
    f.done();
    as_config("config.oracle.finetune", [&] { cfg.oracle_finetune.validate(); });
  }

  root.done();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path,
                                        std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    fail(ErrorKind::Config, path.string() + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(doc, path.parent_path(), seed_override);
}

json to_json(const ExperimentConfig& cfg) {
  json data;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    data["synthetic"] = {{"n", s.n}, {"dim", s.dim}, {"classes", s.classes},
                         {"spread", s.spread}, {"seed", s.seed}};
  } else if (cfg.csv) {
    const auto& c = *cfg.csv;
    data["csv"] = {{"path", c.path.string()}, {"label", c.label},
                   {"train_fraction", c.train_fraction}, {"seed", c.seed}};
  }
  json kinds = json::array();
  for (auto k : cfg.eval.corruption.kinds) kinds.push_back(to_string(k));
  const auto& lat = cfg.eval.latency;
  return {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir.string()},
      {"arch", arch_to_json(cfg.arch)},
      {"data", data},
      {"train", train_json(cfg.train)},
      {"prune",
       {{"iterations", cfg.prune.iterations},
        {"score_sample_count", cfg.prune.score_sample_count},
        {"kernel", kernel_json(cfg.prune.kernel)},
        {"stage_cap", to_string(cfg.prune.stage_cap)},
        {"reference", to_string(cfg.prune.reference)},
        {"seed", cfg.prune.seed},
        {"threads", cfg.prune.threads},
        {"l1_fraction", cfg.l1_fraction},
        {"finetune", train_json(cfg.prune.finetune)}}},
      {"eval",
       {{"latency",
         {{"n_samples", lat.options.n_samples},
          {"runs", lat.options.runs},
          {"warmup_runs", lat.options.warmup_runs},
          {"batch_size", lat.options.batch_size},
          {"seed", lat.options.seed},
          {"tolerance", lat.tolerance},
          {"layer_steps", lat.layer_steps},
          {"enabled", lat.in_eval}}},
        {"fgsm_epsilons", cfg.eval.fgsm_epsilons},
        {"corruption",
         {{"kinds", kinds},
          {"severities", cfg.eval.corruption.severities},
          {"repeats", cfg.eval.corruption.repeats},
          {"seed", cfg.eval.corruption.seed}}},
        {"co2",
         {{"throughput_flops", cfg.eval.co2.throughput_flops},
          {"power_w", cfg.eval.co2.power_w},
          {"intensity_kg_per_kwh", cfg.eval.co2.intensity_kg_per_kwh}}}}},
      {"oracle", {{"finetune", train_json(cfg.oracle_finetune)}}},
  };
}

json to_json(const PruneTrace& trace) {
  const PruneConfig& c = trace.config;
  json records = json::array();
  for (const PruneRecord& r : trace.records) {
    json scores = json::array();
    for (const CandidateScore& s : r.scores)
      scores.push_back({{"stage", s.id.stage},
                        {"position", s.id.position},
                        {"score", s.similarity.score},
                        {"cka", s.similarity.cka},
                        {"degenerate", s.similarity.degenerate}});
    records.push_back({{"iteration", r.iteration},
                       {"scores", scores},
                       {"removed", block_json(r.removed)},
                       {"acc_before", r.acc_before},
                       {"acc_after_removal", r.acc_after_removal},
                       {"acc_after_finetune", r.acc_after_finetune},
                       {"flops_before", r.before.per_sample_flops},
                       {"flops_after", r.after.per_sample_flops},
                       {"params_before", r.before.params},
                       {"params_after", r.after.params}});
  }
  return {{"schema", kReportSchema},
          {"config",
           {{"iterations", c.iterations},
            {"score_sample_count", c.score_sample_count},
            {"kernel", kernel_json(c.kernel)},
            {"stage_cap", to_string(c.stage_cap)},
            {"reference", to_string(c.reference)},
            {"seed", c.seed},
            {"finetune", train_json(c.finetune)}}},
          {"initial", {{"accuracy", trace.initial_accuracy}, {"flops", trace.initial.per_sample_flops}, {"params", trace.initial.params}}},
          {"final", {{"accuracy", trace.final_accuracy}, {"flops", trace.final.per_sample_flops}, {"params", trace.final.params}}},
          {"truncated", trace.truncated},
          {"records", records}};
}

std::string trace_csv(const PruneTrace& trace) {
  std::ostringstream out;
  out << "iteration,removed_stage,removed_position,score,acc_before,acc_after_removal,"
         "acc_after_finetune,flops_before,flops_after,params_before,params_after\n";
  for (const PruneRecord& r : trace.records) {
    double score = 0.0;
    for (const auto& s : r.scores)
      if (s.id == r.removed) score = s.similarity.score;
    out << r.iteration << ',' << r.removed.stage << ',' << r.removed.position << ','
        << fmt_double(score) << ',' << fmt_double(r.acc_before) << ','
        << fmt_double(r.acc_after_removal) << ',' << fmt_double(r.acc_after_finetune) << ','
        << r.before.per_sample_flops << ',' << r.after.per_sample_flops << ','
        << r.before.params << ',' << r.after.params << '\n';
  }
  return out.str();
}

DataSplit load_data(const ExperimentConfig& cfg) {
  DataSplit data;
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    data = synth_dataset(s.n, s.dim, s.classes, s.spread, s.seed);
  } else {
    const auto& c = *cfg.csv;
    CsvTable table = load_csv(c.path, c.label);
    data = stratified_split(table.data, c.train_fraction, c.seed);
    data.label_names = std::move(table.label_names);
  }
  if (data.train.x.cols() != cfg.arch.input_dim)
    fail(ErrorKind::Config, "config.arch.input_dim: " + std::to_string(cfg.arch.input_dim) +
                                " does not match the data dimension " +
                                std::to_string(data.train.x.cols()));
  if (data.train.num_classes > cfg.arch.num_classes)
    fail(ErrorKind::Config, "config.arch.num_classes: " + std::to_string(cfg.arch.num_classes) +
                                " is smaller than the " + std::to_string(data.train.num_classes) +
                                " classes in the data");
  data.train.num_classes = cfg.arch.num_classes;
  data.test.num_classes = cfg.arch.num_classes;
  return data;
}

namespace {

// Exclusive handle on an output directory. Files are registered as they
// are written; the manifest is replaced atomically on commit().
class OutputDir {
 public:
  OutputDir(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory " + dir_.string() + ": " + ec.message());
    lock_ = dir_ / ".toolkit.lock";
    fd_ = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        fail(ErrorKind::Io, "output directory " + dir_.string() + " is locked by another run (" +
                                lock_.string() + ")");
      fail(ErrorKind::Io, "cannot create lock file " + lock_.string());
    }
  }

  ~OutputDir() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(lock_, ec);
    }
  }

  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void text(const std::string& name, const std::string& content) {
    const fs::path p = path(name);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
    out << content;
    if (!out) fail(ErrorKind::Io, "failed writing " + p.string());
    files_.push_back(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void checkpoint(const std::string& name, const ResidualNet& net) {
    save(net, path(name));
    files_.push_back(name);
  }

  void commit() {
    json manifest = {{"schema", kReportSchema}, {"commands", json::object()}};
    const fs::path p = path("manifest.json");
    if (std::ifstream in(p); in) {
      try {
        json previous = json::parse(in);
        if (previous.contains("commands") && previous["commands"].is_object())
          manifest["commands"] = previous["commands"];
      } catch (const json::exception&) {
      }
    }
    manifest["commands"][command_] = {{"files", files_}};
    const fs::path tmp = path("manifest.json.tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << manifest.dump(2) << "\n";
      if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
  }

 private:
  fs::path dir_;
  std::string command_;
  fs::path lock_;
  int fd_ = -1;
  std::vector<std::string> files_;
};

ResidualNet load_checked(const fs::path& path, const ExperimentConfig& cfg) {
  ResidualNet net = load(path);
  if (net.spec.input_dim != cfg.arch.input_dim || net.spec.num_classes != cfg.arch.num_classes)
    fail(ErrorKind::Config, "checkpoint " + path.string() +
                                " is incompatible with config.arch (input_dim/num_classes differ)");
  return net;
}

fs::path checkpoint_or(const RunOptions& opts, std::size_t index, const fs::path& fallback) {
  return index < opts.checkpoints.size() ? opts.checkpoints[index] : fallback;
}

json timing_json(std::chrono::steady_clock::time_point start) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return {{"wall_clock_s", secs},
          {"finished_unix_s", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
}

json net_summary(const ResidualNet& net, double accuracy) {
  const FlopCount c = count_flops(net);
  json log = json::array();
  for (const BlockId& id : net.removal_log) log.push_back(block_json(id));
  return {{"accuracy", accuracy},
          {"flops", c.per_sample_flops},
          {"params", c.params},
          {"blocks", net.block_count()},
          {"hidden_units", hidden_units(net)},
          {"removal_log", log}};
}

json latency_json(const LatencyStats& s) {
  return {{"mean_ms", s.mean_ms},     {"median_ms", s.median_ms}, {"std_ms", s.std_ms},
          {"runs", s.runs},           {"n_samples", s.n_samples},
          {"speedup_vs_baseline", s.speedup_vs_baseline}, {"timings_ms", s.timings_ms}};
}

std::string timings_csv(const LatencyStats& s) {
  std::ostringstream out;
  out << "run_index,ms\n";
  for (std::size_t i = 0; i < s.timings_ms.size(); ++i)
    out << i << ',' << fmt_double(s.timings_ms[i]) << '\n';
  return out.str();
}

void cmd_train(const ExperimentConfig& cfg, OutputDir& out) {
  const DataSplit data = load_data(cfg);
  const TrainResult result = train(build(cfg.arch), data.train, cfg.train, &data.test);
  out.checkpoint("model.ckpt", result.net);

  const auto& h = result.history;
  std::ostringstream csv;
  csv << "epoch,train_loss,train_accuracy,test_accuracy\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e)
    csv << e + 1 << ',' << fmt_double(h.train_loss[e]) << ',' << fmt_double(h.train_accuracy[e])
        << ',' << fmt_double(h.test_accuracy[e]) << '\n';
  out.text("train_history.csv", csv.str());
  out.json_file("train_history.json",
                {{"schema", kReportSchema},
                 {"toolkit_version", kToolkitVersion},
                 {"config", to_json(cfg)},
                 {"train_loss", h.train_loss},
                 {"train_accuracy", h.train_accuracy},
                 {"test_accuracy", h.test_accuracy},
                 {"model", net_summary(result.net, evaluate(result.net, data.test))}});
}

void cmd_prune(const ExperimentConfig& cfg, const RunOptions& opts, OutputDir& out) {
  const DataSplit data = load_data(cfg);
  const ResidualNet net = load_checked(checkpoint_or(opts, 0, out.path("model.ckpt")), cfg);
  PruneResult result = prune_iterative(net, data, cfg.prune,
                                       [&](const PruneRecord& r, const ResidualNet& n) {
                                         char name[64];
                                         std::snprintf(name, sizeof(name), "prune_iter_%02zu.ckpt",
                                                       r.iteration);
                                         out.checkpoint(name, n);
                                       });
  out.checkpoint("pruned.ckpt", result.net);
  json trace = to_json(result.trace);
  trace["toolkit_version"] = kToolkitVersion;
  if (cfg.l1_fraction > 0.0) {
    const ResidualNet filtered = l1_filter_prune(result.net, cfg.l1_fraction);
    const double acc_removed = evaluate(filtered, data.test);
    TrainConfig ft = cfg.prune.finetune;
    ft.seed = derive_seed(cfg.prune.finetune.seed, 0x11);
    const ResidualNet tuned = finetune(filtered, data.train, ft);
    out.checkpoint("pruned_l1.ckpt", tuned);
    const FlopCount c = count_flops(tuned);
    trace["l1"] = {{"fraction", cfg.l1_fraction},
                   {"units_removed", hidden_units(result.net) - hidden_units(tuned)},
                   {"acc_after_removal", acc_removed},
                   {"acc_after_finetune", evaluate(tuned, data.test)},
                   {"flops", c.per_sample_flops},
                   {"params", c.params}};
  }
  out.json_file("prune_trace.json", trace);
  out.text("prune_trace.csv", trace_csv(result.trace));
}

void cmd_eval(const ExperimentConfig& cfg, const RunOptions& opts, OutputDir& out) {
  const DataSplit data = load_data(cfg);
  const ResidualNet unpruned = load_checked(checkpoint_or(opts, 0, out.path("model.ckpt")), cfg);
  fs::path pruned_path = checkpoint_or(opts, 1, out.path("pruned.ckpt"));
  if (opts.checkpoints.size() == 1 || !fs::exists(pruned_path))
    pruned_path = checkpoint_or(opts, 0, out.path("model.ckpt"));
  const ResidualNet pruned = load_checked(pruned_path, cfg);

  const double acc_u = evaluate(unpruned, data.test);
  const double acc_p = evaluate(pruned, data.test);
  const FlopCount fu = count_flops(unpruned);
  const FlopCount fp = count_flops(pruned);

  const RobustnessReport rob = robustness_report(unpruned, pruned, data.test,
                                                 cfg.eval.fgsm_epsilons, cfg.eval.corruption);
  json rob_json = json::array();
  std::ostringstream rob_csv;
  rob_csv << "attack,parameter,acc_unpruned,acc_pruned,delta_pp\n";
  for (const auto& e : rob.entries) {
    rob_json.push_back({{"attack", e.attack}, {"parameter", e.parameter},
                        {"acc_unpruned", e.acc_unpruned}, {"acc_pruned", e.acc_pruned},
                        {"delta_pp", e.delta_pp}});
    rob_csv << e.attack << ',' << fmt_double(e.parameter) << ',' << fmt_double(e.acc_unpruned)
            << ',' << fmt_double(e.acc_pruned) << ',' << fmt_double(e.delta_pp) << '\n';
  }

  const std::size_t ft_epochs = std::max<std::size_t>(cfg.prune.finetune.epochs, 1);
  const Co2Estimate co2_u = co2_estimate(
      training_flops(fu.per_sample_flops, data.train.size(), ft_epochs), cfg.eval.co2);
  const Co2Estimate co2_p = co2_estimate(
      training_flops(fp.per_sample_flops, data.train.size(), ft_epochs), cfg.eval.co2);
  auto co2_json = [](const Co2Estimate& e) {
    return json{{"flops_total", e.flops_total},         {"assumed_throughput", e.assumed_throughput},
                {"assumed_power_w", e.assumed_power_w}, {"assumed_intensity", e.assumed_intensity},
                {"energy_kwh", e.energy_kwh},           {"co2_kg", e.co2_kg}};
  };

  json trace = nullptr;
  if (std::ifstream in(out.path("prune_trace.json")); in) {
    try {
      trace = json::parse(in);
    } catch (const json::exception&) {
      trace = nullptr;
    }
  }

  json report = {
      {"schema", kReportSchema},
      {"toolkit_version", kToolkitVersion},
      {"config", to_json(cfg)},
      {"unpruned", net_summary(unpruned, acc_u)},
      {"pruned", net_summary(pruned, acc_p)},
      {"delta_accuracy_pp", (acc_p - acc_u) * 100.0},
      {"flop_reduction_pct",
       (1.0 - static_cast<double>(fp.per_sample_flops) / static_cast<double>(fu.per_sample_flops)) * 100.0},
      {"param_reduction_pct",
       (1.0 - static_cast<double>(fp.params) / static_cast<double>(fu.params)) * 100.0},
      {"prune_trace", trace},
      {"robustness", rob_json},
      {"co2",
       {{"phase", "finetune"},
        {"epochs", ft_epochs},
        {"samples", data.train.size()},
        {"unpruned", co2_json(co2_u)},
        {"pruned", co2_json(co2_p)},
        {"reduction_pct", co2_reduction(co2_u, co2_p) * 100.0}}},
  };
  out.json_file("report.json", report);
  out.text("robustness.csv", rob_csv.str());

  if (cfg.eval.latency.in_eval) {
    const ResidualNet* nets[] = {&unpruned, &pruned};
    auto stats = measure_latency_interleaved(nets, cfg.eval.latency.options);
    stats[1].speedup_vs_baseline = stats[0].mean_ms / stats[1].mean_ms;
    out.text("latency_raw_unpruned.csv", timings_csv(stats[0]));
    out.text("latency_raw_pruned.csv", timings_csv(stats[1]));
    out.json_file("report_latency.json", {{"schema", kReportSchema},
                                          {"unpruned", latency_json(stats[0])},
                                          {"pruned", latency_json(stats[1])}});
  }
}

void cmd_latency(const ExperimentConfig& cfg, const RunOptions& opts, OutputDir& out) {
  const ResidualNet base = load_checked(checkpoint_or(opts, 0, out.path("model.ckpt")), cfg);
  const std::size_t base_units = hidden_units(base);
  std::vector<PrunedVariant> layer_steps;
  if (opts.checkpoints.size() > 1) {
    for (std::size_t i = 1; i < opts.checkpoints.size(); ++i) {
      ResidualNet n = load_checked(opts.checkpoints[i], cfg);
      const std::size_t removed = base_units - hidden_units(n);
      layer_steps.push_back({std::move(n), removed});
    }
  } else {
    const DataSplit data = load_data(cfg);
    const Matrix x_score = scoring_sample(data.train, cfg.prune);
    std::vector<std::size_t> steps = cfg.eval.latency.layer_steps;
    std::sort(steps.begin(), steps.end());
    ResidualNet current = base;
    std::size_t removed_blocks = 0;
    for (std::size_t target : steps) {
      while (removed_blocks < target && !candidate_blocks(current, cfg.prune.stage_cap).empty()) {
        current = prune_one(current, x_score, cfg.prune.kernel, cfg.prune.stage_cap,
                            resolve_threads(cfg.prune.threads)).net;
        ++removed_blocks;
      }
      if (removed_blocks < target) break;
      layer_steps.push_back({current, base_units - hidden_units(current)});
    }
  }
  std::vector<PrunedVariant> filter_steps;
  for (const auto& step : layer_steps) {
    try {
      filter_steps.push_back({l1_filter_prune_units(base, step.neurons_removed), step.neurons_removed});
    } catch (const Error&) {
      // a block would be emptied; no filter counterpart at this size
    }
  }
  const LatencyComparison cmp = latency_compare(base, layer_steps, filter_steps,
                                                cfg.eval.latency.options, cfg.eval.latency.tolerance);
  std::ostringstream csv;
  csv << "neurons_removed,layer_speedup,filter_speedup\n";
  json points = json::array();
  for (const auto& p : cmp.points) {
    csv << p.layer_neurons_removed << ',' << fmt_double(p.layer_speedup) << ','
        << fmt_double(p.filter_speedup) << '\n';
    points.push_back({{"layer_neurons_removed", p.layer_neurons_removed},
                      {"filter_neurons_removed", p.filter_neurons_removed},
                      {"layer_speedup", p.layer_speedup},
                      {"filter_speedup", p.filter_speedup},
                      {"layer", latency_json(p.layer)},
                      {"filter", latency_json(p.filter)}});
  }
  out.text("latency.csv", csv.str());
  out.json_file("latency.json", {{"schema", kReportSchema},
                                 {"toolkit_version", kToolkitVersion},
                                 {"tolerance", cfg.eval.latency.tolerance},
                                 {"base", latency_json(cmp.base)},
                                 {"points", points}});
}

void cmd_oracle(const ExperimentConfig& cfg, const RunOptions& opts, OutputDir& out) {
  const DataSplit data = load_data(cfg);
  const ResidualNet net = load_checked(checkpoint_or(opts, 0, out.path("model.ckpt")), cfg);
  const Matrix x_score = scoring_sample(data.train, cfg.prune);
  const ScoringResult scored = score_candidates(net, x_score, cfg.prune.kernel, cfg.prune.stage_cap,
                                                resolve_threads(cfg.prune.threads));
  const auto oracle = oracle_rank(net, data, cfg.oracle_finetune, cfg.prune.stage_cap);

  std::vector<double> cka_values, score_values, accuracies;
  std::ostringstream csv;
  csv << "stage,position,score,cka,degenerate,oracle_accuracy\n";
  json entries = json::array();
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    const auto& s = scored.scores[i];
    cka_values.push_back(s.similarity.cka);
    score_values.push_back(s.similarity.score);
    accuracies.push_back(oracle[i].accuracy);
    csv << s.id.stage << ',' << s.id.position << ',' << fmt_double(s.similarity.score) << ','
        << fmt_double(s.similarity.cka) << ',' << (s.similarity.degenerate ? 1 : 0) << ','
        << fmt_double(oracle[i].accuracy) << '\n';
    entries.push_back({{"stage", s.id.stage}, {"position", s.id.position},
                       {"score", s.similarity.score}, {"cka", s.similarity.cka},
                       {"degenerate", s.similarity.degenerate},
                       {"oracle_accuracy", oracle[i].accuracy}});
  }
  out.text("oracle.csv", csv.str());
  out.json_file("oracle.json", {{"schema", kReportSchema},
                                {"toolkit_version", kToolkitVersion},
                                {"config", to_json(cfg)},
                                {"spearman_cka_vs_accuracy", spearman(cka_values, accuracies)},
                                {"spearman_score_vs_accuracy", spearman(score_values, accuracies)},
                                {"entries", entries}});
}

}  // namespace

void run_command(const std::string& command, const ExperimentConfig& cfg,
                 const RunOptions& options) {
  static const std::set<std::string> known{"train", "prune", "eval", "latency", "oracle"};
  if (!known.count(command))
    fail(ErrorKind::InvalidArgument, "unknown command \"" + command + "\"");
  const auto start = std::chrono::steady_clock::now();
  OutputDir out(options.output_dir.value_or(cfg.output_dir), command);
  if (command == "train") cmd_train(cfg, out);
  if (command == "prune") cmd_prune(cfg, options, out);
  if (command == "eval") cmd_eval(cfg, options, out);
  if (command == "latency") cmd_latency(cfg, options, out);
  if (command == "oracle") cmd_oracle(cfg, options, out);
  out.json_file(command + "_timing.json", timing_json(start));
  out.commit();
}

}  // namespace ckaprune
