/* Copyright 2026 The chanprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chanprune/engine.hpp"
#include "chanprune/error.hpp"
#include "chanprune/flops.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/metrics.hpp"
#include "chanprune/plan.hpp"
#include "chanprune/random.hpp"
#include "chanprune/sensitivity.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string arch;
  std::string weights;
  std::string data;
  std::string labels;
  std::string score_data;
  std::string score_labels;
  std::string plan;
  std::string out;
  std::string json_out;
  std::string report_out;
  std::string out_dir;
  std::string metric = "gsd";
  std::vector<std::string> metrics;
  std::vector<std::string> layers;
  std::vector<double> ratios;
  std::optional<double> ratio;
  std::string capture = "post";
  std::string synthetic;
  double alpha = 2.0;
  std::size_t k = 1;
  std::size_t cycles = 1;
  std::size_t samples = 10000;
  std::uint32_t classes = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  double rho = 1e-4;
  double sigma = 1.0;
  std::size_t mmd_cap = 256;
  bool check = false;
};

// ---------------------------------------------------------------------------
// Input helpers

struct Model {
  NetworkGraph graph;
  WeightStore weights;
};

Model load_model(const Options& o) {
  NetworkGraph graph = load_graph(o.arch);
  WeightStore weights = load_weights(o.weights);
  validate_weights(graph, weights);
  return {std::move(graph), std::move(weights)};
}

Dataset validation_set(const Options& o) { return load_dataset(o.data, o.labels); }

Dataset scoring_set(const Options& o) {
  if (o.score_data.empty() != o.score_labels.empty()) {
    throw UsageError("--score-data and --score-labels go together");
  }
  if (o.score_data.empty()) return validation_set(o);
  return load_dataset(o.score_data, o.score_labels);
}

MetricConfig metric_config(const Options& o) {
  MetricConfig cfg;
  cfg.ridge_rho = o.rho;
  cfg.kernel_sigma = o.sigma;
  cfg.mmd_max_per_class = o.mmd_cap;
  cfg.mmd_seed = o.seed;
  cfg.validate();
  return cfg;
}

CapturePoint capture_point(const Options& o) {
  return o.capture == "pre" ? CapturePoint::kPre : CapturePoint::kPost;
}

RunConfig run_config(const Options& o) {
  RunConfig cfg;
  cfg.alpha = o.alpha;
  cfg.k = o.k;
  cfg.metric = parse_metric(o.metric);
  cfg.metric_config = metric_config(o);
  cfg.scoring_samples = o.samples;
  cfg.seed = o.seed;
  cfg.capture = capture_point(o);
  cfg.threads = o.threads;
  if (o.ratio) cfg.ratio_baseline = *o.ratio / 100.0;
  cfg.validate();
  return cfg;
}

std::uint32_t class_count(const NetworkGraph& graph) {
  return static_cast<std::uint32_t>(graph.output_shape().size());
}

Dataset take_subset(const Dataset& data, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || data.size() <= cap) return data;
  Rng rng(mix_seed(seed, std::string_view("scoring-subsample")));
  const auto picked = sample_indices(data.size(), cap, rng);
  const std::size_t sample = data.inputs.size() / data.size();
  std::vector<float> inputs;
  LabelFile labels;
  for (std::size_t i : picked) {
    const auto src = data.inputs.data().subspan(i * sample, sample);
    inputs.insert(inputs.end(), src.begin(), src.end());
    labels.labels.push_back(data.labels.labels[i]);
  }
  std::vector<std::size_t> dims = data.inputs.dims();
  dims[0] = picked.size();
  return Dataset{Tensor(std::move(dims), std::move(inputs)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Output helpers

void emit(const Options& o, std::ostream& out, const std::string& text,
          const std::string& path) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw UsageError("cannot open file for writing: " + path);
  file << text;
  if (!file) throw UsageError("failed writing " + path);
  (void)o;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw FormatError("output check: expected header \"" + header + "\"");
  }
  const std::size_t columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) throw FormatError("output check: malformed row \"" + line + "\"");
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_number(const std::string& cell) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size() || !std::isfinite(v)) {
    throw FormatError("output check: bad number \"" + cell + "\"");
  }
  return v;
}

void check_rows(const std::string& text, const std::string& header, std::size_t rows,
                const std::vector<std::size_t>& numeric_columns) {
  const auto parsed = parse_csv(text, header);
  if (parsed.size() != rows) {
    throw FormatError("output check: expected " + std::to_string(rows) + " rows, found " +
                      std::to_string(parsed.size()));
  }
  for (const auto& row : parsed) {
    for (std::size_t c : numeric_columns) parse_number(row[c]);
  }
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

void save_model(const fs::path& dir, const NetworkGraph& graph, const WeightStore& weights) {
  fs::create_directories(dir);
  save_graph(dir / "arch.json", graph);
  save_weights(dir / "weights", weights);
}

void check_model(const fs::path& dir, const NetworkGraph& graph, const WeightStore& weights) {
  const NetworkGraph g = load_graph(dir / "arch.json");
  const WeightStore w = load_weights(dir / "weights" / "weights.json");
  validate_weights(g, w);
  if (!(g == graph) || !(w == weights)) {
    throw FormatError("output check: saved model differs from the pruned model");
  }
}

// ---------------------------------------------------------------------------
// Subcommands

std::vector<std::string> score_targets(const NetworkGraph& graph, const Options& o) {
  if (!o.layers.empty()) return o.layers;
  std::vector<std::string> ids;
  for (std::size_t idx : graph.prunable_indices()) ids.push_back(graph.layer(idx).id);
  if (ids.empty()) throw UsageError("architecture has no prunable layers; pass --layer");
  return ids;
}

int cmd_score(const Options& o, std::ostream& out) {
  const Model model = load_model(o);
  const Dataset data = take_subset(scoring_set(o), o.samples, o.seed);
  const Metric metric = parse_metric(o.metric);
  const MetricConfig cfg = metric_config(o);
  CaptureOptions capture;
  capture.point = capture_point(o);
  capture.threads = o.threads;
  std::vector<ChannelScore> all;
  for (const auto& id : score_targets(model.graph, o)) {
    const Tensor acts = capture_activations(model.graph, model.weights, data, id, capture);
    try {
      auto scores = score_layer(acts, data.labels, class_count(model.graph), id, metric, cfg,
                                {o.threads, o.seed});
      all.insert(all.end(), scores.begin(), scores.end());
    } catch (const NumericError& e) {
      throw NumericError("layer \"" + id + "\": " + e.what());
    }
  }
  std::ostringstream text;
  write_scores_csv(text, all);
  emit(o, out, text.str(), o.out);
  if (o.check) {
    std::istringstream in(text.str());
    if (read_scores_csv(in).size() != all.size()) throw FormatError("output check: row count");
  }
  return kExitOk;
}

int cmd_uniform_prune(const Options& o, std::ostream& out) {
  if (o.ratios.empty()) throw UsageError("--ratio is required");
  for (double r : o.ratios) {
    if (!(r > 0.0 && r < 100.0)) throw UsageError("--ratio must lie in (0, 100)");
  }
  const Model model = load_model(o);
  const Dataset val = validation_set(o);
  const Dataset scoring = take_subset(scoring_set(o), o.samples, o.seed);
  const Metric metric = parse_metric(o.metric);
  const MetricConfig cfg = metric_config(o);
  CaptureOptions capture;
  capture.point = capture_point(o);
  capture.threads = o.threads;

  // Rank every prunable layer once on the unpruned model.
  ChannelRankings rankings;
  for (std::size_t idx : model.graph.prunable_indices()) {
    const std::string& id = model.graph.layer(idx).id;
    const Tensor acts = capture_activations(model.graph, model.weights, scoring, id, capture);
    const auto scores = score_layer(acts, scoring.labels, class_count(model.graph), id, metric,
                                    cfg, {o.threads, o.seed});
    rankings[id] = rank_channels(scores, scores.size());
  }

  std::ostringstream text;
  text << "ratio,metric,removed_channels,flops,accuracy\n";
  for (double r : o.ratios) {
    PruningPlan plan;
    plan.metric = o.metric;
    std::size_t removed = 0;
    for (std::size_t idx : model.graph.prunable_indices()) {
      const std::string& id = model.graph.layer(idx).id;
      const std::size_t channels = model.graph.shape(idx).channels;
      const auto n = std::min(static_cast<std::size_t>(std::floor(r * static_cast<double>(channels) / 100.0)),
                              channels - 1);
      if (n == 0) continue;
      std::vector<std::size_t> picked(rankings[id].begin(),
                                      rankings[id].begin() + static_cast<std::ptrdiff_t>(n));
      std::sort(picked.begin(), picked.end());
      plan.entries.push_back({id, std::move(picked)});
      removed += n;
    }
    compute_expected_deltas(model.graph, plan);
    const auto [graph, weights] = apply_plan_weights(model.graph, model.weights, plan);
    const double acc = evaluate_accuracy(graph, weights, val, o.threads);
    text << format_double(r) << ',' << o.metric << ',' << removed << ',' << flop_count(graph)
         << ',' << format_double(acc) << '\n';
    if (!o.out_dir.empty()) {
      const fs::path dir = fs::path(o.out_dir) / ("ratio_" + format_double(r));
      save_model(dir, graph, weights);
      save_plan(dir / "plan.json", plan);
      if (o.check) check_model(dir, graph, weights);
    }
  }
  emit(o, out, text.str(), o.out);
  if (o.check) check_rows(text.str(), "ratio,metric,removed_channels,flops,accuracy",
                          o.ratios.size(), {0, 2, 3, 4});
  return kExitOk;
}

std::string report_csv(const SensitivityReport& report) {
  std::ostringstream text;
  write_report_csv(text, report);
  return text.str();
}

void check_report(const std::string& csv, const SensitivityReport& report) {
  check_rows(csv, "layer_id,n_channels,floss,acc,baseline_acc", report.rows.size(), {1, 2, 3, 4});
}

int cmd_sensitivity(const Options& o, std::ostream& out) {
  const Model model = load_model(o);
  const RunConfig cfg = run_config(o);
  const SensitivityReport report =
      analyze(model.graph, model.weights, validation_set(o), scoring_set(o), cfg);
  const std::string csv = report_csv(report);
  emit(o, out, csv, o.out);
  if (!o.json_out.empty()) emit(o, out, report_to_json(report), o.json_out);
  if (o.check) check_report(csv, report);
  return kExitOk;
}

void check_plan(const std::string& text, const NetworkGraph& graph, const PruningPlan& plan) {
  PruningPlan back = parse_plan_json(text);
  validate_plan(graph, back);
  PruningPlan recomputed = back;
  compute_expected_deltas(graph, recomputed);
  if (!(back == plan) || recomputed.expected_flop_delta != plan.expected_flop_delta ||
      recomputed.expected_param_delta != plan.expected_param_delta) {
    throw FormatError("output check: plan does not round-trip");
  }
}

int cmd_plan(const Options& o, std::ostream& out) {
  const Model model = load_model(o);
  const RunConfig cfg = run_config(o);
  const SensitivityReport report =
      analyze(model.graph, model.weights, validation_set(o), scoring_set(o), cfg);
  const PruningPlan plan = select_and_plan(model.graph, report, cfg);
  const std::string text = plan_to_json(plan);
  emit(o, out, text, o.out);
  if (!o.report_out.empty()) emit(o, out, report_csv(report), o.report_out);
  if (!o.json_out.empty()) emit(o, out, report_to_json(report), o.json_out);
  if (o.check) check_plan(text, model.graph, plan);
  return kExitOk;
}

int cmd_prune(const Options& o, std::ostream& out) {
  const Model model = load_model(o);
  const PruningPlan plan = load_plan(o.plan);
  validate_plan(model.graph, plan);
  PruningPlan recomputed = plan;
  compute_expected_deltas(model.graph, recomputed);
  if (recomputed.expected_flop_delta != plan.expected_flop_delta ||
      recomputed.expected_param_delta != plan.expected_param_delta) {
    throw FormatError("plan deltas do not match this architecture (expected " +
                      std::to_string(plan.expected_flop_delta) + " FLOPs, recomputed " +
                      std::to_string(recomputed.expected_flop_delta) + ")");
  }
  const auto [graph, weights] = apply_plan_weights(model.graph, model.weights, plan);
  save_model(o.out_dir, graph, weights);
  if (o.check) check_model(o.out_dir, graph, weights);
  std::ostringstream text;
  text << "flops_before,flops_after,params_before,params_after\n"
       << flop_count(model.graph) << ',' << flop_count(graph) << ',' << param_count(model.graph)
       << ',' << param_count(graph) << '\n';
  emit(o, out, text.str(), o.out);
  return kExitOk;
}

int cmd_iterate(const Options& o, std::ostream& out, std::ostream& err) {
  const Model model = load_model(o);
  const RunConfig cfg = run_config(o);
  const IterationOutcome outcome = iterate(model.graph, model.weights, validation_set(o),
                                           scoring_set(o), cfg, o.cycles);
  std::ostringstream text;
  text << "cycle,flops,params,baseline_acc,layers_pruned\n";
  for (std::size_t i = 0; i < outcome.cycles.size(); ++i) {
    const CycleResult& c = outcome.cycles[i];
    text << i + 1 << ',' << flop_count(c.graph) << ',' << param_count(c.graph) << ','
         << format_double(c.report.baseline_accuracy) << ',' << c.plan.entries.size() << '\n';
    if (!o.out_dir.empty()) {
      const fs::path dir = fs::path(o.out_dir) / ("cycle_" + std::to_string(i + 1));
      save_model(dir, c.graph, c.weights);
      save_plan(dir / "plan.json", c.plan);
      emit(o, out, report_csv(c.report), (dir / "report.csv").string());
      emit(o, out, report_to_json(c.report), (dir / "report.json").string());
      if (o.check) check_model(dir, c.graph, c.weights);
    }
  }
  emit(o, out, text.str(), o.out);
  if (outcome.error) {
    err << "chanprune: " << *outcome.error << '\n';
    switch (outcome.error_kind) {
      case ErrorKind::kUsage: return kExitUsage;
      case ErrorKind::kFormat: return kExitFormat;
      case ErrorKind::kNumeric: return kExitNumeric;
    }
  }
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Model model = load_model(o);
  const Dataset val = validation_set(o);
  const double acc = evaluate_accuracy(model.graph, model.weights, val, o.threads);
  std::ostringstream text;
  text << "samples,accuracy\n" << val.size() << ',' << format_double(acc) << '\n';
  emit(o, out, text.str(), o.out);
  return kExitOk;
}

int cmd_floss(const Options& o, std::ostream& out) {
  const NetworkGraph graph = load_graph(o.arch);
  const FlossTable table = pruning_counts(graph, o.alpha);
  std::ostringstream text;
  write_floss_csv(text, table);
  emit(o, out, text.str(), o.out);
  if (o.check) check_rows(text.str(), "layer_id,channels,floss,n_channels", table.entries.size(),
                          {1, 2, 3});
  return kExitOk;
}

int cmd_count(const Options& o, std::ostream& out) {
  const NetworkGraph graph = load_graph(o.arch);
  std::ostringstream text;
  text << "layer_id,kind,flops,params\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const std::uint64_t f = layer_flops(graph, i);
    const std::uint64_t p = layer_params(graph, i);
    if (f == 0 && p == 0) continue;
    text << graph.layer(i).id << ',' << layer_kind_name(graph.layer(i).kind) << ',' << f << ','
         << p << '\n';
  }
  text << "total,," << flop_count(graph) << ',' << param_count(graph) << '\n';
  emit(o, out, text.str(), o.out);
  return kExitOk;
}

struct SyntheticShape {
  std::size_t samples, channels, width, height;
};

SyntheticShape parse_synthetic(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    unsigned long long x = 0;
    try {
      x = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || x == 0) throw UsageError("--synthetic expects N,C,W,H");
    v.push_back(static_cast<std::size_t>(x));
  }
  if (v.size() != 4) throw UsageError("--synthetic expects N,C,W,H");
  return {v[0], v[1], v[2], v[3]};
}

// One channel of synthetic activations: class-dependent offset plus uniform
// noise, generated on demand so only a single channel is ever resident.
ActivationSet synthetic_channel(const SyntheticShape& s, std::uint32_t classes,
                                std::uint64_t seed, std::size_t channel) {
  Rng rng(mix_seed(seed, channel));
  const std::size_t plane = s.width * s.height;
  std::vector<std::uint32_t> labels(s.samples);
  for (std::size_t i = 0; i < s.samples; ++i) labels[i] = static_cast<std::uint32_t>(i % classes);
  std::vector<double> offsets(classes);
  for (auto& x : offsets) x = uniform_real(rng);
  Tensor maps = Tensor::zeros({s.samples, s.width, s.height});
  auto data = maps.data();
  for (std::size_t i = 0; i < s.samples; ++i) {
    for (std::size_t k = 0; k < plane; ++k) {
      data[i * plane + k] = static_cast<float>(offsets[labels[i]] + uniform_real(rng) - 0.5);
    }
  }
  return ActivationSet(std::move(maps), std::move(labels), classes);
}

int cmd_bench(const Options& o, std::ostream& out) {
  std::vector<Metric> metrics;
  for (const auto& name : o.metrics.empty() ? std::vector<std::string>{"gsd", "di"} : o.metrics) {
    metrics.push_back(parse_metric(name));
  }
  const MetricConfig cfg = metric_config(o);
  using Clock = std::chrono::steady_clock;
  std::ostringstream text;
  text << "layer_id,metric,wall_seconds\n";
  text << std::setprecision(6);
  std::size_t rows = 0;

  if (!o.synthetic.empty()) {
    if (!o.arch.empty()) throw UsageError("--synthetic and --arch are exclusive");
    if (o.classes < 2) throw UsageError("--classes must be at least 2");
    const SyntheticShape shape = parse_synthetic(o.synthetic);
    std::vector<double> seconds(metrics.size(), 0.0);
    for (std::size_t c = 0; c < shape.channels; ++c) {
      const ActivationSet set = synthetic_channel(shape, o.classes, o.seed, c);
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        if (metrics[m] == Metric::kRandom) continue;
        const auto start = Clock::now();
        volatile double sink = score_channel(set, metrics[m], cfg);
        (void)sink;
        seconds[m] += std::chrono::duration<double>(Clock::now() - start).count();
      }
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      text << "synthetic," << metric_name(metrics[m]) << ',' << seconds[m] << '\n';
      ++rows;
    }
  } else {
    const Model model = load_model(o);
    const Dataset data = take_subset(scoring_set(o), o.samples, o.seed);
    CaptureOptions capture;
    capture.point = capture_point(o);
    capture.threads = o.threads;
    for (const auto& id : score_targets(model.graph, o)) {
      const Tensor acts = capture_activations(model.graph, model.weights, data, id, capture);
      for (Metric metric : metrics) {
        const auto start = Clock::now();
        score_layer(acts, data.labels, class_count(model.graph), id, metric, cfg,
                    {o.threads, o.seed});
        const double s = std::chrono::duration<double>(Clock::now() - start).count();
        text << id << ',' << metric_name(metric) << ',' << s << '\n';
        ++rows;
      }
    }
  }
  emit(o, out, text.str(), o.out);
  if (o.check) check_rows(text.str(), "layer_id,metric,wall_seconds", rows, {2});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument wiring

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--arch", o.arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--weights", o.weights, "weights manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);
}

void add_data(CLI::App* sub, Options& o, bool scoring) {
  sub->add_option("--data", o.data, "input tensor [N, C, W, H]")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--labels", o.labels, "label file")->required()->check(CLI::ExistingFile);
  if (scoring) {
    sub->add_option("--score-data", o.score_data, "scoring inputs (default: --data)")
        ->check(CLI::ExistingFile);
    sub->add_option("--score-labels", o.score_labels, "scoring labels (default: --labels)")
        ->check(CLI::ExistingFile);
    sub->add_option("--samples", o.samples, "scoring subsample size, 0 for all")
        ->capture_default_str();
  }
}

void add_metric(CLI::App* sub, Options& o) {
  sub->add_option("--metric", o.metric, "gsd, gttest, gabssnr, gfdr, di, mmd or random")
      ->capture_default_str();
  sub->add_option("--capture", o.capture, "score pre- or post-activation maps")
      ->check(CLI::IsMember({"pre", "post"}))
      ->capture_default_str();
  sub->add_option("--rho", o.rho, "DI ridge")->capture_default_str();
  sub->add_option("--sigma", o.sigma, "MMD kernel width")->capture_default_str();
  sub->add_option("--mmd-cap", o.mmd_cap, "MMD samples per side")->capture_default_str();
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
  sub->add_option("--threads", o.threads, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out", o.out, "output file (default: stdout)");
  sub->add_flag("--check", o.check, "re-read and validate every file written");
}

void add_schedule(CLI::App* sub, Options& o) {
  sub->add_option("--alpha", o.alpha, "FLOP budget per layer in units of the largest FLOSS")
      ->capture_default_str();
  sub->add_option("--k", o.k, "layers pruned per cycle")->capture_default_str();
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return kExitUsage;
    case ErrorKind::kFormat: return kExitFormat;
    case ErrorKind::kNumeric: return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Channel scoring, FLOP accounting and pruning for CNNs", "chanprune"};
  app.require_subcommand(1);

  auto* score = app.add_subcommand("score", "score the channels of one or more layers");
  add_model(score, o);
  add_data(score, o, true);
  add_metric(score, o);
  add_common(score, o);
  score->add_option("--layer", o.layers, "layer id (repeatable; default: every prunable layer)");

  auto* uniform = app.add_subcommand("uniform-prune",
                                     "remove r% of the lowest-scored channels in every layer");
  add_model(uniform, o);
  add_data(uniform, o, true);
  add_metric(uniform, o);
  add_common(uniform, o);
  uniform->add_option("--ratio", o.ratios, "percent of channels to remove (repeatable)")
      ->required()
      ->delimiter(',');
  uniform->add_option("--out-dir", o.out_dir, "write each pruned model here");

  auto* sens = app.add_subcommand("sensitivity", "FLOP-normalized per-layer sensitivity report");
  add_model(sens, o);
  add_data(sens, o, true);
  add_metric(sens, o);
  add_common(sens, o);
  add_schedule(sens, o);
  sens->add_option("--json", o.json_out, "also write the JSON report");
  sens->add_option("--ratio", o.ratio, "comparison baseline: prune this percent of each layer instead of a FLOP-normalized count");

  auto* plan = app.add_subcommand("plan", "sensitivity analysis followed by top-k selection");
  add_model(plan, o);
  add_data(plan, o, true);
  add_metric(plan, o);
  add_common(plan, o);
  add_schedule(plan, o);
  plan->add_option("--report", o.report_out, "also write the sensitivity CSV");
  plan->add_option("--json", o.json_out, "also write the JSON report");
  plan->add_option("--ratio", o.ratio, "comparison baseline: prune this percent of each layer instead of a FLOP-normalized count");

  auto* prune = app.add_subcommand("prune", "apply a pruning plan to a model");
  add_model(prune, o);
  add_common(prune, o);
  prune->add_option("--plan", o.plan, "plan JSON")->required()->check(CLI::ExistingFile);
  prune->add_option("--out-dir", o.out_dir, "directory for arch.json and weights/")->required();

  auto* iter = app.add_subcommand("iterate", "repeated sensitivity, plan and prune cycles");
  add_model(iter, o);
  add_data(iter, o, true);
  add_metric(iter, o);
  add_common(iter, o);
  add_schedule(iter, o);
  iter->add_option("--cycles", o.cycles, "number of cycles")->capture_default_str();
  iter->add_option("--out-dir", o.out_dir, "write every cycle's artifacts here");

  auto* eval = app.add_subcommand("eval", "top-1 accuracy on a dataset");
  add_model(eval, o);
  add_data(eval, o, false);
  add_common(eval, o);

  auto* floss_cmd = app.add_subcommand("floss", "per-layer FLOSS and channel counts");
  floss_cmd->add_option("--arch", o.arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  add_schedule(floss_cmd, o);
  add_common(floss_cmd, o);

  auto* count = app.add_subcommand("count", "per-layer FLOPs and parameters");
  count->add_option("--arch", o.arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  add_common(count, o);

  auto* bench = app.add_subcommand("bench", "wall time of channel scoring per metric");
  bench->add_option("--arch", o.arch, "architecture JSON")->check(CLI::ExistingFile);
  bench->add_option("--weights", o.weights, "weights manifest JSON")->check(CLI::ExistingFile);
  bench->add_option("--data", o.data, "input tensor")->check(CLI::ExistingFile);
  bench->add_option("--labels", o.labels, "label file")->check(CLI::ExistingFile);
  bench->add_option("--samples", o.samples, "scoring subsample size, 0 for all")
      ->capture_default_str();
  bench->add_option("--layer", o.layers, "layer id (repeatable)");
  bench->add_option("--metric", o.metrics, "metrics to time (repeatable; default gsd,di)")
      ->delimiter(',');
  bench->add_option("--capture", o.capture, "score pre- or post-activation maps")
      ->check(CLI::IsMember({"pre", "post"}));
  bench->add_option("--synthetic", o.synthetic, "N,C,W,H of generated activations");
  bench->add_option("--classes", o.classes, "classes for --synthetic")->capture_default_str();
  bench->add_option("--rho", o.rho, "DI ridge")->capture_default_str();
  bench->add_option("--sigma", o.sigma, "MMD kernel width")->capture_default_str();
  bench->add_option("--mmd-cap", o.mmd_cap, "MMD samples per side")->capture_default_str();
  add_common(bench, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (auto* sub : app.get_subcommands()) out << sub->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "chanprune: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*score) return cmd_score(o, out);
    if (*uniform) return cmd_uniform_prune(o, out);
    if (*sens) return cmd_sensitivity(o, out);
    if (*plan) return cmd_plan(o, out);
    if (*prune) return cmd_prune(o, out);
    if (*iter) return cmd_iterate(o, out, err);
    if (*eval) return cmd_eval(o, out);
    if (*floss_cmd) return cmd_floss(o, out);
    if (*count) return cmd_count(o, out);
    if (*bench) {
      if (o.synthetic.empty() &&
          (o.arch.empty() || o.weights.empty() || o.data.empty() || o.labels.empty())) {
        throw UsageError("bench needs --synthetic or --arch, --weights, --data and --labels");
      }
      return cmd_bench(o, out);
    }
  } catch (const Error& e) {
    err << "chanprune: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return kExitUsage;
}

}  // namespace chanprune::cli
