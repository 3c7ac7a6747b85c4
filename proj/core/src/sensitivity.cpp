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

#include "chanprune/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "chanprune/error.hpp"
#include "chanprune/random.hpp"
#include "json.hpp"

namespace chanprune {
namespace {

Dataset subsample(const Dataset& data, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || data.size() <= cap) return data;
  Rng rng(mix_seed(seed, std::string_view("scoring-subsample")));
  const auto picked = sample_indices(data.size(), cap, rng);
  const std::size_t sample = data.inputs.size() / data.size();
  std::vector<float> inputs;
  inputs.reserve(picked.size() * sample);
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

[[noreturn]] void rethrow_for_layer(const std::string& layer_id) {
  try {
    throw;
  } catch (const Error& e) {
    const std::string what = "layer \"" + layer_id + "\": " + e.what();
    switch (e.kind()) {
      case ErrorKind::kUsage: throw UsageError(what);
      case ErrorKind::kFormat: throw FormatError(what);
      case ErrorKind::kNumeric: throw NumericError(what);
    }
    throw;
  }
}

}  // namespace

void RunConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be positive");
  if (k == 0) throw UsageError("k must be at least 1");
  if (threads < 1) throw UsageError("threads must be at least 1");
  if (ratio_baseline && !(*ratio_baseline > 0.0 && *ratio_baseline < 1.0)) {
    throw UsageError("ratio baseline must lie in (0, 1)");
  }
  metric_config.validate();
}

SensitivityReport analyze(const NetworkGraph& graph, const WeightStore& weights,
                          const Dataset& validation, const Dataset& scoring,
                          const RunConfig& cfg) {
  cfg.validate();
  validate_weights(graph, weights);
  validation.validate();
  scoring.validate();

  SensitivityReport report;
  report.config = cfg;
  report.table = pruning_counts(graph, cfg.alpha);
  if (cfg.ratio_baseline) {
    for (auto& e : report.table.entries) {
      const double n = std::round(*cfg.ratio_baseline * static_cast<double>(e.channels));
      e.n_channels = static_cast<std::size_t>(
          std::clamp(n, 0.0, static_cast<double>(e.channels - 1)));
    }
  }
  report.baseline_flops = flop_count(graph);
  report.baseline_accuracy = evaluate_accuracy(graph, weights, validation, cfg.threads);

  const Dataset scoring_set = subsample(scoring, cfg.scoring_samples, cfg.seed);
  report.scoring_samples_used = scoring_set.size();
  const auto num_classes = static_cast<std::uint32_t>(graph.output_shape().size());

  CaptureOptions capture;
  capture.point = cfg.capture;
  capture.threads = cfg.threads;
  ScoreOptions score_opts;
  score_opts.threads = cfg.threads;
  score_opts.seed = cfg.seed;

  for (const auto& entry : report.table.entries) {
    if (entry.n_channels == 0) {
      report.excluded.push_back(entry.layer_id);
      continue;
    }
    try {
      const Tensor acts =
          capture_activations(graph, weights, scoring_set, entry.layer_id, capture);
      const auto scores = score_layer(acts, scoring_set.labels, num_classes,
                                      entry.layer_id, cfg.metric, cfg.metric_config,
                                      score_opts);
      SensitivityRow row;
      row.layer_id = entry.layer_id;
      row.layer_index = entry.layer_index;
      row.channels = entry.channels;
      row.n_channels = entry.n_channels;
      row.floss = entry.floss;
      row.pruned_channels = rank_channels(scores, entry.n_channels);

      PruningPlan single;
      single.metric = std::string(metric_name(cfg.metric));
      std::vector<std::size_t> sorted = row.pruned_channels;
      std::sort(sorted.begin(), sorted.end());
      single.entries.push_back({entry.layer_id, std::move(sorted)});
      const auto [pruned_graph, pruned_weights] = apply_plan_weights(graph, weights, single);
      row.flop_reduction = report.baseline_flops - flop_count(pruned_graph);
      row.accuracy = evaluate_accuracy(pruned_graph, pruned_weights, validation, cfg.threads);
      report.rows.push_back(std::move(row));
    } catch (const Error&) {
      rethrow_for_layer(entry.layer_id);
    }
  }

  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const SensitivityRow& a, const SensitivityRow& b) {
                     if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                     return a.layer_index < b.layer_index;
                   });
  return report;
}

PruningPlan select_and_plan(const NetworkGraph& graph, const SensitivityReport& report,
                            const RunConfig& cfg) {
  cfg.validate();
  if (cfg.k > report.rows.size()) {
    throw UsageError("k = " + std::to_string(cfg.k) + " exceeds the " +
                     std::to_string(report.rows.size()) + " eligible layers");
  }
  ChannelRankings rankings;
  std::vector<std::string> selected;
  for (std::size_t i = 0; i < cfg.k; ++i) {
    const auto& row = report.rows[i];
    selected.push_back(row.layer_id);
    rankings[row.layer_id] = row.pruned_channels;
  }
  PlanProvenance provenance{cfg.alpha, cfg.k, report.scoring_samples_used};
  return build_plan(graph, report.table, rankings, selected, metric_name(cfg.metric),
                    provenance);
}

IterationOutcome iterate(const NetworkGraph& graph, const WeightStore& weights,
                         const Dataset& validation, const Dataset& scoring,
                         const RunConfig& cfg, std::size_t cycles) {
  if (cycles == 0) throw UsageError("cycles must be at least 1");
  IterationOutcome outcome;
  NetworkGraph current_graph = graph;
  WeightStore current_weights = weights;
  for (std::size_t cycle = 0; cycle < cycles; ++cycle) {
    try {
      SensitivityReport report =
          analyze(current_graph, current_weights, validation, scoring, cfg);
      PruningPlan plan = select_and_plan(current_graph, report, cfg);
      auto [next_graph, next_weights] =
          apply_plan_weights(current_graph, current_weights, plan);
      if (flop_count(next_graph) >= flop_count(current_graph)) {
        throw NumericError("cycle did not reduce FLOPs");
      }
      current_graph = next_graph;
      current_weights = next_weights;
      outcome.cycles.push_back(CycleResult{std::move(report), std::move(plan),
                                           std::move(next_graph), std::move(next_weights)});
    } catch (const Error& e) {
      outcome.error = "cycle " + std::to_string(cycle + 1) + ": " + e.what();
      outcome.error_kind = e.kind();
      break;
    }
  }
  return outcome;
}

void write_report_csv(std::ostream& out, const SensitivityReport& report) {
  std::ostringstream buf;
  buf << std::setprecision(9);
  buf << "layer_id,n_channels,floss,acc,baseline_acc\n";
  for (const auto& row : report.rows) {
    buf << row.layer_id << ',' << row.n_channels << ',' << row.floss << ','
        << row.accuracy << ',' << report.baseline_accuracy << '\n';
  }
  out << buf.str();
}

std::string report_to_json(const SensitivityReport& report) {
  using nlohmann::json;
  const RunConfig& cfg = report.config;
  json run = {
      {"alpha", cfg.alpha},
      {"k", cfg.k},
      {"metric", std::string(metric_name(cfg.metric))},
      {"seed", cfg.seed},
      {"scoring_samples", cfg.scoring_samples},
      {"capture", cfg.capture == CapturePoint::kPost ? "post" : "pre"},
      {"ridge_rho", cfg.metric_config.ridge_rho},
      {"kernel_sigma", cfg.metric_config.kernel_sigma},
      {"variance_epsilon", cfg.metric_config.variance_epsilon},
      {"mmd_max_per_class", cfg.metric_config.mmd_max_per_class},
      {"mmd_seed", cfg.metric_config.mmd_seed},
  };
  if (cfg.ratio_baseline) run["ratio_baseline"] = *cfg.ratio_baseline;
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"layer_id", row.layer_id},
                    {"n_channels", row.n_channels},
                    {"floss", row.floss},
                    {"flop_reduction", row.flop_reduction},
                    {"acc", row.accuracy},
                    {"channels", row.pruned_channels}});
  }
  json doc = {{"version", 1},
              {"run_config", std::move(run)},
              {"baseline_acc", report.baseline_accuracy},
              {"baseline_flops", report.baseline_flops},
              {"floss_max", report.table.floss_max},
              {"scoring_samples_used", report.scoring_samples_used},
              {"rows", std::move(rows)},
              {"excluded", report.excluded}};
  return doc.dump(2) + "\n";
}

}  // namespace chanprune
