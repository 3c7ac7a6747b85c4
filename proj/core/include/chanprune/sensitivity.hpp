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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chanprune/engine.hpp"
#include "chanprune/error.hpp"
#include "chanprune/flops.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/metrics.hpp"
#include "chanprune/plan.hpp"

namespace chanprune {

struct RunConfig {
  double alpha = 2.0;    // FLOP budget per candidate prune, in units of FLOSS_max
  std::size_t k = 1;     // layers pruned per cycle
  Metric metric = Metric::kGsd;
  MetricConfig metric_config;
  std::size_t scoring_samples = 10000;  // 0 keeps the whole scoring set
  std::uint64_t seed = 0;
  CapturePoint capture = CapturePoint::kPost;
  int threads = 1;
  /// Comparison baseline: n_l = round(ratio * C_l) instead of FLOP-normalized
  /// counts. Not the supported workflow.
  std::optional<double> ratio_baseline;

  void validate() const;
};

struct SensitivityRow {
  std::string layer_id;
  std::size_t layer_index = 0;
  std::size_t channels = 0;
  std::size_t n_channels = 0;
  std::uint64_t floss = 0;
  std::uint64_t flop_reduction = 0;  // FLOP(M) - FLOP(M_l^-n)
  double accuracy = 0.0;
  std::vector<std::size_t> pruned_channels;  // lowest-scored first
};

struct SensitivityReport {
  double baseline_accuracy = 0.0;
  std::uint64_t baseline_flops = 0;
  FlossTable table;
  std::vector<SensitivityRow> rows;    // accuracy descending, ties by layer order
  std::vector<std::string> excluded;   // layers with n_l = 0
  std::size_t scoring_samples_used = 0;
  RunConfig config;
};

/// Evaluates every prunable layer at a FLOP-normalized prune size. The input
/// model is never modified; each candidate prune runs on a copy.
SensitivityReport analyze(const NetworkGraph& graph, const WeightStore& weights,
                          const Dataset& validation, const Dataset& scoring,
                          const RunConfig& cfg);

/// Keeps the k most insensitive layers (highest accuracy, ties by lower layer
/// index) and prunes each one's n_l lowest-scored channels.
PruningPlan select_and_plan(const NetworkGraph& graph, const SensitivityReport& report,
                            const RunConfig& cfg);

struct CycleResult {
  SensitivityReport report;
  PruningPlan plan;
  NetworkGraph graph;
  WeightStore weights;
};

struct IterationOutcome {
  std::vector<CycleResult> cycles;
  std::optional<std::string> error;  // set when a cycle failed; earlier cycles kept
  ErrorKind error_kind = ErrorKind::kNumeric;
};

/// Repeated analyze -> select_and_plan -> apply_plan_weights, re-scoring on the
/// current pruned model each cycle.
IterationOutcome iterate(const NetworkGraph& graph, const WeightStore& weights,
                         const Dataset& validation, const Dataset& scoring,
                         const RunConfig& cfg, std::size_t cycles);

/// `layer_id,n_channels,floss,acc,baseline_acc`, rows in report order.
void write_report_csv(std::ostream& out, const SensitivityReport& report);
std::string report_to_json(const SensitivityReport& report);

}  // namespace chanprune
