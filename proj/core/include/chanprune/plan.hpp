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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chanprune/flops.hpp"
#include "chanprune/graph.hpp"

namespace chanprune {

struct PlanEntry {
  std::string layer_id;
  std::vector<std::size_t> channels;  // ascending output-channel indices
  bool operator==(const PlanEntry&) const = default;
};

struct PlanProvenance {
  double alpha = 0.0;
  std::size_t k = 0;
  std::size_t scoring_samples = 0;
  bool operator==(const PlanProvenance&) const = default;
};

/// Exact structural removal set plus the FLOP and parameter reductions it
/// causes on the graph it was built for.
struct PruningPlan {
  std::string metric;
  std::vector<PlanEntry> entries;
  std::uint64_t expected_flop_delta = 0;
  std::uint64_t expected_param_delta = 0;
  PlanProvenance provenance;
  bool operator==(const PruningPlan&) const = default;
};

/// Throws UsageError if the plan does not fit the graph: unknown or
/// non-prunable layers, repeated layers, duplicate or out-of-range indices,
/// or a removal that would empty a layer.
void validate_plan(const NetworkGraph& graph, const PruningPlan& plan);

/// Ranked channel indices per layer, lowest score first.
using ChannelRankings = std::map<std::string, std::vector<std::size_t>, std::less<>>;

/// Plan removing the first n_l ranked channels of each selected layer, with
/// expected deltas recomputed on the graph.
PruningPlan build_plan(const NetworkGraph& graph, const FlossTable& table,
                       const ChannelRankings& rankings,
                       std::span<const std::string> selected,
                       std::string_view metric, const PlanProvenance& provenance);

/// Graph with every plan entry removed. Entries are expressed in the original
/// graph's channel numbering.
NetworkGraph apply_plan_graph(const NetworkGraph& graph, const PruningPlan& plan);

/// Fills in expected_flop_delta and expected_param_delta for `graph`.
void compute_expected_deltas(const NetworkGraph& graph, PruningPlan& plan);

std::string plan_to_json(const PruningPlan& plan);
PruningPlan parse_plan_json(std::string_view text);
void save_plan(const std::filesystem::path& path, const PruningPlan& plan);
PruningPlan load_plan(const std::filesystem::path& path);

}  // namespace chanprune
