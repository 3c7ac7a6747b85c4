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

#include "chanprune/plan.hpp"

#include <algorithm>
#include <set>

#include "chanprune/error.hpp"

namespace chanprune {

void validate_plan(const NetworkGraph& graph, const PruningPlan& plan) {
  std::set<std::string, std::less<>> seen;
  for (const auto& entry : plan.entries) {
    if (!graph.find(entry.layer_id)) {
      throw UsageError("plan names unknown layer \"" + entry.layer_id + "\"");
    }
    if (!seen.insert(entry.layer_id).second) {
      throw UsageError("plan lists layer \"" + entry.layer_id + "\" twice");
    }
    if (entry.channels.empty()) {
      throw UsageError("plan entry for \"" + entry.layer_id + "\" removes nothing");
    }
    // Checks prunability, ranges, duplicates and the keep-one rule.
    trace_channel_removal(graph, graph.index_of(entry.layer_id), entry.channels);
  }
}

NetworkGraph apply_plan_graph(const NetworkGraph& graph, const PruningPlan& plan) {
  validate_plan(graph, plan);
  // Entries touch disjoint axes (a layer's own outputs change only through its
  // own entry), so applying them in sequence keeps the original numbering.
  NetworkGraph current = graph;
  for (const auto& entry : plan.entries) {
    current = remove_output_channels(current, entry.layer_id, entry.channels);
  }
  return current;
}

void compute_expected_deltas(const NetworkGraph& graph, PruningPlan& plan) {
  const NetworkGraph pruned = apply_plan_graph(graph, plan);
  plan.expected_flop_delta = flop_count(graph) - flop_count(pruned);
  plan.expected_param_delta = param_count(graph) - param_count(pruned);
}

PruningPlan build_plan(const NetworkGraph& graph, const FlossTable& table,
                       const ChannelRankings& rankings,
                       std::span<const std::string> selected,
                       std::string_view metric, const PlanProvenance& provenance) {
  if (selected.empty()) throw UsageError("no layers selected for pruning");
  PruningPlan plan;
  plan.metric = std::string(metric);
  plan.provenance = provenance;
  for (const auto& layer_id : selected) {
    const FlossEntry& row = table.entry(layer_id);
    if (row.n_channels == 0) {
      throw UsageError("selected layer \"" + layer_id + "\" has n_l = 0");
    }
    auto it = rankings.find(layer_id);
    if (it == rankings.end()) {
      throw UsageError("no channel ranking for layer \"" + layer_id + "\"");
    }
    if (it->second.size() < row.n_channels) {
      throw UsageError("ranking for layer \"" + layer_id + "\" has " +
                       std::to_string(it->second.size()) + " channels, need " +
                       std::to_string(row.n_channels));
    }
    PlanEntry entry;
    entry.layer_id = layer_id;
    entry.channels.assign(it->second.begin(),
                          it->second.begin() + static_cast<std::ptrdiff_t>(row.n_channels));
    std::sort(entry.channels.begin(), entry.channels.end());
    plan.entries.push_back(std::move(entry));
  }
  std::stable_sort(plan.entries.begin(), plan.entries.end(),
                   [&](const PlanEntry& a, const PlanEntry& b) {
                     return graph.index_of(a.layer_id) < graph.index_of(b.layer_id);
                   });
  compute_expected_deltas(graph, plan);
  return plan;
}

}  // namespace chanprune
