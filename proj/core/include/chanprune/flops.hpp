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
#include <string>
#include <string_view>
#include <vector>

#include "chanprune/graph.hpp"

namespace chanprune {

// One multiply-accumulate counts as one FLOP. Only conv2d and dense layers
// contribute; elementwise, pooling and routing layers are free.
std::uint64_t layer_flops(const NetworkGraph& graph, std::size_t index);
std::uint64_t layer_params(const NetworkGraph& graph, std::size_t index);
std::uint64_t flop_count(const NetworkGraph& graph);
std::uint64_t param_count(const NetworkGraph& graph);

/// Network-wide FLOP reduction from removing one output channel of a
/// prunable layer, measured by recomputing the pruned graph.
std::uint64_t floss(const NetworkGraph& graph, std::string_view layer_id);

struct FlossEntry {
  std::string layer_id;
  std::size_t layer_index = 0;
  std::size_t channels = 0;
  std::uint64_t floss = 0;
  std::size_t n_channels = 0;  // channels to remove this round
};

struct FlossTable {
  double alpha = 0.0;
  std::uint64_t floss_max = 0;
  std::vector<FlossEntry> entries;  // graph order

  const FlossEntry& entry(std::string_view layer_id) const;
};

/// n = round(alpha * FLOSS_max / FLOSS), half away from zero, clamped to
/// [0, channels - 1]. Covers every prunable layer with at least two channels.
FlossTable pruning_counts(const NetworkGraph& graph, double alpha);

/// `layer_id,channels,floss,n_channels`
void write_floss_csv(std::ostream& out, const FlossTable& table);

}  // namespace chanprune
