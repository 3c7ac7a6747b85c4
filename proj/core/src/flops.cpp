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

#include "chanprune/flops.hpp"

#include <array>
#include <cmath>
#include <ostream>

#include "chanprune/error.hpp"

namespace chanprune {

std::uint64_t layer_flops(const NetworkGraph& graph, std::size_t index) {
  const LayerSpec& layer = graph.layer(index);
  if (const auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
    const Shape& out = graph.shape(index);
    return std::uint64_t{g->out_channels} * g->in_channels * g->kernel *
           g->kernel * out.width * out.height;
  }
  if (const auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
    return std::uint64_t{d->out_features} * d->in_features;
  }
  return 0;
}

std::uint64_t layer_params(const NetworkGraph& graph, std::size_t index) {
  const LayerSpec& layer = graph.layer(index);
  if (const auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
    return std::uint64_t{g->out_channels} *
           (std::uint64_t{g->in_channels} * g->kernel * g->kernel + (g->bias ? 1 : 0));
  }
  if (const auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
    return std::uint64_t{d->out_features} * (d->in_features + (d->bias ? 1 : 0));
  }
  if (const auto* b = std::get_if<BatchNormGeometry>(&layer.geometry)) {
    return 2 * std::uint64_t{b->channels};
  }
  return 0;
}

std::uint64_t flop_count(const NetworkGraph& graph) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) total += layer_flops(graph, i);
  return total;
}

std::uint64_t param_count(const NetworkGraph& graph) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) total += layer_params(graph, i);
  return total;
}

std::uint64_t floss(const NetworkGraph& graph, std::string_view layer_id) {
  const LayerSpec& layer = graph.layer(layer_id);
  if (!layer.prunable || output_channels(layer) < 2) {
    throw UsageError("layer \"" + layer.id +
                     "\" is not prunable (needs the prunable flag and at least "
                     "two output channels)");
  }
  const std::array<std::size_t, 1> last{output_channels(layer) - 1};
  const NetworkGraph pruned = remove_output_channels(graph, layer_id, last);
  const std::uint64_t before = flop_count(graph);
  const std::uint64_t after = flop_count(pruned);
  if (after >= before) {
    throw NumericError("layer \"" + layer.id + "\" has zero single-channel FLOP loss");
  }
  return before - after;
}

const FlossEntry& FlossTable::entry(std::string_view layer_id) const {
  for (const auto& e : entries) {
    if (e.layer_id == layer_id) return e;
  }
  throw UsageError("layer \"" + std::string(layer_id) + "\" is not in the FLOSS table");
}

FlossTable pruning_counts(const NetworkGraph& graph, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw UsageError("alpha must be a positive finite number");
  }
  FlossTable table;
  table.alpha = alpha;
  for (std::size_t index : graph.prunable_indices()) {
    const LayerSpec& layer = graph.layer(index);
    const std::size_t channels = output_channels(layer);
    if (channels < 2) continue;
    FlossEntry e;
    e.layer_id = layer.id;
    e.layer_index = index;
    e.channels = channels;
    e.floss = floss(graph, layer.id);
    table.floss_max = std::max(table.floss_max, e.floss);
    table.entries.push_back(std::move(e));
  }
  if (table.entries.empty()) throw UsageError("graph has no prunable layers");
  for (auto& e : table.entries) {
    const double ideal = alpha * static_cast<double>(table.floss_max) /
                         static_cast<double>(e.floss);
    const double rounded = std::round(ideal);  // half away from zero
    const double cap = static_cast<double>(e.channels - 1);
    e.n_channels = static_cast<std::size_t>(std::clamp(rounded, 0.0, cap));
  }
  return table;
}

void write_floss_csv(std::ostream& out, const FlossTable& table) {
  out << "layer_id,channels,floss,n_channels\n";
  for (const auto& e : table.entries) {
    out << e.layer_id << ',' << e.channels << ',' << e.floss << ','
        << e.n_channels << '\n';
  }
}

}  // namespace chanprune
