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

#include "chanprune/graph.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {
namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConv2d, "conv2d"},
    {LayerKind::kDense, "dense"},
    {LayerKind::kRelu, "relu"},
    {LayerKind::kMaxPool, "maxpool"},
    {LayerKind::kAvgPool, "avgpool"},
    {LayerKind::kBatchNorm, "batchnorm"},
    {LayerKind::kAdd, "add"},
    {LayerKind::kChannelSelect, "channel_select"},
    {LayerKind::kFlatten, "flatten"},
    {LayerKind::kSoftmax, "softmax"},
};

[[noreturn]] void invalid(const LayerSpec& layer, const std::string& what) {
  throw FormatError("layer \"" + layer.id + "\": " + what);
}

template <typename G>
const G& geometry_of(const LayerSpec& layer) {
  const G* g = std::get_if<G>(&layer.geometry);
  if (g == nullptr) {
    invalid(layer, "geometry does not match kind " +
                       std::string(layer_kind_name(layer.kind)));
  }
  return *g;
}

std::size_t window_output(const LayerSpec& layer, std::size_t extent,
                          std::size_t window, std::size_t stride,
                          std::size_t padding) {
  if (window == 0 || stride == 0) invalid(layer, "window and stride must be positive");
  if (extent + 2 * padding < window) {
    invalid(layer, "window larger than padded input");
  }
  return (extent + 2 * padding - window) / stride + 1;
}

bool is_pass_through(LayerKind kind) {
  return kind == LayerKind::kRelu || kind == LayerKind::kMaxPool ||
         kind == LayerKind::kAvgPool || kind == LayerKind::kBatchNorm;
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw FormatError("unknown layer kind \"" + std::string(name) + "\"");
}

std::size_t output_channels(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::kConv2d:
      return geometry_of<Conv2dGeometry>(layer).out_channels;
    case LayerKind::kDense:
      return geometry_of<DenseGeometry>(layer).out_features;
    case LayerKind::kChannelSelect:
      return geometry_of<ChannelSelectGeometry>(layer).kept.size();
    default:
      invalid(layer, "layer kind has no prunable output channels");
  }
}

NetworkGraph::NetworkGraph(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(input_shape), layers_(std::move(layers)) {
  if (input_shape_.channels == 0 || input_shape_.width == 0 ||
      input_shape_.height == 0) {
    throw FormatError("input_shape dimensions must be positive");
  }
  const std::size_t count = layers_.size();
  shapes_.resize(count);
  producers_.resize(count);
  consumers_.resize(count);

  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& layer = layers_[i];
    if (layer.id.empty()) throw FormatError("layer with empty id");
    if (layer.id == kInputId) {
      throw FormatError("layer id \"input\" is reserved for the graph input");
    }
    if (!index_.emplace(layer.id, i).second) {
      throw FormatError("duplicate layer id \"" + layer.id + "\"");
    }

    if (layer.kind == LayerKind::kAdd) {
      if (layer.inputs.size() < 2) invalid(layer, "add needs at least two inputs");
    } else if (layer.inputs.size() != 1) {
      invalid(layer, "expected exactly one input");
    }
    std::vector<Shape> in_shapes;
    for (const auto& input : layer.inputs) {
      std::size_t producer = kInputNode;
      if (input != kInputId) {
        auto it = index_.find(input);
        if (it == index_.end() || it->second == i) {
          invalid(layer, "input \"" + input +
                             "\" is not the graph input or an earlier layer");
        }
        producer = it->second;
        consumers_[producer].push_back(i);
      } else {
        input_consumers_.push_back(i);
      }
      if (std::find(producers_[i].begin(), producers_[i].end(), producer) !=
          producers_[i].end()) {
        invalid(layer, "duplicate input \"" + input + "\"");
      }
      producers_[i].push_back(producer);
      in_shapes.push_back(producer == kInputNode ? input_shape_ : shapes_[producer]);
    }

    const Shape in = in_shapes.front();
    Shape out = in;
    switch (layer.kind) {
      case LayerKind::kConv2d: {
        const auto& g = geometry_of<Conv2dGeometry>(layer);
        if (g.in_channels == 0 || g.out_channels == 0 || g.kernel == 0 ||
            g.stride == 0) {
          invalid(layer, "conv2d geometry must be positive");
        }
        if (g.in_channels != in.channels) {
          invalid(layer, "in_ch " + std::to_string(g.in_channels) +
                             " does not match producer channels " +
                             std::to_string(in.channels));
        }
        out.channels = g.out_channels;
        out.width = window_output(layer, in.width, g.kernel, g.stride, g.padding);
        out.height = window_output(layer, in.height, g.kernel, g.stride, g.padding);
        break;
      }
      case LayerKind::kDense: {
        const auto& g = geometry_of<DenseGeometry>(layer);
        if (g.in_features == 0 || g.out_features == 0) {
          invalid(layer, "dense geometry must be positive");
        }
        if (in.width != 1 || in.height != 1) {
          invalid(layer, "dense input must be flattened (spatial 1x1)");
        }
        if (g.in_features != in.channels) {
          invalid(layer, "in_dim " + std::to_string(g.in_features) +
                             " does not match producer features " +
                             std::to_string(in.channels));
        }
        out = {g.out_features, 1, 1};
        break;
      }
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool: {
        const auto& g = geometry_of<PoolGeometry>(layer);
        if (g.padding >= g.window) invalid(layer, "padding must be below window");
        out.width = window_output(layer, in.width, g.window, g.stride, g.padding);
        out.height = window_output(layer, in.height, g.window, g.stride, g.padding);
        break;
      }
      case LayerKind::kBatchNorm: {
        const auto& g = geometry_of<BatchNormGeometry>(layer);
        if (g.channels != in.channels) {
          invalid(layer, "batchnorm channels " + std::to_string(g.channels) +
                             " does not match producer channels " +
                             std::to_string(in.channels));
        }
        break;
      }
      case LayerKind::kAdd:
        if (!std::holds_alternative<std::monostate>(layer.geometry)) {
          invalid(layer, "add takes no parameters");
        }
        for (const Shape& s : in_shapes) {
          if (s != in) invalid(layer, "add inputs differ in channels or spatial size");
        }
        break;
      case LayerKind::kChannelSelect: {
        const auto& g = geometry_of<ChannelSelectGeometry>(layer);
        if (g.kept.empty()) invalid(layer, "channel_select keeps no channels");
        for (std::size_t k = 0; k < g.kept.size(); ++k) {
          if (g.kept[k] >= in.channels) invalid(layer, "kept channel out of range");
          if (k > 0 && g.kept[k] <= g.kept[k - 1]) {
            invalid(layer, "kept list must be strictly increasing");
          }
        }
        out.channels = g.kept.size();
        break;
      }
      case LayerKind::kFlatten:
        out = {in.size(), 1, 1};
        [[fallthrough]];
      case LayerKind::kRelu:
      case LayerKind::kSoftmax:
        if (!std::holds_alternative<std::monostate>(layer.geometry)) {
          invalid(layer, std::string(layer_kind_name(layer.kind)) +
                             " takes no parameters");
        }
        break;
    }
    shapes_[i] = out;
  }

  if (count > 0) {
    if (input_consumers_.empty()) throw FormatError("graph input is never read");
    std::size_t sinks = 0;
    for (std::size_t i = 0; i < count; ++i) {
      if (consumers_[i].empty()) {
        ++sinks;
        output_index_ = i;
      }
    }
    if (sinks != 1) {
      throw FormatError("graph must have exactly one output layer, found " +
                        std::to_string(sinks));
    }
  }

  // A prunable layer's channels must reach only conv2d / dense consumers,
  // through per-channel layers and flatten.
  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& layer = layers_[i];
    if (!layer.prunable) continue;
    if (layer.kind != LayerKind::kConv2d && layer.kind != LayerKind::kDense &&
        layer.kind != LayerKind::kChannelSelect) {
      invalid(layer, "only conv2d, dense and channel_select layers can be prunable");
    }
    if (consumers_[i].empty()) invalid(layer, "the output layer cannot be prunable");
    std::deque<std::size_t> frontier(consumers_[i].begin(), consumers_[i].end());
    while (!frontier.empty()) {
      const std::size_t c = frontier.front();
      frontier.pop_front();
      const LayerKind kind = layers_[c].kind;
      if (kind == LayerKind::kConv2d || kind == LayerKind::kDense) continue;
      if (is_pass_through(kind) || kind == LayerKind::kFlatten) {
        if (consumers_[c].empty()) {
          invalid(layer, "channels reach the graph output; cannot be prunable");
        }
        frontier.insert(frontier.end(), consumers_[c].begin(), consumers_[c].end());
        continue;
      }
      invalid(layer, "channels reach " + std::string(layer_kind_name(kind)) +
                         " layer \"" + layers_[c].id +
                         "\"; prunable outputs may only feed conv2d/dense "
                         "through per-channel layers");
    }
  }
}

const LayerSpec& NetworkGraph::layer(std::string_view id) const {
  return layers_[index_of(id)];
}

std::optional<std::size_t> NetworkGraph::find(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t NetworkGraph::index_of(std::string_view id) const {
  auto found = find(id);
  if (!found) throw UsageError("unknown layer \"" + std::string(id) + "\"");
  return *found;
}

const Shape& NetworkGraph::shape(std::size_t index) const {
  if (index == kInputNode) return input_shape_;
  return shapes_.at(index);
}

const Shape& NetworkGraph::shape(std::string_view id) const {
  if (id == kInputId) return input_shape_;
  return shapes_[index_of(id)];
}

const Shape& NetworkGraph::output_shape() const { return shape(output_index_); }

std::vector<std::size_t> NetworkGraph::prunable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].prunable) out.push_back(i);
  }
  return out;
}

std::vector<ChannelEffect> trace_channel_removal(
    const NetworkGraph& graph, std::size_t layer_index,
    std::span<const std::size_t> removed) {
  const LayerSpec& owner = graph.layer(layer_index);
  if (!owner.prunable) {
    throw UsageError("layer \"" + owner.id + "\" is not prunable");
  }
  const std::size_t channels = output_channels(owner);
  std::vector<std::size_t> positions(removed.begin(), removed.end());
  std::sort(positions.begin(), positions.end());
  if (std::adjacent_find(positions.begin(), positions.end()) != positions.end()) {
    throw UsageError("duplicate channel index for layer \"" + owner.id + "\"");
  }
  if (!positions.empty() && positions.back() >= channels) {
    throw UsageError("channel index " + std::to_string(positions.back()) +
                     " out of range for layer \"" + owner.id + "\" with " +
                     std::to_string(channels) + " channels");
  }
  if (positions.size() >= channels) {
    throw UsageError("removing " + std::to_string(positions.size()) +
                     " channels would empty layer \"" + owner.id + "\"");
  }

  std::vector<ChannelEffect> effects;
  effects.push_back({layer_index, ChannelEffectKind::kOwner, positions});

  std::deque<std::pair<std::size_t, std::vector<std::size_t>>> frontier;
  for (std::size_t c : graph.consumers(layer_index)) frontier.emplace_back(c, positions);
  while (!frontier.empty()) {
    auto [index, pos] = std::move(frontier.front());
    frontier.pop_front();
    const LayerKind kind = graph.layer(index).kind;
    if (kind == LayerKind::kConv2d || kind == LayerKind::kDense) {
      effects.push_back({index, ChannelEffectKind::kConsumerInput, std::move(pos)});
      continue;
    }
    if (kind == LayerKind::kFlatten) {
      const Shape& in = graph.shape(graph.producers(index).front());
      const std::size_t plane = in.width * in.height;
      std::vector<std::size_t> features;
      features.reserve(pos.size() * plane);
      for (std::size_t ch : pos) {
        for (std::size_t j = 0; j < plane; ++j) features.push_back(ch * plane + j);
      }
      pos = std::move(features);
      effects.push_back({index, ChannelEffectKind::kFlatten, pos});
    } else if (is_pass_through(kind)) {
      effects.push_back({index, ChannelEffectKind::kPassThrough, pos});
    } else {
      throw UsageError("channel removal reaches unsupported layer \"" +
                       graph.layer(index).id + "\"");
    }
    for (std::size_t c : graph.consumers(index)) frontier.emplace_back(c, pos);
  }
  std::stable_sort(effects.begin(), effects.end(),
                   [](const ChannelEffect& a, const ChannelEffect& b) {
                     return a.layer_index < b.layer_index;
                   });
  return effects;
}

NetworkGraph remove_output_channels(const NetworkGraph& graph,
                                    std::string_view layer_id,
                                    std::span<const std::size_t> removed) {
  const auto effects =
      trace_channel_removal(graph, graph.index_of(layer_id), removed);
  std::vector<LayerSpec> layers(graph.layers().begin(), graph.layers().end());
  for (const auto& effect : effects) {
    LayerSpec& layer = layers[effect.layer_index];
    const std::size_t n = effect.positions.size();
    switch (effect.kind) {
      case ChannelEffectKind::kOwner:
        if (auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
          g->out_channels -= n;
        } else if (auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
          d->out_features -= n;
        } else if (auto* s = std::get_if<ChannelSelectGeometry>(&layer.geometry)) {
          std::vector<std::size_t> kept;
          for (std::size_t k = 0; k < s->kept.size(); ++k) {
            if (!std::binary_search(effect.positions.begin(),
                                    effect.positions.end(), k)) {
              kept.push_back(s->kept[k]);
            }
          }
          s->kept = std::move(kept);
        }
        break;
      case ChannelEffectKind::kPassThrough:
        if (auto* b = std::get_if<BatchNormGeometry>(&layer.geometry)) b->channels -= n;
        break;
      case ChannelEffectKind::kFlatten:
        break;
      case ChannelEffectKind::kConsumerInput:
        if (auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
          g->in_channels -= n;
        } else if (auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
          d->in_features -= n;
        }
        break;
    }
  }
  return NetworkGraph(graph.input_shape(), std::move(layers));
}

}  // namespace chanprune
