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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chanprune {

/// Reserved id naming the graph input in layer input lists.
inline constexpr std::string_view kInputId = "input";

enum class LayerKind {
  kConv2d,
  kDense,
  kRelu,
  kMaxPool,
  kAvgPool,
  kBatchNorm,
  kAdd,
  kChannelSelect,
  kFlatten,
  kSoftmax,
};

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct Conv2dGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;
  bool operator==(const Conv2dGeometry&) const = default;
};

struct DenseGeometry {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool bias = true;
  bool operator==(const DenseGeometry&) const = default;
};

struct PoolGeometry {
  std::size_t window = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const PoolGeometry&) const = default;
};

struct BatchNormGeometry {
  std::size_t channels = 0;
  bool operator==(const BatchNormGeometry&) const = default;
};

/// Forwards the listed input channels, in order. Sits at a residual block
/// entry so the trunk can read a subset while the skip path keeps full width.
struct ChannelSelectGeometry {
  std::vector<std::size_t> kept;
  bool operator==(const ChannelSelectGeometry&) const = default;
};

using LayerGeometry =
    std::variant<std::monostate, Conv2dGeometry, DenseGeometry, PoolGeometry,
                 BatchNormGeometry, ChannelSelectGeometry>;

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kRelu;
  LayerGeometry geometry;
  std::vector<std::string> inputs;
  bool prunable = false;

  bool operator==(const LayerSpec&) const = default;
};

/// Per-sample activation shape [channels, width, height].
struct Shape {
  std::size_t channels = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t size() const noexcept { return channels * width * height; }
  bool operator==(const Shape&) const = default;
};

/// Validated layer DAG with a single input and a single output. Layers are
/// stored in topological order: every layer reads only the graph input or
/// earlier layers. Construction checks channel agreement along every edge,
/// spatial propagation, and the pruning rules for layers flagged prunable.
class NetworkGraph {
 public:
  static constexpr std::size_t kInputNode = static_cast<std::size_t>(-1);

  NetworkGraph(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::span<const LayerSpec> layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }

  const LayerSpec& layer(std::size_t index) const { return layers_.at(index); }
  const LayerSpec& layer(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  /// Producer indices of a layer; kInputNode denotes the graph input.
  const std::vector<std::size_t>& producers(std::size_t index) const {
    return producers_.at(index);
  }
  const std::vector<std::size_t>& consumers(std::size_t index) const {
    return consumers_.at(index);
  }
  const std::vector<std::size_t>& input_consumers() const noexcept {
    return input_consumers_;
  }

  /// Output shape of a layer, or of the input for kInputNode.
  const Shape& shape(std::size_t index) const;
  const Shape& shape(std::string_view id) const;
  const Shape& output_shape() const;

  /// Index of the sink layer, or kInputNode for an input-only graph.
  std::size_t output_index() const noexcept { return output_index_; }

  std::vector<std::size_t> prunable_indices() const;

  bool operator==(const NetworkGraph& other) const {
    return input_shape_ == other.input_shape_ && layers_ == other.layers_;
  }

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<std::size_t>> producers_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::vector<std::size_t> input_consumers_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t output_index_ = kInputNode;
};

/// Number of channels a prunable layer emits.
std::size_t output_channels(const LayerSpec& layer);

/// How removing output channels of one layer touches another layer.
enum class ChannelEffectKind {
  kOwner,          // the pruned layer itself loses output channels
  kPassThrough,    // per-channel layer (relu, pool, batchnorm) loses channels
  kFlatten,        // flatten loses the corresponding feature blocks
  kConsumerInput,  // conv2d / dense loses input channels or features
};

struct ChannelEffect {
  std::size_t layer_index = 0;
  ChannelEffectKind kind = ChannelEffectKind::kOwner;
  /// Removed positions, ascending. For kOwner and kPassThrough: channel
  /// indices. For kFlatten: output feature indices. For kConsumerInput:
  /// input channel (conv2d) or input feature (dense) indices.
  std::vector<std::size_t> positions;
};

/// Every layer affected by removing `removed` output channels of the layer at
/// `layer_index`, in graph order, starting with the owner. Throws UsageError
/// for non-prunable layers or invalid indices.
std::vector<ChannelEffect> trace_channel_removal(
    const NetworkGraph& graph, std::size_t layer_index,
    std::span<const std::size_t> removed);

/// New graph with the given output channels of one prunable layer removed and
/// every affected consumer resized.
NetworkGraph remove_output_channels(const NetworkGraph& graph,
                                    std::string_view layer_id,
                                    std::span<const std::size_t> removed);

// Architecture JSON ({"version":1,"input_shape":[C,W,H],"layers":[...]}).
NetworkGraph parse_graph_json(std::string_view text);
std::string graph_to_json(const NetworkGraph& graph);
NetworkGraph load_graph(const std::filesystem::path& path);
void save_graph(const std::filesystem::path& path, const NetworkGraph& graph);

}  // namespace chanprune
