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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chanprune/graph.hpp"
#include "chanprune/plan.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune {

inline constexpr float kBatchNormEpsilon = 1e-5f;

/// Named parameter tensors per layer id.
///   conv2d:    weight [out, in, k, k], bias [out] (when enabled)
///   dense:     weight [out, in], bias [out] (when enabled)
///   batchnorm: scale, shift, running_mean, running_var, each [channels]
class WeightStore {
 public:
  using LayerTensors = std::map<std::string, Tensor, std::less<>>;

  void set(std::string_view layer_id, std::string_view name, Tensor tensor);
  const Tensor& get(std::string_view layer_id, std::string_view name) const;
  bool has(std::string_view layer_id, std::string_view name) const;

  const std::map<std::string, LayerTensors, std::less<>>& layers() const noexcept {
    return layers_;
  }

  bool operator==(const WeightStore&) const = default;

 private:
  std::map<std::string, LayerTensors, std::less<>> layers_;
};

/// Throws FormatError unless every parameterized layer has exactly the
/// tensors its geometry requires, and nothing else.
void validate_weights(const NetworkGraph& graph, const WeightStore& weights);

/// Manifest JSON {"version":1,"layers":{id:{name:path}}}; relative paths
/// resolve against the manifest's directory.
WeightStore load_weights(const std::filesystem::path& manifest);
/// Writes <dir>/<layer>.<name>.ptsr files plus <dir>/weights.json and
/// returns the manifest path.
std::filesystem::path save_weights(const std::filesystem::path& dir,
                                   const WeightStore& weights);

struct Dataset {
  Tensor inputs;  // [N, C_in, W, H]
  LabelFile labels;

  std::size_t size() const noexcept { return labels.count(); }
  void validate() const;
};

Dataset load_dataset(const std::filesystem::path& inputs,
                     const std::filesystem::path& labels);

struct ForwardOptions {
  /// Layer ids (or "input") whose outputs are returned as [N, C, W, H].
  std::vector<std::string> capture;
  /// Output channels forced to zero right after the named layer computes.
  std::map<std::string, std::vector<std::size_t>, std::less<>> zero_channels;
  int threads = 1;
};

struct ForwardResult {
  Tensor output;  // [N, C, W, H] of the graph output
  std::map<std::string, Tensor, std::less<>> captured;
};

/// Deterministic float32 inference. Samples are independent, so results do
/// not depend on the thread count.
ForwardResult forward(const NetworkGraph& graph, const WeightStore& weights,
                      const Tensor& batch, const ForwardOptions& opts = {});

/// Argmax over the flattened output; ties go to the lowest class index.
std::vector<std::uint32_t> predict(const NetworkGraph& graph,
                                   const WeightStore& weights,
                                   const Tensor& batch, int threads = 1);

double evaluate_accuracy(const NetworkGraph& graph, const WeightStore& weights,
                         const Dataset& dataset, int threads = 1);

/// Removes planned output filters, consumer input slices and per-channel
/// batchnorm parameters; channel_select entries shrink the kept list only.
std::pair<NetworkGraph, WeightStore> apply_plan_weights(const NetworkGraph& graph,
                                                        const WeightStore& weights,
                                                        const PruningPlan& plan);

enum class CapturePoint { kPre, kPost };

/// Layer whose output is captured for `layer_id`. kPost follows a
/// single-consumer chain of batchnorm layers to a directly following relu.
std::string resolve_capture_layer(const NetworkGraph& graph,
                                  std::string_view layer_id, CapturePoint point);

struct CaptureOptions {
  CapturePoint point = CapturePoint::kPost;
  std::size_t batch_size = 256;
  int threads = 1;
};

/// Activations [N, C, W, H] for `layer_id` over the dataset.
Tensor capture_activations(const NetworkGraph& graph, const WeightStore& weights,
                           const Dataset& dataset, std::string_view layer_id,
                           const CaptureOptions& opts = {});

/// Copy of `tensor` without the given (ascending) positions along `axis`.
Tensor erase_along_axis(const Tensor& tensor, std::size_t axis,
                        std::span<const std::size_t> positions);

}  // namespace chanprune
