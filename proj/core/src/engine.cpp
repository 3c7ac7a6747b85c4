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

#include "chanprune/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "chanprune/error.hpp"
#include "chanprune/parallel.hpp"

namespace chanprune {
namespace {

// Weight pointers resolved once per forward call.
struct LayerParams {
  const float* weight = nullptr;
  const float* bias = nullptr;
  std::vector<float> bn_scale;  // scale / sqrt(var + eps)
  std::vector<float> bn_shift;  // shift - mean * bn_scale
};

class Runner {
 public:
  Runner(const NetworkGraph& graph, const WeightStore& weights,
         const ForwardOptions& opts)
      : graph_(graph), params_(graph.size()) {
    validate_weights(graph, weights);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      const LayerSpec& layer = graph.layer(i);
      LayerParams& p = params_[i];
      if (layer.kind == LayerKind::kConv2d || layer.kind == LayerKind::kDense) {
        p.weight = weights.get(layer.id, "weight").data().data();
        if (weights.has(layer.id, "bias")) p.bias = weights.get(layer.id, "bias").data().data();
      } else if (layer.kind == LayerKind::kBatchNorm) {
        const auto scale = weights.get(layer.id, "scale").data();
        const auto shift = weights.get(layer.id, "shift").data();
        const auto mean = weights.get(layer.id, "running_mean").data();
        const auto var = weights.get(layer.id, "running_var").data();
        for (std::size_t c = 0; c < scale.size(); ++c) {
          const float s = scale[c] / std::sqrt(var[c] + kBatchNormEpsilon);
          p.bn_scale.push_back(s);
          p.bn_shift.push_back(shift[c] - mean[c] * s);
        }
      }
    }
    for (const auto& [id, channels] : opts.zero_channels) {
      const std::size_t index = graph.index_of(id);
      for (std::size_t ch : channels) {
        if (ch >= graph.shape(index).channels) {
          throw UsageError("zero_channels index out of range for \"" + id + "\"");
        }
      }
      zero_.emplace_back(index, channels);
    }
    last_use_.assign(graph.size(), 0);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      for (std::size_t c : graph.consumers(i)) last_use_[i] = std::max(last_use_[i], c);
    }
    keep_.assign(graph.size(), false);
    if (graph.size() > 0) keep_[graph.output_index()] = true;
    for (const auto& id : opts.capture) {
      if (id == kInputId) continue;
      keep_[graph.index_of(id)] = true;
    }
  }

  /// Runs one sample; returns buffers for kept layers (others are released).
  std::vector<std::vector<float>> run(std::span<const float> input) const {
    std::vector<std::vector<float>> values(graph_.size());
    for (std::size_t i = 0; i < graph_.size(); ++i) {
      const LayerSpec& layer = graph_.layer(i);
      const auto& producers = graph_.producers(i);
      auto source = [&](std::size_t k) -> std::span<const float> {
        const std::size_t p = producers[k];
        if (p == NetworkGraph::kInputNode) return input;
        return values[p];
      };
      const Shape in = graph_.shape(producers.front());
      const Shape out = graph_.shape(i);
      std::vector<float> result(out.size(), 0.0f);
      compute(i, layer, in, out, source, result);
      for (const auto& [index, channels] : zero_) {
        if (index != i) continue;
        const std::size_t plane = out.width * out.height;
        for (std::size_t ch : channels) {
          std::fill_n(result.begin() + static_cast<std::ptrdiff_t>(ch * plane), plane, 0.0f);
        }
      }
      values[i] = std::move(result);
      for (std::size_t p : producers) {
        if (p != NetworkGraph::kInputNode && !keep_[p] && last_use_[p] == i) {
          values[p] = {};
          values[p].shrink_to_fit();
        }
      }
    }
    return values;
  }

 private:
  template <typename Source>
  void compute(std::size_t index, const LayerSpec& layer, const Shape& in,
               const Shape& out, Source&& source, std::vector<float>& result) const {
    const LayerParams& p = params_[index];
    const std::span<const float> x = source(0);
    switch (layer.kind) {
      case LayerKind::kConv2d: {
        const auto& g = std::get<Conv2dGeometry>(layer.geometry);
        conv2d(g, p, in, out, x, result);
        break;
      }
      case LayerKind::kDense: {
        const auto& g = std::get<DenseGeometry>(layer.geometry);
        for (std::size_t o = 0; o < g.out_features; ++o) {
          const float* row = p.weight + o * g.in_features;
          float acc = 0.0f;
          for (std::size_t k = 0; k < g.in_features; ++k) acc += row[k] * x[k];
          result[o] = acc + (p.bias ? p.bias[o] : 0.0f);
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < x.size(); ++k) result[k] = std::max(x[k], 0.0f);
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        pool(layer.kind, std::get<PoolGeometry>(layer.geometry), in, out, x, result);
        break;
      case LayerKind::kBatchNorm: {
        const std::size_t plane = in.width * in.height;
        for (std::size_t c = 0; c < in.channels; ++c) {
          for (std::size_t k = 0; k < plane; ++k) {
            result[c * plane + k] = x[c * plane + k] * p.bn_scale[c] + p.bn_shift[c];
          }
        }
        break;
      }
      case LayerKind::kAdd: {
        std::copy(x.begin(), x.end(), result.begin());
        for (std::size_t s = 1; s < layer.inputs.size(); ++s) {
          const auto y = source(s);
          for (std::size_t k = 0; k < y.size(); ++k) result[k] += y[k];
        }
        break;
      }
      case LayerKind::kChannelSelect: {
        const auto& kept = std::get<ChannelSelectGeometry>(layer.geometry).kept;
        const std::size_t plane = in.width * in.height;
        for (std::size_t k = 0; k < kept.size(); ++k) {
          std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(kept[k] * plane), plane,
                      result.begin() + static_cast<std::ptrdiff_t>(k * plane));
        }
        break;
      }
      case LayerKind::kFlatten:
        std::copy(x.begin(), x.end(), result.begin());
        break;
      case LayerKind::kSoftmax: {
        const std::size_t plane = in.width * in.height;
        for (std::size_t k = 0; k < plane; ++k) {
          float peak = -std::numeric_limits<float>::infinity();
          for (std::size_t c = 0; c < in.channels; ++c) peak = std::max(peak, x[c * plane + k]);
          float total = 0.0f;
          for (std::size_t c = 0; c < in.channels; ++c) {
            result[c * plane + k] = std::exp(x[c * plane + k] - peak);
            total += result[c * plane + k];
          }
          for (std::size_t c = 0; c < in.channels; ++c) result[c * plane + k] /= total;
        }
        break;
      }
    }
  }

  static void conv2d(const Conv2dGeometry& g, const LayerParams& p, const Shape& in,
                     const Shape& out, std::span<const float> x,
                     std::vector<float>& result) {
    const std::size_t k = g.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto in_w = static_cast<std::ptrdiff_t>(in.width);
    const auto in_h = static_cast<std::ptrdiff_t>(in.height);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      float* dst = result.data() + o * out.width * out.height;
      std::fill_n(dst, out.width * out.height, p.bias ? p.bias[o] : 0.0f);
      for (std::size_t i = 0; i < g.in_channels; ++i) {
        const float* plane = x.data() + i * in.width * in.height;
        const float* w = p.weight + (o * g.in_channels + i) * k * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const float wv = w[ky * k + kx];
            for (std::size_t y = 0; y < out.width; ++y) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(y * g.stride + ky) - pad;
              if (iy < 0 || iy >= in_w) continue;
              const float* row = plane + iy * in_h;
              float* drow = dst + y * out.height;
              for (std::size_t xo = 0; xo < out.height; ++xo) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(xo * g.stride + kx) - pad;
                if (ix < 0 || ix >= in_h) continue;
                drow[xo] += wv * row[ix];
              }
            }
          }
        }
      }
    }
  }

  // Max pooling ignores padded cells; average pooling divides by the full
  // window area (padding counts as zero).
  static void pool(LayerKind kind, const PoolGeometry& g, const Shape& in,
                   const Shape& out, std::span<const float> x,
                   std::vector<float>& result) {
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const float area = static_cast<float>(g.window * g.window);
    for (std::size_t c = 0; c < in.channels; ++c) {
      const float* plane = x.data() + c * in.width * in.height;
      for (std::size_t y = 0; y < out.width; ++y) {
        for (std::size_t xo = 0; xo < out.height; ++xo) {
          float acc = kind == LayerKind::kMaxPool
                          ? -std::numeric_limits<float>::infinity()
                          : 0.0f;
          for (std::size_t ky = 0; ky < g.window; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.width)) continue;
            for (std::size_t kx = 0; kx < g.window; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(xo * g.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.height)) continue;
              const float v = plane[iy * static_cast<std::ptrdiff_t>(in.height) + ix];
              acc = kind == LayerKind::kMaxPool ? std::max(acc, v) : acc + v;
            }
          }
          result[(c * out.width + y) * out.height + xo] =
              kind == LayerKind::kMaxPool ? acc : acc / area;
        }
      }
    }
  }

  const NetworkGraph& graph_;
  std::vector<LayerParams> params_;
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> zero_;
  std::vector<std::size_t> last_use_;
  std::vector<bool> keep_;
};

std::vector<std::size_t> nchw(std::size_t n, const Shape& s) {
  return {n, s.channels, s.width, s.height};
}

}  // namespace

ForwardResult forward(const NetworkGraph& graph, const WeightStore& weights,
                      const Tensor& batch, const ForwardOptions& opts) {
  const Shape& in = graph.input_shape();
  if (batch.rank() != 4 || batch.dim(1) != in.channels || batch.dim(2) != in.width ||
      batch.dim(3) != in.height) {
    throw UsageError("input batch must be [N, " + std::to_string(in.channels) + ", " +
                     std::to_string(in.width) + ", " + std::to_string(in.height) + "]");
  }
  const Runner runner(graph, weights, opts);
  const std::size_t n = batch.dim(0);
  const std::size_t sample_size = in.size();

  ForwardResult result;
  result.output = Tensor::zeros(nchw(n, graph.output_shape()));
  std::vector<std::pair<std::size_t, Tensor*>> captures;
  for (const auto& id : opts.capture) {
    const std::size_t index = id == kInputId ? NetworkGraph::kInputNode : graph.index_of(id);
    auto [it, inserted] = result.captured.emplace(id, Tensor::zeros(nchw(n, graph.shape(index))));
    if (inserted) captures.emplace_back(index, &it->second);
  }

  parallel_for(n, opts.threads, [&](std::size_t s) {
    const auto sample = batch.data().subspan(s * sample_size, sample_size);
    const auto values = runner.run(sample);
    auto write = [&](Tensor& dst, std::span<const float> src) {
      std::copy(src.begin(), src.end(),
                dst.data().begin() + static_cast<std::ptrdiff_t>(s * src.size()));
    };
    write(result.output, graph.size() == 0 ? sample
                                           : std::span<const float>(values[graph.output_index()]));
    for (auto& [index, tensor] : captures) {
      write(*tensor, index == NetworkGraph::kInputNode ? sample
                                                       : std::span<const float>(values[index]));
    }
  });
  return result;
}

std::vector<std::uint32_t> predict(const NetworkGraph& graph, const WeightStore& weights,
                                   const Tensor& batch, int threads) {
  ForwardOptions opts;
  opts.threads = threads;
  const Tensor out = forward(graph, weights, batch, opts).output;
  const std::size_t n = out.dim(0);
  const std::size_t width = out.size() / n;
  std::vector<std::uint32_t> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto row = out.data().subspan(s * width, width);
    std::size_t best = 0;
    for (std::size_t c = 1; c < width; ++c) {
      if (row[c] > row[best]) best = c;
    }
    labels[s] = static_cast<std::uint32_t>(best);
  }
  return labels;
}

double evaluate_accuracy(const NetworkGraph& graph, const WeightStore& weights,
                         const Dataset& dataset, int threads) {
  dataset.validate();
  const std::size_t classes = graph.output_shape().size();
  for (std::uint32_t label : dataset.labels.labels) {
    if (label >= classes) {
      throw FormatError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(classes) + " network outputs");
    }
  }
  const auto predicted = predict(graph, weights, dataset.inputs, threads);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s] == dataset.labels.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

std::string resolve_capture_layer(const NetworkGraph& graph, std::string_view layer_id,
                                  CapturePoint point) {
  if (layer_id == kInputId) return std::string(kInputId);
  std::size_t index = graph.index_of(layer_id);
  if (point == CapturePoint::kPre) return std::string(layer_id);
  std::size_t cursor = index;
  while (graph.consumers(cursor).size() == 1 &&
         graph.layer(graph.consumers(cursor).front()).kind == LayerKind::kBatchNorm) {
    cursor = graph.consumers(cursor).front();
  }
  if (graph.consumers(cursor).size() == 1 &&
      graph.layer(graph.consumers(cursor).front()).kind == LayerKind::kRelu) {
    return graph.layer(graph.consumers(cursor).front()).id;
  }
  return std::string(layer_id);
}

Tensor capture_activations(const NetworkGraph& graph, const WeightStore& weights,
                           const Dataset& dataset, std::string_view layer_id,
                           const CaptureOptions& opts) {
  dataset.validate();
  const std::string target = resolve_capture_layer(graph, layer_id, opts.point);
  const std::size_t index =
      target == kInputId ? NetworkGraph::kInputNode : graph.index_of(target);
  const std::size_t n = dataset.size();
  Tensor out = Tensor::zeros(nchw(n, graph.shape(index)));
  const std::size_t batch = std::max<std::size_t>(opts.batch_size, 1);
  const std::size_t in_size = graph.input_shape().size();
  const std::size_t out_size = graph.shape(index).size();

  ForwardOptions fwd;
  fwd.capture = {target};
  fwd.threads = opts.threads;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    const auto src = dataset.inputs.data().subspan(start * in_size, count * in_size);
    Tensor chunk({count, dataset.inputs.dim(1), dataset.inputs.dim(2), dataset.inputs.dim(3)},
                 std::vector<float>(src.begin(), src.end()));
    const auto result = forward(graph, weights, chunk, fwd);
    const Tensor& got = result.captured.at(target);
    std::copy(got.data().begin(), got.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * out_size));
  }
  return out;
}

}  // namespace chanprune
