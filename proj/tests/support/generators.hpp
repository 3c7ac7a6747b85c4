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
#include <string>
#include <utility>
#include <vector>

#include "chanprune/engine.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/random.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune::testing {

/// Gaussian activations with class-dependent offsets; every class present.
ActivationSet random_activation_set(Rng& rng, std::size_t n, std::size_t width,
                                    std::size_t height, std::uint32_t classes);

/// Values on a 1/64 grid in [-16, 16] so a*x + b is exact in float for small
/// dyadic a, b.
ActivationSet dyadic_activation_set(Rng& rng, std::size_t n, std::size_t width,
                                    std::size_t height, std::uint32_t classes);

/// Applies x -> a*x + b to every activation.
ActivationSet affine(const ActivationSet& set, float a, float b);

/// Two-channel [N, 2, W, H] dump: channel 0 carries class-separated Gaussians,
/// channel 1 has one distribution for all classes.
std::pair<Tensor, LabelFile> signal_noise_layer(Rng& rng, std::size_t per_class,
                                                std::uint32_t classes,
                                                std::size_t width, std::size_t height);

struct GeneratedNet {
  NetworkGraph graph;
  WeightStore weights;
};

/// Random valid network mixing conv chains, pooling, channel_select residual
/// blocks and a dense head. `residual` forces at least one residual block.
NetworkGraph random_graph(Rng& rng, bool residual);
WeightStore random_weights(const NetworkGraph& graph, Rng& rng);
GeneratedNet random_network(Rng& rng, bool residual);

Tensor random_batch(Rng& rng, const Shape& input, std::size_t n);

/// conv A(3->8, 3x3, pad 1) -> relu -> conv B(8->16, 3x3, pad 1) -> relu ->
/// flatten -> dense(16*32*32 -> 10) on a 3x32x32 input.
NetworkGraph two_conv_graph();

/// Stem conv, two channel_select residual blocks, pooled dense head.
NetworkGraph toy_resnet_graph();

}  // namespace chanprune::testing
