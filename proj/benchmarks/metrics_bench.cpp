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

#include <benchmark/benchmark.h>

#include "chanprune/metrics.hpp"
#include "chanprune/random.hpp"

namespace chanprune {
namespace {

// One channel of N feature maps with a per-class offset.
ActivationSet make_set(std::size_t n, std::size_t side, std::uint32_t classes) {
  Rng rng(17);
  std::vector<std::uint32_t> labels(n);
  Tensor maps = Tensor::zeros({n, side, side});
  auto data = maps.data();
  const std::size_t plane = side * side;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint32_t>(i % classes);
    for (std::size_t k = 0; k < plane; ++k) {
      data[i * plane + k] = static_cast<float>(0.1 * labels[i] + uniform_real(rng));
    }
  }
  return ActivationSet(std::move(maps), std::move(labels), classes);
}

void BM_Score(benchmark::State& state, Metric metric) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  const ActivationSet set = make_set(n, side, 10);
  const MetricConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(score_channel(set, metric, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * side * side));
}

BENCHMARK_CAPTURE(BM_Score, gsd, Metric::kGsd)->Args({500, 8})->Args({3000, 16})->Args({3000, 64});
BENCHMARK_CAPTURE(BM_Score, gfdr, Metric::kGfdr)->Args({500, 8})->Args({3000, 16});
BENCHMARK_CAPTURE(BM_Score, di, Metric::kDi)->Args({500, 8})->Args({3000, 16});
BENCHMARK_CAPTURE(BM_Score, mmd, Metric::kMmd)->Args({500, 8})->Args({3000, 16});

}  // namespace
}  // namespace chanprune
