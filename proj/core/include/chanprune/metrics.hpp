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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chanprune/tensor.hpp"

namespace chanprune {

/// Sample count, mean, and unbiased variance of one side of a partition.
struct ClassStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean / sum-of-squared-deviations accumulator. Blocks are reduced with a
/// local two-pass sweep and combined with the pairwise update of Chan et al.,
/// so accumulation order is fixed by the caller.
class RunningStats {
 public:
  void push(double x);
  void push_block(std::span<const float> values);
  void merge(const RunningStats& other);

  std::size_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double sum_squared_deviations() const noexcept { return m2_; }

  /// Unbiased variance floored at `variance_epsilon`. Throws NumericError
  /// when fewer than two values were accumulated.
  ClassStats finalize(double variance_epsilon) const;

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MetricConfig {
  double ridge_rho = 1e-4;          // DI ridge
  double kernel_sigma = 1.0;        // MMD RBF bandwidth
  double variance_epsilon = 1e-12;  // floor applied to every variance
  std::size_t mmd_max_per_class = 256;
  std::uint64_t mmd_seed = 0;

  void validate() const;
};

enum class Metric { kGsd, kGttest, kGabssnr, kGfdr, kDi, kMmd, kRandom };

std::string_view metric_name(Metric metric);
Metric parse_metric(std::string_view name);

/// Two-class single-variate statistics generalized through one-vs-rest.
enum class BaseStatistic { kSd, kAbsSnr, kFdr, kTtest };

struct ChannelScore {
  std::string layer_id;
  std::size_t channel_index = 0;
  std::string metric;
  double score = 0.0;
};

/// Stats over every scalar activation of the selected maps.
ClassStats channel_stats(const ActivationSet& set,
                         std::span<const std::size_t> samples,
                         double variance_epsilon);

// Two-class statistics. All are nonnegative.
double sd(const ClassStats& p, const ClassStats& q);
double abssnr(const ClassStats& p, const ClassStats& q);
double fdr(const ClassStats& p, const ClassStats& q);
double ttest(const ClassStats& p, const ClassStats& q);
double two_class_score(BaseStatistic base, const ClassStats& p,
                       const ClassStats& q);

/// Mean over classes c of base(F^c, F^-c). Throws NumericError if any class
/// or its complement is empty.
double g_score(const ActivationSet& set, BaseStatistic base,
               const MetricConfig& cfg);

/// Discriminant information tr((S + rho I)^-1 S_B) over flattened maps.
double discriminant_information(const ActivationSet& set,
                                const MetricConfig& cfg);

/// Biased (V-statistic) RBF-kernel MMD between two sets of flattened maps.
double mmd_two(std::span<const std::span<const float>> a,
               std::span<const std::span<const float>> b, double sigma);

/// One-vs-rest average of mmd_two, with seeded per-side subsampling.
double mmd(const ActivationSet& set, const MetricConfig& cfg);

/// Score of one channel under a discriminant metric. kRandom is rejected:
/// random scores are a property of a whole layer (see score_layer).
double score_channel(const ActivationSet& set, Metric metric,
                     const MetricConfig& cfg);

struct ScoreOptions {
  int threads = 1;
  std::uint64_t seed = 0;  // used by Metric::kRandom
};

/// Scores every channel of an [N, C, W, H] activation dump. Output is in
/// channel order and independent of opts.threads.
std::vector<ChannelScore> score_layer(const Tensor& activations,
                                      const LabelFile& labels,
                                      std::uint32_t num_classes,
                                      std::string_view layer_id, Metric metric,
                                      const MetricConfig& cfg,
                                      const ScoreOptions& opts = {});

/// Channel indices of the n lowest scores, lowest first; ties go to the
/// lower channel index.
std::vector<std::size_t> rank_channels(std::span<const ChannelScore> scores,
                                       std::size_t n);

/// Writes `layer_id,channel_index,metric,score` rows sorted by
/// (layer_id, channel_index) with 9 significant digits.
void write_scores_csv(std::ostream& out, std::span<const ChannelScore> scores);
std::vector<ChannelScore> read_scores_csv(std::istream& in);

}  // namespace chanprune
