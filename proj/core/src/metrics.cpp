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

#include "chanprune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "chanprune/error.hpp"
#include "chanprune/parallel.hpp"
#include "chanprune/random.hpp"

namespace chanprune {

void RunningStats::push(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

void RunningStats::push_block(std::span<const float> values) {
  if (values.empty()) return;
  RunningStats block;
  double sum = 0.0;
  for (float v : values) sum += v;
  block.count_ = values.size();
  block.mean_ = sum / static_cast<double>(values.size());
  double m2 = 0.0;
  for (float v : values) {
    const double d = static_cast<double>(v) - block.mean_;
    m2 += d * d;
  }
  block.m2_ = m2;
  merge(block);
}

void RunningStats::merge(const RunningStats& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ += delta * (nb / n);
  m2_ += other.m2_ + delta * delta * (na * nb / n);
  count_ += other.count_;
}

ClassStats RunningStats::finalize(double variance_epsilon) const {
  if (count_ == 0) throw NumericError("statistics of an empty partition");
  if (count_ < 2) {
    throw NumericError("variance undefined for a single activation");
  }
  const double var = m2_ / static_cast<double>(count_ - 1);
  return {count_, mean_, std::max(var, variance_epsilon)};
}

void MetricConfig::validate() const {
  if (!(ridge_rho > 0.0)) throw UsageError("ridge_rho must be positive");
  if (!(kernel_sigma > 0.0)) throw UsageError("kernel_sigma must be positive");
  if (!(variance_epsilon > 0.0)) {
    throw UsageError("variance_epsilon must be positive");
  }
  if (mmd_max_per_class == 0) {
    throw UsageError("mmd_max_per_class must be positive");
  }
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kGsd: return "gsd";
    case Metric::kGttest: return "gttest";
    case Metric::kGabssnr: return "gabssnr";
    case Metric::kGfdr: return "gfdr";
    case Metric::kDi: return "di";
    case Metric::kMmd: return "mmd";
    case Metric::kRandom: return "random";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::kGsd, Metric::kGttest, Metric::kGabssnr,
                   Metric::kGfdr, Metric::kDi, Metric::kMmd, Metric::kRandom}) {
    if (metric_name(m) == name) return m;
  }
  throw UsageError("unknown metric \"" + std::string(name) +
                   "\" (expected gsd, gttest, gabssnr, gfdr, di, mmd, random)");
}

ClassStats channel_stats(const ActivationSet& set,
                         std::span<const std::size_t> samples,
                         double variance_epsilon) {
  if (samples.empty()) throw NumericError("channel_stats of an empty subset");
  RunningStats acc;
  for (std::size_t i : samples) {
    if (i >= set.size()) throw UsageError("sample index out of range");
    acc.push_block(set.map(i));
  }
  return acc.finalize(variance_epsilon);
}

double sd(const ClassStats& p, const ClassStats& q) {
  const double dm = p.mean - q.mean;
  const double ratio = 0.5 * (p.variance / q.variance + q.variance / p.variance);
  const double snr = 0.5 * (dm * dm / (p.variance + q.variance));
  return std::max(0.0, ratio + snr - 1.0);
}

double abssnr(const ClassStats& p, const ClassStats& q) {
  return std::abs(p.mean - q.mean) /
         (std::sqrt(p.variance) + std::sqrt(q.variance));
}

double fdr(const ClassStats& p, const ClassStats& q) {
  const double dm = p.mean - q.mean;
  return dm * dm / (p.variance + q.variance);
}

double ttest(const ClassStats& p, const ClassStats& q) {
  if (p.count < 2 || q.count < 2) {
    throw NumericError("ttest requires at least two activations per side");
  }
  const double se = p.variance / static_cast<double>(p.count) +
                    q.variance / static_cast<double>(q.count);
  return std::abs(p.mean - q.mean) / std::sqrt(se);
}

double two_class_score(BaseStatistic base, const ClassStats& p,
                       const ClassStats& q) {
  switch (base) {
    case BaseStatistic::kSd: return sd(p, q);
    case BaseStatistic::kAbsSnr: return abssnr(p, q);
    case BaseStatistic::kFdr: return fdr(p, q);
    case BaseStatistic::kTtest: return ttest(p, q);
  }
  throw UsageError("unknown base statistic");
}

namespace {

void require_all_classes(const std::vector<std::size_t>& class_sizes,
                         std::size_t total) {
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    if (class_sizes[c] == 0) {
      throw NumericError("class " + std::to_string(c) +
                         " has no samples; one-vs-rest partition is empty");
    }
    if (class_sizes[c] == total) {
      throw NumericError("complement of class " + std::to_string(c) +
                         " has no samples");
    }
  }
}

std::vector<std::size_t> class_sizes(const ActivationSet& set) {
  std::vector<std::size_t> sizes(set.num_classes(), 0);
  for (std::uint32_t label : set.labels()) ++sizes[label];
  return sizes;
}

}  // namespace

double g_score(const ActivationSet& set, BaseStatistic base,
               const MetricConfig& cfg) {
  const std::size_t num_classes = set.num_classes();
  require_all_classes(class_sizes(set), set.size());

  std::vector<RunningStats> per_class(num_classes);
  for (std::size_t i = 0; i < set.size(); ++i) {
    per_class[set.label(i)].push_block(set.map(i));
  }

  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    RunningStats rest;
    for (std::size_t other = 0; other < num_classes; ++other) {
      if (other != c) rest.merge(per_class[other]);
    }
    const ClassStats p = per_class[c].finalize(cfg.variance_epsilon);
    const ClassStats q = rest.finalize(cfg.variance_epsilon);
    total += two_class_score(base, p, q);
  }
  return total / static_cast<double>(num_classes);
}

double mmd_two(std::span<const std::span<const float>> a,
               std::span<const std::span<const float>> b, double sigma) {
  if (a.empty() || b.empty()) throw NumericError("mmd of an empty partition");
  const double scale = -1.0 / (2.0 * sigma * sigma);
  auto kernel = [scale](std::span<const float> x, std::span<const float> y) {
    double dist = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = static_cast<double>(x[d]) - static_cast<double>(y[d]);
      dist += diff * diff;
    }
    return std::exp(scale * dist);
  };
  auto self_sum = [&](std::span<const std::span<const float>> s) {
    double off = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) off += kernel(s[i], s[j]);
    }
    return static_cast<double>(s.size()) + 2.0 * off;
  };
  double cross = 0.0;
  for (const auto& x : a) {
    for (const auto& y : b) cross += kernel(x, y);
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double value =
      self_sum(a) / (na * na) + self_sum(b) / (nb * nb) - 2.0 * cross / (na * nb);
  return std::max(0.0, value);
}

double mmd(const ActivationSet& set, const MetricConfig& cfg) {
  const std::size_t num_classes = set.num_classes();
  require_all_classes(class_sizes(set), set.size());

  auto capped = [&](std::vector<std::span<const float>> side,
                    std::uint64_t salt) {
    if (side.size() <= cfg.mmd_max_per_class) return side;
    Rng rng(mix_seed(cfg.mmd_seed, salt));
    std::vector<std::span<const float>> picked;
    picked.reserve(cfg.mmd_max_per_class);
    for (std::size_t i : sample_indices(side.size(), cfg.mmd_max_per_class, rng)) {
      picked.push_back(side[i]);
    }
    return picked;
  };

  double total = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::span<const float>> in_class;
    std::vector<std::span<const float>> rest;
    for (std::size_t i = 0; i < set.size(); ++i) {
      (set.label(i) == c ? in_class : rest).push_back(set.map(i));
    }
    in_class = capped(std::move(in_class), 2 * c);
    rest = capped(std::move(rest), 2 * c + 1);
    total += mmd_two(in_class, rest, cfg.kernel_sigma);
  }
  return total / static_cast<double>(num_classes);
}

double score_channel(const ActivationSet& set, Metric metric,
                     const MetricConfig& cfg) {
  switch (metric) {
    case Metric::kGsd: return g_score(set, BaseStatistic::kSd, cfg);
    case Metric::kGttest: return g_score(set, BaseStatistic::kTtest, cfg);
    case Metric::kGabssnr: return g_score(set, BaseStatistic::kAbsSnr, cfg);
    case Metric::kGfdr: return g_score(set, BaseStatistic::kFdr, cfg);
    case Metric::kDi: return discriminant_information(set, cfg);
    case Metric::kMmd: return mmd(set, cfg);
    case Metric::kRandom:
      throw UsageError("random scores are assigned per layer, not per channel");
  }
  throw UsageError("unknown metric");
}

std::vector<ChannelScore> score_layer(const Tensor& activations,
                                      const LabelFile& labels,
                                      std::uint32_t num_classes,
                                      std::string_view layer_id, Metric metric,
                                      const MetricConfig& cfg,
                                      const ScoreOptions& opts) {
  cfg.validate();
  if (activations.rank() != 4) {
    throw UsageError("activations must be a rank-4 [N, C, W, H] tensor");
  }
  const std::size_t channels = activations.dim(1);
  std::vector<ChannelScore> scores(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    scores[ch].layer_id = std::string(layer_id);
    scores[ch].channel_index = ch;
    scores[ch].metric = std::string(metric_name(metric));
  }

  if (metric == Metric::kRandom) {
    if (labels.count() != activations.dim(0)) {
      throw UsageError("label count does not match activation count");
    }
    std::vector<std::size_t> perm(channels);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(mix_seed(opts.seed, layer_id));
    shuffle(perm, rng);
    for (std::size_t ch = 0; ch < channels; ++ch) {
      scores[ch].score = static_cast<double>(perm[ch]);
    }
    return scores;
  }

  parallel_for(channels, opts.threads, [&](std::size_t ch) {
    const ActivationSet set = slice_channel(activations, ch, labels, num_classes);
    scores[ch].score = score_channel(set, metric, cfg);
  });
  return scores;
}

std::vector<std::size_t> rank_channels(std::span<const ChannelScore> scores,
                                       std::size_t n) {
  if (n > scores.size()) {
    throw UsageError("cannot select " + std::to_string(n) + " of " +
                     std::to_string(scores.size()) + " channels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score < scores[b].score;
    return scores[a].channel_index < scores[b].channel_index;
  });
  std::vector<std::size_t> picked(n);
  for (std::size_t i = 0; i < n; ++i) picked[i] = scores[order[i]].channel_index;
  return picked;
}

void write_scores_csv(std::ostream& out, std::span<const ChannelScore> scores) {
  std::vector<const ChannelScore*> rows;
  rows.reserve(scores.size());
  for (const auto& s : scores) rows.push_back(&s);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ChannelScore* a, const ChannelScore* b) {
                     if (a->layer_id != b->layer_id) return a->layer_id < b->layer_id;
                     return a->channel_index < b->channel_index;
                   });
  out << "layer_id,channel_index,metric,score\n";
  std::ostringstream line;
  line << std::setprecision(9);
  for (const auto* s : rows) {
    line.str("");
    line << s->layer_id << ',' << s->channel_index << ',' << s->metric << ','
         << s->score << '\n';
    out << line.str();
  }
}

std::vector<ChannelScore> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "layer_id,channel_index,metric,score") {
    throw FormatError("score CSV: missing or wrong header");
  }
  std::vector<ChannelScore> scores;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    ChannelScore s;
    std::string channel;
    std::string score;
    if (!std::getline(fields, s.layer_id, ',') || !std::getline(fields, channel, ',') ||
        !std::getline(fields, s.metric, ',') || !std::getline(fields, score)) {
      throw FormatError("score CSV: malformed row " + std::to_string(row));
    }
    try {
      std::size_t used = 0;
      s.channel_index = std::stoul(channel, &used);
      if (used != channel.size()) throw std::invalid_argument("channel");
      s.score = std::stod(score, &used);
      if (used != score.size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw FormatError("score CSV: bad number on row " + std::to_string(row));
    }
    if (!std::isfinite(s.score) || s.score < 0.0) {
      throw FormatError("score CSV: invalid score on row " + std::to_string(row));
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

}  // namespace chanprune
