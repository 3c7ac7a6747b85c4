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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chanprune/engine.hpp"
#include "chanprune/error.hpp"
#include "chanprune/flops.hpp"
#include "chanprune/random.hpp"
#include "chanprune/sensitivity.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace chanprune {
namespace {

Tensor uniform(Rng& rng, std::vector<std::size_t> dims, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.data()) v = static_cast<float>(scale * (2.0 * uniform_real(rng) - 1.0));
  return t;
}

Dataset labelled(Rng& rng, const NetworkGraph& g, std::size_t n) {
  Dataset d{testing::random_batch(rng, g.input_shape(), n), {}};
  const std::size_t classes = g.output_shape().size();
  for (std::size_t i = 0; i < n; ++i) d.labels.labels.push_back(static_cast<std::uint32_t>(i % classes));
  return d;
}

// Labels taken from the network itself, so the baseline is perfect and any
// damage from pruning shows up as lost accuracy.
Dataset self_labelled(Rng& rng, const NetworkGraph& g, const WeightStore& w, std::size_t n) {
  Dataset d{testing::random_batch(rng, g.input_shape(), n), {}};
  d.labels.labels = predict(g, w, d.inputs);
  return d;
}

// conv a (prunable) -> relu -> conv b -> relu -> flatten -> dense (3 classes)
struct SmallNet {
  NetworkGraph graph;
  WeightStore weights;
};

SmallNet three_layer_net(Rng& rng) {
  std::vector<LayerSpec> layers = {
      {"a", LayerKind::kConv2d, Conv2dGeometry{2, 6, 3, 1, 1, true}, {"input"}, true},
      {"ra", LayerKind::kRelu, std::monostate{}, {"a"}, false},
      {"b", LayerKind::kConv2d, Conv2dGeometry{6, 4, 3, 2, 1, true}, {"ra"}, true},
      {"rb", LayerKind::kRelu, std::monostate{}, {"b"}, false},
      {"f", LayerKind::kFlatten, std::monostate{}, {"rb"}, false},
      {"d", LayerKind::kDense, DenseGeometry{4 * 3 * 3, 3, true}, {"f"}, false},
  };
  NetworkGraph g(Shape{2, 6, 6}, layers);
  WeightStore w = testing::random_weights(g, rng);
  return {std::move(g), std::move(w)};
}

RunConfig base_config() {
  RunConfig cfg;
  cfg.alpha = 2.0;
  cfg.k = 1;
  cfg.scoring_samples = 0;
  return cfg;
}

TEST(Analyze, DeadChannelsKeepBaselineAccuracy) {
  Rng rng(1);
  SmallNet net = three_layer_net(rng);
  // Only "a" is prunable with the max FLOSS, so alpha = 2 removes 2 channels.
  std::vector<LayerSpec> layers(net.graph.layers().begin(), net.graph.layers().end());
  layers[2].prunable = false;
  const NetworkGraph g(net.graph.input_shape(), layers);
  Tensor wa = net.weights.get("a", "weight");
  Tensor ba = net.weights.get("a", "bias");
  Tensor wb = net.weights.get("b", "weight");
  for (std::size_t dead : {1, 4}) {
    for (std::size_t i = 0; i < 2 * 9; ++i) wa[dead * 18 + i] = 0.0f;
    ba[dead] = 0.0f;
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t k = 0; k < 9; ++k) wb[(o * 6 + dead) * 9 + k] = 0.0f;
    }
  }
  net.weights.set("a", "weight", wa);
  net.weights.set("a", "bias", ba);
  net.weights.set("b", "weight", wb);

  const Dataset val = labelled(rng, g, 60);
  const Dataset scoring = labelled(rng, g, 60);
  const SensitivityReport report = analyze(g, net.weights, val, scoring, base_config());
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].n_channels, 2u);
  auto pruned = report.rows[0].pruned_channels;
  std::sort(pruned.begin(), pruned.end());
  EXPECT_EQ(pruned, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(report.rows[0].accuracy, report.baseline_accuracy);
}

// Two identical branches summed: input -> p{1,2} (prunable) -> relu -> q{1,2} -> add.
SmallNet twin_net(Rng& rng) {
  std::vector<LayerSpec> layers;
  for (const char* s : {"1", "2"}) {
    const std::string p = std::string("p") + s, r = std::string("r") + s, q = std::string("q") + s;
    layers.push_back({p, LayerKind::kConv2d, Conv2dGeometry{2, 5, 3, 1, 1, true}, {"input"}, true});
    layers.push_back({r, LayerKind::kRelu, std::monostate{}, {p}, false});
    layers.push_back({q, LayerKind::kConv2d, Conv2dGeometry{5, 3, 1, 1, 0, true}, {r}, false});
  }
  layers.push_back({"sum", LayerKind::kAdd, std::monostate{}, {"q1", "q2"}, false});
  layers.push_back({"f", LayerKind::kFlatten, std::monostate{}, {"sum"}, false});
  layers.push_back({"d", LayerKind::kDense, DenseGeometry{3 * 5 * 5, 4, true}, {"f"}, false});
  NetworkGraph g(Shape{2, 5, 5}, layers);
  WeightStore w;
  for (const char* layer : {"p", "q"}) {
    const bool first = std::string(layer) == "p";
    const Tensor weight = first ? uniform(rng, {5, 2, 3, 3}, 0.6) : uniform(rng, {3, 5, 1, 1}, 0.6);
    const Tensor bias = uniform(rng, {first ? 5u : 3u}, 0.2);
    for (const char* s : {"1", "2"}) {
      w.set(std::string(layer) + s, "weight", weight);
      w.set(std::string(layer) + s, "bias", bias);
    }
  }
  w.set("d", "weight", uniform(rng, {4, 75}, 0.3));
  w.set("d", "bias", uniform(rng, {4}, 0.1));
  return {std::move(g), std::move(w)};
}

TEST(Analyze, TwinLayersTieAndLowerIndexWins) {
  Rng rng(2);
  const SmallNet net = twin_net(rng);
  const Dataset val = self_labelled(rng, net.graph, net.weights, 80);
  const Dataset scoring = labelled(rng, net.graph, 80);
  const SensitivityReport report = analyze(net.graph, net.weights, val, scoring, base_config());
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].accuracy, report.rows[1].accuracy);
  EXPECT_EQ(report.rows[0].pruned_channels, report.rows[1].pruned_channels);
  EXPECT_EQ(report.rows[0].layer_id, "p1");
  const PruningPlan plan = select_and_plan(net.graph, report, base_config());
  ASSERT_EQ(plan.entries.size(), 1u);
  EXPECT_EQ(plan.entries[0].layer_id, "p1");
}

TEST(Analyze, MatchesScriptedPruneThenEvaluate) {
  Rng rng(3);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = self_labelled(rng, net.graph, net.weights, 90);
  const Dataset scoring = labelled(rng, net.graph, 90);
  RunConfig cfg = base_config();
  cfg.alpha = 3.0;
  const SensitivityReport report = analyze(net.graph, net.weights, val, scoring, cfg);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.baseline_accuracy, 1.0);

  for (const auto& row : report.rows) {
    // Score by hand on post-relu activations with the brute-force oracle.
    const std::string relu = row.layer_id == "a" ? "ra" : "rb";
    ForwardOptions opts;
    opts.capture = {relu};
    const Tensor acts = forward(net.graph, net.weights, scoring.inputs, opts).captured.at(relu);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c = 0; c < acts.dim(1); ++c) {
      const ActivationSet set = slice_channel(acts, c, scoring.labels, 3);
      scored.emplace_back(testing::brute_g_score(set, BaseStatistic::kSd, 1e-12), c);
    }
    std::sort(scored.begin(), scored.end());
    const std::size_t n = static_cast<std::size_t>(std::llround(
        cfg.alpha * static_cast<double>(report.table.floss_max) / static_cast<double>(row.floss)));
    ASSERT_EQ(row.n_channels, std::min(n, row.channels - 1));
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < row.n_channels; ++i) want.push_back(scored[i].second);
    EXPECT_EQ(row.pruned_channels, want);

    // Prune by zero-masking the unpruned network and compare accuracy.
    std::sort(want.begin(), want.end());
    PruningPlan plan;
    plan.entries.push_back({row.layer_id, want});
    ForwardOptions masked;
    masked.zero_channels = testing::zero_mask_for_plan(net.graph, plan);
    const Tensor out = forward(net.graph, net.weights, val.inputs, masked).output;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < val.size(); ++s) {
      const auto r = out.data().subspan(s * 3, 3);
      const auto best = static_cast<std::uint32_t>(std::max_element(r.begin(), r.end()) - r.begin());
      if (best == val.labels.labels[s]) ++correct;
    }
    EXPECT_NEAR(row.accuracy, static_cast<double>(correct) / val.size(), 1.0 / val.size() + 1e-12);
  }
}

TEST(Analyze, FlopNormalization) {
  Rng rng(4);
  for (int t = 0; t < 6; ++t) {
    const auto net = testing::random_network(rng, t % 2 == 0);
    const Dataset val = labelled(rng, net.graph, 30);
    RunConfig cfg = base_config();
    cfg.alpha = 2.0 + t % 3;
    const SensitivityReport report = analyze(net.graph, net.weights, val, val, cfg);
    const double target = cfg.alpha * static_cast<double>(report.table.floss_max);
    EXPECT_EQ(report.rows.size() + report.excluded.size(), report.table.entries.size());
    for (const auto& row : report.rows) {
      EXPECT_GE(row.n_channels, 1u);
      EXPECT_GE(row.accuracy, 0.0);
      EXPECT_LE(row.accuracy, 1.0);
      EXPECT_EQ(row.flop_reduction, row.n_channels * row.floss);
      const bool clamped = row.n_channels == row.channels - 1 &&
                           static_cast<double>(row.flop_reduction) < target;
      if (!clamped) {
        EXPECT_LE(std::fabs(static_cast<double>(row.flop_reduction) - target), row.floss / 2.0);
      }
    }
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
      const auto& a = report.rows[i - 1];
      const auto& b = report.rows[i];
      EXPECT_TRUE(a.accuracy > b.accuracy ||
                  (a.accuracy == b.accuracy && a.layer_index < b.layer_index));
    }
  }
}

TEST(Analyze, DeterministicAndDoesNotMutate) {
  Rng rng(5);
  const auto net = testing::random_network(rng, true);
  const auto graph_copy = net.graph;
  const auto weights_copy = net.weights;
  const Dataset val = labelled(rng, net.graph, 40);
  const Dataset scoring = labelled(rng, net.graph, 50);
  RunConfig cfg = base_config();
  cfg.scoring_samples = 30;
  cfg.seed = 17;
  const auto one = analyze(net.graph, net.weights, val, scoring, cfg);
  cfg.threads = 3;
  const auto many = analyze(net.graph, net.weights, val, scoring, cfg);
  EXPECT_EQ(net.graph, graph_copy);
  EXPECT_EQ(net.weights, weights_copy);
  EXPECT_EQ(one.scoring_samples_used, 30u);
  ASSERT_EQ(one.rows.size(), many.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    EXPECT_EQ(one.rows[i].layer_id, many.rows[i].layer_id);
    EXPECT_EQ(one.rows[i].accuracy, many.rows[i].accuracy);
    EXPECT_EQ(one.rows[i].pruned_channels, many.rows[i].pruned_channels);
  }
}

TEST(Analyze, ExcludedLayersAreListed) {
  Rng rng(6);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  RunConfig cfg = base_config();
  cfg.alpha = 0.4;  // FLOSS a = 972, b = 513: a rounds to 0, b to 1
  const auto report = analyze(net.graph, net.weights, val, val, cfg);
  EXPECT_EQ(report.table.entry("a").floss, 972u);
  EXPECT_EQ(report.table.entry("b").floss, 513u);
  EXPECT_EQ(report.excluded, (std::vector<std::string>{"a"}));
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.rows[0].layer_id, "b");
}

TEST(Analyze, FailureNamesTheLayer) {
  Rng rng(7);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  Dataset scoring = val;
  for (auto& l : scoring.labels.labels) l = l == 2 ? 0 : l;  // class 2 missing
  try {
    analyze(net.graph, net.weights, val, scoring, base_config());
    FAIL() << "expected an error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer \""), std::string::npos);
  }
}

TEST(Analyze, RatioBaseline) {
  Rng rng(8);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  RunConfig cfg = base_config();
  cfg.ratio_baseline = 0.5;
  const auto report = analyze(net.graph, net.weights, val, val, cfg);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.n_channels, static_cast<std::size_t>(std::round(0.5 * row.channels)));
  }
  cfg.ratio_baseline = 1.5;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(SelectAndPlan, TopK) {
  Rng rng(9);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  RunConfig cfg = base_config();
  const auto report = analyze(net.graph, net.weights, val, val, cfg);
  ASSERT_EQ(report.rows.size(), 2u);
  const PruningPlan one = select_and_plan(net.graph, report, cfg);
  ASSERT_EQ(one.entries.size(), 1u);
  EXPECT_EQ(one.entries[0].layer_id, report.rows[0].layer_id);
  EXPECT_EQ(one.provenance.k, 1u);
  cfg.k = 2;
  const PruningPlan both = select_and_plan(net.graph, report, cfg);
  EXPECT_EQ(both.entries.size(), 2u);
  cfg.k = 3;
  EXPECT_THROW(select_and_plan(net.graph, report, cfg), UsageError);
  cfg.k = 0;
  EXPECT_THROW(select_and_plan(net.graph, report, cfg), UsageError);
}

TEST(Iterate, OneCycleEqualsManualSteps) {
  Rng rng(10);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  const RunConfig cfg = base_config();
  const auto outcome = iterate(net.graph, net.weights, val, val, cfg, 1);
  ASSERT_FALSE(outcome.error);
  ASSERT_EQ(outcome.cycles.size(), 1u);
  const auto report = analyze(net.graph, net.weights, val, val, cfg);
  const auto plan = select_and_plan(net.graph, report, cfg);
  const auto [g, w] = apply_plan_weights(net.graph, net.weights, plan);
  EXPECT_EQ(outcome.cycles[0].plan, plan);
  EXPECT_EQ(outcome.cycles[0].graph, g);
  EXPECT_EQ(outcome.cycles[0].weights, w);
  EXPECT_THROW(iterate(net.graph, net.weights, val, val, cfg, 0), UsageError);
}

TEST(Iterate, TwoCyclesMatchSaveLoadRoundTrip) {
  Rng rng(11);
  const auto net = testing::random_network(rng, true);
  const Dataset val = labelled(rng, net.graph, 40);
  const RunConfig cfg = base_config();
  const auto outcome = iterate(net.graph, net.weights, val, val, cfg, 2);
  ASSERT_EQ(outcome.cycles.size(), 2u) << outcome.error.value_or("");
  EXPECT_LT(flop_count(outcome.cycles[0].graph), flop_count(net.graph));
  EXPECT_LT(flop_count(outcome.cycles[1].graph), flop_count(outcome.cycles[0].graph));

  const auto dir = std::filesystem::temp_directory_path() / "chanprune_iterate_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto report1 = analyze(net.graph, net.weights, val, val, cfg);
  const auto plan1 = select_and_plan(net.graph, report1, cfg);
  save_plan(dir / "plan1.json", plan1);
  const auto [g1, w1] = apply_plan_weights(net.graph, net.weights, load_plan(dir / "plan1.json"));
  save_graph(dir / "arch1.json", g1);
  const auto manifest = save_weights(dir / "weights1", w1);
  const NetworkGraph g1_loaded = load_graph(dir / "arch1.json");
  const WeightStore w1_loaded = load_weights(manifest);
  const auto report2 = analyze(g1_loaded, w1_loaded, val, val, cfg);
  const auto plan2 = select_and_plan(g1_loaded, report2, cfg);
  const auto [g2, w2] = apply_plan_weights(g1_loaded, w1_loaded, plan2);
  std::filesystem::remove_all(dir);

  EXPECT_EQ(outcome.cycles[0].plan, plan1);
  EXPECT_EQ(outcome.cycles[1].plan, plan2);
  EXPECT_EQ(outcome.cycles[1].graph, g2);
  EXPECT_EQ(outcome.cycles[1].weights, w2);
}

TEST(Iterate, KeepsEarlierCyclesOnFailure) {
  Rng rng(12);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  RunConfig cfg = base_config();
  cfg.alpha = 100.0;  // first cycle strips every layer to one channel
  cfg.k = 2;
  const auto outcome = iterate(net.graph, net.weights, val, val, cfg, 3);
  EXPECT_EQ(outcome.cycles.size(), 1u);
  ASSERT_TRUE(outcome.error.has_value());
  EXPECT_NE(outcome.error->find("cycle 2"), std::string::npos);
}

TEST(Report, CsvAndJson) {
  Rng rng(13);
  const SmallNet net = three_layer_net(rng);
  const Dataset val = labelled(rng, net.graph, 30);
  const auto report = analyze(net.graph, net.weights, val, val, base_config());
  std::ostringstream csv;
  write_report_csv(csv, report);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer_id,n_channels,floss,acc,baseline_acc");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, report.rows.size());
  const std::string json = report_to_json(report);
  EXPECT_NE(json.find("\"run_config\""), std::string::npos);
  EXPECT_NE(json.find("\"alpha\": 2.0"), std::string::npos);
  EXPECT_NE(json.find("\"metric\": \"gsd\""), std::string::npos);
}

}  // namespace
}  // namespace chanprune
