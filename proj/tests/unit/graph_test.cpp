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

#include <string>

#include "chanprune/error.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/random.hpp"
#include "support/generators.hpp"

namespace chanprune {
namespace {

// conv(3->4) -> relu -> maxpool 2 -> flatten -> dense(4*4*4 -> 5), plus
// whatever is spliced in through `extra`.
std::string chain_json(const std::string& conv_params = R"("in_ch":3,"out_ch":4,"kernel":3,"padding":1)",
                       bool prunable = true) {
  return std::string(R"({"version":1,"input_shape":[3,8,8],"layers":[)") +
         R"({"id":"c1","kind":"conv2d","params":{)" + conv_params + R"(},"inputs":["input"],"prunable":)" +
         (prunable ? "true" : "false") + "}," +
         R"({"id":"r1","kind":"relu","inputs":["c1"]},)"
         R"({"id":"p1","kind":"maxpool","params":{"window":2},"inputs":["r1"]},)"
         R"({"id":"f","kind":"flatten","inputs":["p1"]},)"
         R"({"id":"fc","kind":"dense","params":{"in_dim":64,"out_dim":5},"inputs":["f"]}]})";
}

std::string message_of(const std::string& json) {
  try {
    parse_graph_json(json);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "parsed";
}

TEST(Graph, ParsesChainAndInfersShapes) {
  const NetworkGraph g = parse_graph_json(chain_json());
  ASSERT_EQ(g.size(), 5u);
  EXPECT_EQ(g.shape("c1"), (Shape{4, 8, 8}));
  EXPECT_EQ(g.shape("p1"), (Shape{4, 4, 4}));
  EXPECT_EQ(g.shape("f"), (Shape{64, 1, 1}));
  EXPECT_EQ(g.output_shape(), (Shape{5, 1, 1}));
  EXPECT_EQ(g.output_index(), 4u);
  EXPECT_EQ(g.prunable_indices(), (std::vector<std::size_t>{0}));
  EXPECT_EQ(g.consumers(0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(g.producers(0), (std::vector<std::size_t>{NetworkGraph::kInputNode}));
  const auto& pool = std::get<PoolGeometry>(g.layer("p1").geometry);
  EXPECT_EQ(pool.stride, 2u);
}

TEST(Graph, StridedConvGeometry) {
  const NetworkGraph g = parse_graph_json(
      R"({"version":1,"input_shape":[3,224,224],"layers":[)"
      R"({"id":"c","kind":"conv2d","params":{"in_ch":3,"out_ch":64,"kernel":7,"stride":2,"padding":3,"bias":false},"inputs":["input"]},)"
      R"({"id":"p","kind":"maxpool","params":{"window":3,"stride":2,"padding":1},"inputs":["c"]}]})");
  EXPECT_EQ(g.shape("c"), (Shape{64, 112, 112}));
  EXPECT_EQ(g.shape("p"), (Shape{64, 56, 56}));
}

TEST(Graph, RejectsInvalidInputs) {
  // Channel mismatch along an edge.
  EXPECT_NE(message_of(chain_json(R"("in_ch":2,"out_ch":4,"kernel":3,"padding":1)")).find("in_ch"),
            std::string::npos);
  // Spatial arithmetic breaks the dense input size.
  EXPECT_NE(message_of(chain_json(R"("in_ch":3,"out_ch":4,"kernel":3)")).find("in_dim"),
            std::string::npos);
  // Zero geometry.
  EXPECT_NE(message_of(chain_json(R"("in_ch":3,"out_ch":0,"kernel":3,"padding":1)")), "parsed");
  // Unknown key, missing version, wrong version, unknown kind, bad JSON.
  EXPECT_NE(message_of(chain_json(R"("in_ch":3,"out_ch":4,"kernel":3,"padding":1,"groups":2)")),
            "parsed");
  EXPECT_NE(message_of(R"({"input_shape":[1,1,1],"layers":[]})"), "parsed");
  EXPECT_NE(message_of(R"({"version":2,"input_shape":[1,1,1],"layers":[]})"), "parsed");
  EXPECT_NE(message_of(R"({"version":1,"input_shape":[1,1,1],"layers":[{"id":"x","kind":"gelu","inputs":["input"]}]})"),
            "parsed");
  EXPECT_NE(message_of("{"), "parsed");
}

TEST(Graph, RejectsStructuralErrors) {
  const std::string head = R"({"version":1,"input_shape":[2,4,4],"layers":[)";
  // Forward reference (would need a cycle or reordering).
  EXPECT_NE(message_of(head + R"({"id":"a","kind":"relu","inputs":["b"]},{"id":"b","kind":"relu","inputs":["a"]}]})"),
            "parsed");
  // Two sinks.
  EXPECT_NE(message_of(head + R"({"id":"a","kind":"relu","inputs":["input"]},{"id":"b","kind":"relu","inputs":["input"]}]})")
                .find("exactly one output"),
            std::string::npos);
  // Add over mismatched widths.
  EXPECT_NE(message_of(head + R"({"id":"s","kind":"channel_select","params":{"kept":[0]},"inputs":["input"]},)"
                              R"({"id":"a","kind":"add","inputs":["s","input"]}]})")
                .find("add inputs differ"),
            std::string::npos);
  // Kept list not increasing.
  EXPECT_NE(message_of(head + R"({"id":"s","kind":"channel_select","params":{"kept":[1,0]},"inputs":["input"]}]})")
                .find("strictly increasing"),
            std::string::npos);
  // Reserved and duplicate ids.
  EXPECT_NE(message_of(head + R"({"id":"input","kind":"relu","inputs":["input"]}]})"), "parsed");
  EXPECT_NE(message_of(head + R"({"id":"a","kind":"relu","inputs":["input"]},{"id":"a","kind":"relu","inputs":["a"]}]})"),
            "parsed");
}

TEST(Graph, PruningRules) {
  const std::string head = R"({"version":1,"input_shape":[2,4,4],"layers":[)";
  // A prunable conv may not feed an add directly.
  EXPECT_NE(message_of(head + R"({"id":"c","kind":"conv2d","params":{"in_ch":2,"out_ch":2,"kernel":1},"inputs":["input"],"prunable":true},)"
                              R"({"id":"a","kind":"add","inputs":["c","input"]}]})")
                .find("channels reach add"),
            std::string::npos);
  // Nor be the output.
  EXPECT_NE(message_of(head + R"({"id":"c","kind":"conv2d","params":{"in_ch":2,"out_ch":2,"kernel":1},"inputs":["input"],"prunable":true}]})"),
            "parsed");
  // Relu cannot be prunable.
  EXPECT_NE(message_of(head + R"({"id":"r","kind":"relu","inputs":["input"],"prunable":true},)"
                              R"({"id":"c","kind":"conv2d","params":{"in_ch":2,"out_ch":2,"kernel":1},"inputs":["r"]}]})"),
            "parsed");
  // Prunable channels may not reach softmax.
  EXPECT_NE(message_of(head + R"({"id":"f","kind":"flatten","inputs":["input"]},)"
                              R"({"id":"d","kind":"dense","params":{"in_dim":32,"out_dim":3},"inputs":["f"],"prunable":true},)"
                              R"({"id":"s","kind":"softmax","inputs":["d"]}]})"),
            "parsed");
}

TEST(Graph, JsonRoundTrip) {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const NetworkGraph g = testing::random_graph(rng, t % 2 == 0);
    const NetworkGraph back = parse_graph_json(graph_to_json(g));
    EXPECT_EQ(back, g);
  }
  const NetworkGraph r = testing::toy_resnet_graph();
  EXPECT_EQ(parse_graph_json(graph_to_json(r)), r);
}

TEST(Graph, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "chanprune_graph_test.json";
  const NetworkGraph g = testing::two_conv_graph();
  save_graph(path, g);
  EXPECT_EQ(load_graph(path), g);
  std::filesystem::remove(path);
  EXPECT_THROW(load_graph(path), UsageError);
}

TEST(Trace, ExpandsThroughFlatten) {
  const NetworkGraph g = parse_graph_json(chain_json());
  const std::size_t removed[] = {1, 3};
  const auto effects = trace_channel_removal(g, 0, removed);
  ASSERT_EQ(effects.size(), 5u);
  EXPECT_EQ(effects[0].kind, ChannelEffectKind::kOwner);
  EXPECT_EQ(effects[1].kind, ChannelEffectKind::kPassThrough);
  EXPECT_EQ(effects[2].kind, ChannelEffectKind::kPassThrough);
  EXPECT_EQ(effects[3].kind, ChannelEffectKind::kFlatten);
  EXPECT_EQ(effects[4].kind, ChannelEffectKind::kConsumerInput);
  ASSERT_EQ(effects[3].positions.size(), 32u);
  EXPECT_EQ(effects[3].positions.front(), 16u);
  EXPECT_EQ(effects[3].positions.back(), 63u);
  EXPECT_EQ(effects[4].positions, effects[3].positions);
}

TEST(Trace, RejectsBadRemovals) {
  const NetworkGraph g = parse_graph_json(chain_json());
  const std::size_t dup[] = {1, 1};
  const std::size_t range[] = {4};
  const std::size_t all[] = {0, 1, 2, 3};
  EXPECT_THROW(trace_channel_removal(g, 0, dup), UsageError);
  EXPECT_THROW(trace_channel_removal(g, 0, range), UsageError);
  EXPECT_THROW(trace_channel_removal(g, 0, all), UsageError);
  const std::size_t one[] = {0};
  EXPECT_THROW(trace_channel_removal(g, 1, one), UsageError);
}

TEST(Remove, ShrinksConsumers) {
  const NetworkGraph g = parse_graph_json(chain_json());
  const std::size_t removed[] = {1};
  const NetworkGraph pruned = remove_output_channels(g, "c1", removed);
  EXPECT_EQ(std::get<Conv2dGeometry>(pruned.layer("c1").geometry).out_channels, 3u);
  EXPECT_EQ(std::get<DenseGeometry>(pruned.layer("fc").geometry).in_features, 48u);
  EXPECT_EQ(pruned.shape("p1"), (Shape{3, 4, 4}));
}

TEST(Remove, ChannelSelectKeepsSkipWidth) {
  const NetworkGraph g = testing::toy_resnet_graph();
  std::string select;
  for (const auto& l : g.layers()) {
    if (l.kind == LayerKind::kChannelSelect) {
      select = l.id;
      break;
    }
  }
  ASSERT_FALSE(select.empty());
  const std::size_t removed[] = {0, 5};
  const NetworkGraph pruned = remove_output_channels(g, select, removed);
  EXPECT_EQ(std::get<ChannelSelectGeometry>(pruned.layer(select).geometry).kept,
            (std::vector<std::size_t>{1, 2, 3, 4, 6, 7}));
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    if (pruned.layer(i).kind == LayerKind::kAdd) EXPECT_EQ(pruned.shape(i).channels, 8u);
  }
}

}  // namespace
}  // namespace chanprune
