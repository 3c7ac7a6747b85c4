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

#include <fstream>
#include <set>
#include <sstream>

#include "chanprune/error.hpp"
#include "chanprune/graph.hpp"
#include "chanprune/plan.hpp"
#include "json.hpp"

namespace chanprune {
namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw FormatError(where + ": unknown key \"" + key + "\"");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw FormatError(where + ": missing key \"" + std::string(key) + "\"");
  }
  return *it;
}

std::size_t get_count(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_unsigned()) {
    throw FormatError(where + ": \"" + std::string(key) +
                      "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::size_t get_count_or(const json& obj, const char* key, std::size_t fallback,
                         const std::string& where) {
  return obj.contains(key) ? get_count(obj, key, where) : fallback;
}

bool get_bool_or(const json& obj, const char* key, bool fallback,
                 const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) {
    throw FormatError(where + ": \"" + std::string(key) + "\" must be a boolean");
  }
  return it->get<bool>();
}

std::vector<std::size_t> get_index_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw FormatError(where + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) {
      throw FormatError(where + ": expected non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

void check_version(const json& doc, const std::string& where) {
  const json& v = require(doc, "version", where);
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    throw FormatError(where + ": unsupported schema version (expected 1)");
  }
}

json parse_document(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(where + ": invalid JSON: " + e.what());
  }
}

LayerSpec parse_layer(const json& obj, std::size_t position) {
  const std::string where = "layer #" + std::to_string(position);
  check_keys(obj, {"id", "kind", "params", "inputs", "prunable"}, where);
  LayerSpec layer;
  const json& id = require(obj, "id", where);
  const json& kind = require(obj, "kind", where);
  if (!id.is_string() || !kind.is_string()) {
    throw FormatError(where + ": id and kind must be strings");
  }
  layer.id = id.get<std::string>();
  layer.kind = parse_layer_kind(kind.get<std::string>());
  const std::string lw = "layer \"" + layer.id + "\"";
  const json& inputs = require(obj, "inputs", lw);
  if (!inputs.is_array()) throw FormatError(lw + ": inputs must be an array");
  for (const auto& in : inputs) {
    if (!in.is_string()) throw FormatError(lw + ": inputs must be strings");
    layer.inputs.push_back(in.get<std::string>());
  }
  layer.prunable = get_bool_or(obj, "prunable", false, lw);

  const json params = obj.contains("params") ? obj.at("params") : json::object();
  const std::string pw = lw + " params";
  switch (layer.kind) {
    case LayerKind::kConv2d:
      check_keys(params, {"in_ch", "out_ch", "kernel", "stride", "padding", "bias"}, pw);
      layer.geometry = Conv2dGeometry{get_count(params, "in_ch", pw),
                                      get_count(params, "out_ch", pw),
                                      get_count(params, "kernel", pw),
                                      get_count_or(params, "stride", 1, pw),
                                      get_count_or(params, "padding", 0, pw),
                                      get_bool_or(params, "bias", true, pw)};
      break;
    case LayerKind::kDense:
      check_keys(params, {"in_dim", "out_dim", "bias"}, pw);
      layer.geometry = DenseGeometry{get_count(params, "in_dim", pw),
                                     get_count(params, "out_dim", pw),
                                     get_bool_or(params, "bias", true, pw)};
      break;
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool: {
      check_keys(params, {"window", "stride", "padding"}, pw);
      const std::size_t window = get_count(params, "window", pw);
      layer.geometry = PoolGeometry{window, get_count_or(params, "stride", window, pw),
                                    get_count_or(params, "padding", 0, pw)};
      break;
    }
    case LayerKind::kBatchNorm:
      check_keys(params, {"channels"}, pw);
      layer.geometry = BatchNormGeometry{get_count(params, "channels", pw)};
      break;
    case LayerKind::kChannelSelect:
      check_keys(params, {"kept"}, pw);
      layer.geometry = ChannelSelectGeometry{get_index_list(require(params, "kept", pw), pw)};
      break;
    case LayerKind::kRelu:
    case LayerKind::kAdd:
    case LayerKind::kFlatten:
    case LayerKind::kSoftmax:
      check_keys(params, {}, pw);
      break;
  }
  return layer;
}

json layer_to_json(const LayerSpec& layer) {
  json obj;
  obj["id"] = layer.id;
  obj["kind"] = std::string(layer_kind_name(layer.kind));
  json params = json::object();
  if (const auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
    params = {{"in_ch", g->in_channels}, {"out_ch", g->out_channels},
              {"kernel", g->kernel},     {"stride", g->stride},
              {"padding", g->padding},   {"bias", g->bias}};
  } else if (const auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
    params = {{"in_dim", d->in_features}, {"out_dim", d->out_features}, {"bias", d->bias}};
  } else if (const auto* p = std::get_if<PoolGeometry>(&layer.geometry)) {
    params = {{"window", p->window}, {"stride", p->stride}, {"padding", p->padding}};
  } else if (const auto* b = std::get_if<BatchNormGeometry>(&layer.geometry)) {
    params = {{"channels", b->channels}};
  } else if (const auto* s = std::get_if<ChannelSelectGeometry>(&layer.geometry)) {
    params = {{"kept", s->kept}};
  }
  obj["params"] = std::move(params);
  obj["inputs"] = layer.inputs;
  if (layer.prunable) obj["prunable"] = true;
  return obj;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open file for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot open file for writing: " + path.string());
  out << text;
}

}  // namespace

NetworkGraph parse_graph_json(std::string_view text) {
  const std::string where = "architecture";
  const json doc = parse_document(text, where);
  check_keys(doc, {"version", "input_shape", "layers"}, where);
  check_version(doc, where);
  const auto dims = get_index_list(require(doc, "input_shape", where), where);
  if (dims.size() != 3) throw FormatError(where + ": input_shape must be [C, W, H]");
  const json& layers = require(doc, "layers", where);
  if (!layers.is_array()) throw FormatError(where + ": layers must be an array");
  std::vector<LayerSpec> specs;
  specs.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) specs.push_back(parse_layer(layers[i], i));
  return NetworkGraph(Shape{dims[0], dims[1], dims[2]}, std::move(specs));
}

std::string graph_to_json(const NetworkGraph& graph) {
  json doc;
  doc["version"] = kSchemaVersion;
  const Shape& in = graph.input_shape();
  doc["input_shape"] = {in.channels, in.width, in.height};
  json layers = json::array();
  for (const auto& layer : graph.layers()) layers.push_back(layer_to_json(layer));
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

NetworkGraph load_graph(const std::filesystem::path& path) {
  return parse_graph_json(read_text(path));
}

void save_graph(const std::filesystem::path& path, const NetworkGraph& graph) {
  write_text(path, graph_to_json(graph));
}

std::string plan_to_json(const PruningPlan& plan) {
  json doc;
  doc["version"] = kSchemaVersion;
  doc["metric"] = plan.metric;
  doc["alpha"] = plan.provenance.alpha;
  doc["k"] = plan.provenance.k;
  doc["scoring_samples"] = plan.provenance.scoring_samples;
  json entries = json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"layer", e.layer_id}, {"channels", e.channels}});
  }
  doc["entries"] = std::move(entries);
  doc["expected_flop_delta"] = plan.expected_flop_delta;
  doc["expected_param_delta"] = plan.expected_param_delta;
  return doc.dump(2) + "\n";
}

PruningPlan parse_plan_json(std::string_view text) {
  const std::string where = "pruning plan";
  const json doc = parse_document(text, where);
  check_keys(doc, {"version", "metric", "alpha", "k", "scoring_samples", "entries",
                   "expected_flop_delta", "expected_param_delta"},
             where);
  check_version(doc, where);
  PruningPlan plan;
  const json& metric = require(doc, "metric", where);
  if (!metric.is_string()) throw FormatError(where + ": metric must be a string");
  plan.metric = metric.get<std::string>();
  const json& alpha = require(doc, "alpha", where);
  if (!alpha.is_number()) throw FormatError(where + ": alpha must be a number");
  plan.provenance.alpha = alpha.get<double>();
  plan.provenance.k = get_count_or(doc, "k", 0, where);
  plan.provenance.scoring_samples = get_count_or(doc, "scoring_samples", 0, where);
  const json& entries = require(doc, "entries", where);
  if (!entries.is_array()) throw FormatError(where + ": entries must be an array");
  for (const auto& e : entries) {
    check_keys(e, {"layer", "channels"}, where + " entry");
    const json& layer = require(e, "layer", where);
    if (!layer.is_string()) throw FormatError(where + ": entry layer must be a string");
    plan.entries.push_back({layer.get<std::string>(),
                            get_index_list(require(e, "channels", where), where)});
  }
  plan.expected_flop_delta = get_count(doc, "expected_flop_delta", where);
  plan.expected_param_delta = get_count(doc, "expected_param_delta", where);
  return plan;
}

void save_plan(const std::filesystem::path& path, const PruningPlan& plan) {
  write_text(path, plan_to_json(plan));
}

PruningPlan load_plan(const std::filesystem::path& path) {
  return parse_plan_json(read_text(path));
}

}  // namespace chanprune
