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

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "chanprune/engine.hpp"
#include "chanprune/error.hpp"
#include "json.hpp"

namespace chanprune {
namespace {

using nlohmann::json;

struct Required {
  std::string name;
  std::vector<std::size_t> dims;
};

std::vector<Required> required_tensors(const LayerSpec& layer) {
  if (const auto* g = std::get_if<Conv2dGeometry>(&layer.geometry)) {
    std::vector<Required> r{{"weight", {g->out_channels, g->in_channels, g->kernel, g->kernel}}};
    if (g->bias) r.push_back({"bias", {g->out_channels}});
    return r;
  }
  if (const auto* d = std::get_if<DenseGeometry>(&layer.geometry)) {
    std::vector<Required> r{{"weight", {d->out_features, d->in_features}}};
    if (d->bias) r.push_back({"bias", {d->out_features}});
    return r;
  }
  if (const auto* b = std::get_if<BatchNormGeometry>(&layer.geometry)) {
    return {{"scale", {b->channels}},
            {"shift", {b->channels}},
            {"running_mean", {b->channels}},
            {"running_var", {b->channels}}};
  }
  return {};
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

std::string file_stem(std::string_view id) {
  std::string s(id);
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  return s;
}

}  // namespace

void WeightStore::set(std::string_view layer_id, std::string_view name, Tensor tensor) {
  auto& layer = layers_[std::string(layer_id)];
  layer.insert_or_assign(std::string(name), std::move(tensor));
}

const Tensor& WeightStore::get(std::string_view layer_id, std::string_view name) const {
  auto layer = layers_.find(layer_id);
  if (layer != layers_.end()) {
    auto t = layer->second.find(name);
    if (t != layer->second.end()) return t->second;
  }
  throw FormatError("missing weight tensor \"" + std::string(name) +
                    "\" for layer \"" + std::string(layer_id) + "\"");
}

bool WeightStore::has(std::string_view layer_id, std::string_view name) const {
  auto layer = layers_.find(layer_id);
  return layer != layers_.end() && layer->second.count(name) > 0;
}

void validate_weights(const NetworkGraph& graph, const WeightStore& weights) {
  std::size_t expected_layers = 0;
  for (const auto& layer : graph.layers()) {
    const auto required = required_tensors(layer);
    if (required.empty()) continue;
    ++expected_layers;
    auto it = weights.layers().find(layer.id);
    if (it == weights.layers().end()) {
      throw FormatError("no weights for layer \"" + layer.id + "\"");
    }
    if (it->second.size() != required.size()) {
      throw FormatError("layer \"" + layer.id + "\" has " +
                        std::to_string(it->second.size()) + " weight tensors, expected " +
                        std::to_string(required.size()));
    }
    for (const auto& r : required) {
      const Tensor& t = weights.get(layer.id, r.name);
      if (t.dims() != r.dims) {
        throw FormatError("layer \"" + layer.id + "\" tensor \"" + r.name +
                          "\" has shape " + dims_string(t.dims()) + ", expected " +
                          dims_string(r.dims));
      }
    }
    if (layer.kind == LayerKind::kBatchNorm) {
      for (float v : weights.get(layer.id, "running_var").data()) {
        if (v < 0.0f) throw FormatError("layer \"" + layer.id + "\" has negative running_var");
      }
    }
  }
  if (weights.layers().size() != expected_layers) {
    for (const auto& [id, tensors] : weights.layers()) {
      if (!graph.find(id)) throw FormatError("weights for unknown layer \"" + id + "\"");
    }
    throw FormatError("weights present for a layer without parameters");
  }
}

WeightStore load_weights(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw UsageError("cannot open weights manifest: " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("weights manifest: invalid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("version") || doc["version"] != 1 ||
      !doc.contains("layers") || !doc["layers"].is_object() || doc.size() != 2) {
    throw FormatError("weights manifest: expected {\"version\":1,\"layers\":{...}}");
  }
  const auto base = manifest.parent_path();
  WeightStore store;
  for (const auto& [layer_id, tensors] : doc["layers"].items()) {
    if (!tensors.is_object()) {
      throw FormatError("weights manifest: layer \"" + layer_id + "\" must map names to paths");
    }
    for (const auto& [name, path] : tensors.items()) {
      if (!path.is_string()) {
        throw FormatError("weights manifest: path for " + layer_id + "." + name +
                          " must be a string");
      }
      std::filesystem::path p = path.get<std::string>();
      if (p.is_relative()) p = base / p;
      store.set(layer_id, name, load_tensor(p));
    }
  }
  return store;
}

std::filesystem::path save_weights(const std::filesystem::path& dir,
                                   const WeightStore& weights) {
  std::filesystem::create_directories(dir);
  json layers = json::object();
  for (const auto& [layer_id, tensors] : weights.layers()) {
    json entry = json::object();
    for (const auto& [name, tensor] : tensors) {
      const std::string file = file_stem(layer_id) + "." + name + ".ptsr";
      save_tensor(dir / file, tensor);
      entry[name] = file;
    }
    layers[layer_id] = std::move(entry);
  }
  const json doc = {{"version", 1}, {"layers", std::move(layers)}};
  const auto manifest = dir / "weights.json";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw UsageError("cannot write weights manifest: " + manifest.string());
  out << doc.dump(2) << "\n";
  return manifest;
}

void Dataset::validate() const {
  if (inputs.rank() != 4) throw FormatError("dataset inputs must be [N, C, W, H]");
  if (labels.count() == 0) throw FormatError("dataset is empty");
  if (inputs.dim(0) != labels.count()) {
    throw FormatError("dataset has " + std::to_string(inputs.dim(0)) + " inputs but " +
                      std::to_string(labels.count()) + " labels");
  }
}

Dataset load_dataset(const std::filesystem::path& inputs,
                     const std::filesystem::path& labels) {
  Dataset d{load_tensor(inputs), load_labels(labels)};
  d.validate();
  return d;
}

Tensor erase_along_axis(const Tensor& tensor, std::size_t axis,
                        std::span<const std::size_t> positions) {
  if (axis >= tensor.rank()) throw UsageError("axis out of range");
  const std::size_t extent = tensor.dim(axis);
  std::vector<bool> drop(extent, false);
  std::size_t dropped = 0;
  for (std::size_t p : positions) {
    if (p >= extent) throw UsageError("erase position out of range");
    if (!drop[p]) ++dropped;
    drop[p] = true;
  }
  if (dropped == extent) throw UsageError("erase would empty a tensor axis");

  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= tensor.dim(a);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < tensor.rank(); ++a) inner *= tensor.dim(a);

  std::vector<std::size_t> dims = tensor.dims();
  dims[axis] = extent - dropped;
  std::vector<float> data;
  data.reserve(outer * dims[axis] * inner);
  const auto src = tensor.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t e = 0; e < extent; ++e) {
      if (drop[e]) continue;
      const float* block = src.data() + (o * extent + e) * inner;
      data.insert(data.end(), block, block + inner);
    }
  }
  return Tensor(std::move(dims), std::move(data));
}

std::pair<NetworkGraph, WeightStore> apply_plan_weights(const NetworkGraph& graph,
                                                        const WeightStore& weights,
                                                        const PruningPlan& plan) {
  validate_weights(graph, weights);
  NetworkGraph pruned_graph = apply_plan_graph(graph, plan);
  WeightStore pruned = weights;

  auto erase = [&](const std::string& id, std::string_view name, std::size_t axis,
                   const std::vector<std::size_t>& positions) {
    if (!pruned.has(id, name)) return;
    pruned.set(id, name, erase_along_axis(pruned.get(id, name), axis, positions));
  };

  for (const auto& entry : plan.entries) {
    const auto effects = trace_channel_removal(graph, graph.index_of(entry.layer_id),
                                               entry.channels);
    for (const auto& effect : effects) {
      const LayerSpec& layer = graph.layer(effect.layer_index);
      switch (effect.kind) {
        case ChannelEffectKind::kOwner:
          if (layer.kind == LayerKind::kConv2d || layer.kind == LayerKind::kDense) {
            erase(layer.id, "weight", 0, effect.positions);
            erase(layer.id, "bias", 0, effect.positions);
          }
          break;
        case ChannelEffectKind::kPassThrough:
          if (layer.kind == LayerKind::kBatchNorm) {
            for (auto name : {"scale", "shift", "running_mean", "running_var"}) {
              erase(layer.id, name, 0, effect.positions);
            }
          }
          break;
        case ChannelEffectKind::kFlatten:
          break;
        case ChannelEffectKind::kConsumerInput:
          erase(layer.id, "weight", 1, effect.positions);
          break;
      }
    }
  }
  validate_weights(pruned_graph, pruned);
  return {std::move(pruned_graph), std::move(pruned)};
}

}  // namespace chanprune
