#!/usr/bin/env python3
# Copyright 2026 The chanprune Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the VGG-16 and ResNet-50 (ImageNet geometry) architecture files."""

import argparse
import json
import pathlib


class Builder:
    def __init__(self, channels, side):
        self.input_shape = [channels, side, side]
        self.layers = []
        self.channels = channels
        self.side = side
        self.current = "input"

    def _add(self, layer_id, kind, params, inputs=None, prunable=False):
        layer = {"id": layer_id, "kind": kind, "params": params,
                 "inputs": inputs or [self.current]}
        if prunable:
            layer["prunable"] = True
        self.layers.append(layer)
        self.current = layer_id
        return layer_id

    def conv(self, layer_id, out_ch, kernel, stride=1, padding=0, bias=True,
             prunable=False, source=None):
        inputs = [source] if source else None
        self._add(layer_id, "conv2d",
                  {"in_ch": self.channels, "out_ch": out_ch, "kernel": kernel,
                   "stride": stride, "padding": padding, "bias": bias},
                  inputs, prunable)
        self.side = (self.side + 2 * padding - kernel) // stride + 1
        self.channels = out_ch
        return layer_id

    def relu(self, layer_id):
        return self._add(layer_id, "relu", {})

    def bn(self, layer_id):
        return self._add(layer_id, "batchnorm", {"channels": self.channels})

    def pool(self, layer_id, kind, window, stride, padding=0):
        self._add(layer_id, kind, {"window": window, "stride": stride, "padding": padding})
        self.side = (self.side + 2 * padding - window) // stride + 1
        return layer_id

    def flatten(self, layer_id):
        self._add(layer_id, "flatten", {})
        self.channels = self.channels * self.side * self.side
        self.side = 1
        return layer_id

    def dense(self, layer_id, out_dim, prunable=False):
        self._add(layer_id, "dense", {"in_dim": self.channels, "out_dim": out_dim,
                                      "bias": True}, prunable=prunable)
        self.channels = out_dim
        return layer_id

    def document(self):
        return {"version": 1, "input_shape": self.input_shape, "layers": self.layers}


def vgg16():
    b = Builder(3, 224)
    stages = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)]
    for s, (width, repeats) in enumerate(stages, start=1):
        for r in range(1, repeats + 1):
            b.conv(f"conv{s}_{r}", width, 3, padding=1, prunable=True)
            b.relu(f"relu{s}_{r}")
        b.pool(f"pool{s}", "maxpool", 2, 2)
    b.flatten("flatten")
    b.dense("fc_1", 4096, prunable=True)
    b.relu("relu_fc1")
    b.dense("fc_2", 4096, prunable=True)
    b.relu("relu_fc2")
    b.dense("fc_3", 1000)
    return b.document()


def resnet50():
    b = Builder(3, 224)
    b.conv("conv1", 64, 7, stride=2, padding=3, bias=False)
    b.bn("bn1")
    b.relu("relu1")
    b.pool("pool1", "maxpool", 3, 2, padding=1)
    stages = [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]
    for s, (width, blocks, first_stride) in enumerate(stages, start=2):
        for k in range(blocks):
            name = f"res{s}{chr(ord('a') + k)}"
            entry = b.current
            entry_channels, entry_side = b.channels, b.side
            stride = first_stride if k == 0 else 1
            b._add(f"{name}_select", "channel_select",
                   {"kept": list(range(entry_channels))}, prunable=True)
            b.conv(f"{name}_branch2a", width, 1, bias=False, prunable=True)
            b.bn(f"{name}_bn2a")
            b.relu(f"{name}_relu2a")
            b.conv(f"{name}_branch2b", width, 3, stride=stride, padding=1, bias=False,
                   prunable=True)
            b.bn(f"{name}_bn2b")
            b.relu(f"{name}_relu2b")
            b.conv(f"{name}_branch2c", 4 * width, 1, bias=False)
            trunk = b.bn(f"{name}_bn2c")
            trunk_channels, trunk_side = b.channels, b.side
            skip = entry
            if k == 0:
                b.channels, b.side = entry_channels, entry_side
                b.conv(f"{name}_branch1", 4 * width, 1, stride=stride, bias=False,
                       source=entry)
                skip = b.bn(f"{name}_bn1")
            b.channels, b.side = trunk_channels, trunk_side
            b._add(f"{name}_add", "add", {}, [trunk, skip])
            b.relu(f"{name}_relu")
    b.pool("pool5", "avgpool", 7, 1)
    b.flatten("flatten")
    b.dense("fc", 1000)
    return b.document()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=pathlib.Path,
                        default=pathlib.Path(__file__).resolve().parents[2] / "models")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, doc in (("vgg16", vgg16()), ("resnet50", resnet50())):
        (args.out / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
