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
"""Trains the 6-layer toy CNN fixture and writes it in the toolkit's formats.

Inputs are 3x12x12 images of four classes. Each class owns a blob template;
samples are a randomly scaled and shifted template plus Gaussian noise, so the
task is learnable but not trivial. The training set is never written out.

Output directory layout:
  arch.json                  architecture
  weights/weights.json       manifest plus one .ptsr file per tensor
  val_inputs.ptsr / .plbl    500 validation samples
  score_inputs.ptsr / .plbl  scoring samples
  reference.json             accuracy and logits computed by torch
"""

import argparse
import json
import pathlib
import struct

import numpy as np
import torch
from torch import nn

CLASSES = 4
SIDE = 12


def write_tensor(path, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"PTSR")
        f.write(struct.pack("<III", 1, 1, array.ndim))
        f.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        f.write(array.tobytes())


def write_labels(path, labels):
    labels = np.asarray(labels, dtype="<u4")
    with open(path, "wb") as f:
        f.write(b"PLBL")
        f.write(struct.pack("<IQ", 1, labels.size))
        f.write(labels.tobytes())


def templates(rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE]
    out = np.zeros((CLASSES, 3, SIDE, SIDE), dtype=np.float64)
    for c in range(CLASSES):
        for _ in range(3):
            ch = rng.integers(0, 3)
            cy, cx = rng.uniform(2, SIDE - 2, size=2)
            width = rng.uniform(1.2, 2.5)
            sign = rng.choice([-1.0, 1.0])
            out[c, ch] += sign * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
    return out


def make_set(rng, tmpl, n):
    labels = np.arange(n) % CLASSES
    rng.shuffle(labels)
    x = np.empty((n, 3, SIDE, SIDE), dtype=np.float64)
    for i, c in enumerate(labels):
        shifted = np.roll(tmpl[c], shift=tuple(rng.integers(-1, 2, size=2)), axis=(1, 2))
        x[i] = rng.uniform(0.5, 1.5) * shifted + rng.normal(0.0, 1.0, size=shifted.shape)
    return x.astype(np.float32), labels.astype(np.uint32)


class Toy(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, 3, padding=1)
        self.conv2 = nn.Conv2d(16, 16, 3, padding=1)
        self.conv3 = nn.Conv2d(16, 32, 3, padding=1)
        self.conv4 = nn.Conv2d(32, 32, 3, padding=1)
        self.fc1 = nn.Linear(32 * 3 * 3, 64)
        self.fc2 = nn.Linear(64, CLASSES)

    def forward(self, x):
        x = torch.relu(self.conv1(x))
        x = torch.max_pool2d(torch.relu(self.conv2(x)), 2)
        x = torch.relu(self.conv3(x))
        x = torch.max_pool2d(torch.relu(self.conv4(x)), 2)
        x = torch.relu(self.fc1(x.flatten(1)))
        return self.fc2(x)


def arch():
    def layer(id_, kind, inputs, params=None, prunable=False):
        out = {"id": id_, "kind": kind, "params": params or {}, "inputs": [inputs]}
        if prunable:
            out["prunable"] = True
        return out

    def conv(id_, src, cin, cout):
        return layer(id_, "conv2d", src,
                     {"in_ch": cin, "out_ch": cout, "kernel": 3, "stride": 1, "padding": 1},
                     prunable=True)

    return {"version": 1, "input_shape": [3, SIDE, SIDE], "layers": [
        conv("conv1", "input", 3, 16), layer("relu1", "relu", "conv1"),
        conv("conv2", "relu1", 16, 16), layer("relu2", "relu", "conv2"),
        layer("pool2", "maxpool", "relu2", {"window": 2, "stride": 2}),
        conv("conv3", "pool2", 16, 32), layer("relu3", "relu", "conv3"),
        conv("conv4", "relu3", 32, 32), layer("relu4", "relu", "conv4"),
        layer("pool4", "maxpool", "relu4", {"window": 2, "stride": 2}),
        layer("flatten", "flatten", "pool4"),
        layer("fc1", "dense", "flatten", {"in_dim": 288, "out_dim": 64}, prunable=True),
        layer("relu5", "relu", "fc1"),
        layer("fc2", "dense", "relu5", {"in_dim": 64, "out_dim": CLASSES}),
    ]}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=pathlib.Path,
                        default=pathlib.Path(__file__).resolve().parents[2] / "tests/fixtures/toy6")
    parser.add_argument("--seed", type=int, default=2026)
    parser.add_argument("--scoring", type=int, default=800)
    parser.add_argument("--epochs", type=int, default=25)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True)
    tmpl = templates(rng)
    train_x, train_y = make_set(rng, tmpl, 6000)
    val_x, val_y = make_set(rng, tmpl, 500)
    score_x, score_y = make_set(rng, tmpl, args.scoring)

    model = Toy()
    opt = torch.optim.SGD(model.parameters(), lr=0.05, momentum=0.9, weight_decay=5e-4)
    tx, ty = torch.from_numpy(train_x), torch.from_numpy(train_y.astype(np.int64))
    for epoch in range(args.epochs):
        order = torch.randperm(len(tx))
        for start in range(0, len(tx), 64):
            idx = order[start:start + 64]
            opt.zero_grad()
            nn.functional.cross_entropy(model(tx[idx]), ty[idx]).backward()
            opt.step()

    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(val_x))
        accuracy = float((logits.argmax(1).numpy() == val_y).mean())
        train_acc = float((model(tx).argmax(1) == ty).float().mean())

    out = args.out
    (out / "weights").mkdir(parents=True, exist_ok=True)
    (out / "arch.json").write_text(json.dumps(arch(), indent=1) + "\n")
    manifest = {"version": 1, "layers": {}}
    for name in ("conv1", "conv2", "conv3", "conv4", "fc1", "fc2"):
        module = getattr(model, name)
        entry = {}
        for tensor_name, value in (("weight", module.weight), ("bias", module.bias)):
            file = f"{name}.{tensor_name}.ptsr"
            write_tensor(out / "weights" / file, value.detach().numpy())
            entry[tensor_name] = file
        manifest["layers"][name] = entry
    (out / "weights" / "weights.json").write_text(json.dumps(manifest, indent=1) + "\n")
    write_tensor(out / "val_inputs.ptsr", val_x)
    write_labels(out / "val_labels.plbl", val_y)
    write_tensor(out / "score_inputs.ptsr", score_x)
    write_labels(out / "score_labels.plbl", score_y)
    reference = {
        "val_accuracy": accuracy,
        "train_accuracy": train_acc,
        "val_logits_first8": logits[:8].numpy().astype(float).tolist(),
        "seed": args.seed,
    }
    (out / "reference.json").write_text(json.dumps(reference, indent=1) + "\n")
    print(f"train accuracy {train_acc:.4f}, validation accuracy {accuracy:.4f}")


if __name__ == "__main__":
    main()
