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

#include "chanprune/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "chanprune/error.hpp"

namespace chanprune {
namespace {

constexpr std::array<char, 4> kTensorMagic = {'P', 'T', 'S', 'R'};
constexpr std::array<char, 4> kLabelMagic = {'P', 'L', 'B', 'L'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;

static_assert(std::numeric_limits<float>::is_iec559);

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

template <typename T>
void put(std::ostream& out, T value) {
  const T le = to_little_endian(value);
  out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("truncated payload: unexpected end of data "
                                  "while reading ") + what);
  }
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value;
  read_exact(in, reinterpret_cast<char*>(&value), sizeof(T), what);
  return to_little_endian(value);
}

void expect_magic(std::istream& in, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  read_exact(in, got.data(), got.size(), "magic");
  if (got != magic) {
    throw FormatError("bad magic: expected \"" +
                      std::string(magic.begin(), magic.end()) + "\"");
  }
}

void expect_version(std::istream& in) {
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw FormatError("version mismatch: file has version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kFormatVersion));
  }
}

void expect_eof(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after payload");
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open file for reading: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open file for writing: " + path.string());
  return out;
}

}  // namespace

std::size_t element_count(std::span<const std::size_t> dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw FormatError("tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw UsageError("tensor must have at least one dimension");
  for (std::size_t d : dims_) {
    if (d == 0) throw UsageError("tensor dimensions must be positive");
  }
  if (element_count(dims_) != data_.size()) {
    throw UsageError("tensor data length " + std::to_string(data_.size()) +
                     " does not match dims product " +
                     std::to_string(element_count(dims_)));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
  const std::size_t n = element_count(dims);
  return Tensor(std::move(dims), std::vector<float>(n, 0.0f));
}

ActivationSet::ActivationSet(Tensor maps, std::vector<std::uint32_t> labels,
                             std::uint32_t num_classes)
    : maps_(std::move(maps)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  if (maps_.rank() != 3) {
    throw UsageError("activation maps must be a rank-3 [N, W, H] tensor");
  }
  if (maps_.dim(0) != labels_.size()) {
    throw UsageError("activation set has " + std::to_string(maps_.dim(0)) +
                     " maps but " + std::to_string(labels_.size()) + " labels");
  }
  if (labels_.size() < 2) throw UsageError("activation set needs N >= 2");
  if (num_classes_ < 2) throw UsageError("activation set needs >= 2 classes");
  for (std::uint32_t label : labels_) {
    if (label >= num_classes_) {
      throw UsageError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(num_classes_) + " classes");
    }
  }
}

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kTensorMagic.data(), kTensorMagic.size());
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, kDtypeF32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.dims()) put<std::uint64_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(tensor.data().data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
  } else {
    for (float v : tensor.data()) put<float>(out, v);
  }
  if (!out) throw UsageError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in) {
  expect_magic(in, kTensorMagic);
  expect_version(in);
  const auto dtype = get<std::uint32_t>(in, "dtype");
  if (dtype != kDtypeF32) {
    throw FormatError("unsupported dtype code " + std::to_string(dtype));
  }
  const auto ndim = get<std::uint32_t>(in, "ndim");
  if (ndim == 0 || ndim > 16) {
    throw FormatError("unsupported tensor rank " + std::to_string(ndim));
  }
  std::vector<std::size_t> dims(ndim);
  for (auto& d : dims) {
    const auto v = get<std::uint64_t>(in, "dims");
    if (v == 0) throw FormatError("tensor dimension of size zero");
    d = static_cast<std::size_t>(v);
  }
  const std::size_t n = element_count(dims);
  if (n > (std::size_t{1} << 34)) throw FormatError("tensor too large");
  std::vector<float> data(n);
  read_exact(in, reinterpret_cast<char*>(data.data()), n * sizeof(float),
             "tensor data");
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = to_little_endian(data[i]);
    if (!std::isfinite(data[i])) {
      throw FormatError("non-finite value at element " + std::to_string(i));
    }
  }
  return Tensor(std::move(dims), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  auto out = open_out(path);
  write_tensor(out, tensor);
}

Tensor load_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  Tensor t = read_tensor(in);
  expect_eof(in);
  return t;
}

void write_labels(std::ostream& out, const LabelFile& labels) {
  out.write(kLabelMagic.data(), kLabelMagic.size());
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, labels.count());
  for (std::uint32_t v : labels.labels) put<std::uint32_t>(out, v);
  if (!out) throw UsageError("failed writing labels");
}

LabelFile read_labels(std::istream& in) {
  expect_magic(in, kLabelMagic);
  expect_version(in);
  const auto count = get<std::uint64_t>(in, "label count");
  if (count > (std::uint64_t{1} << 32)) throw FormatError("label count too large");
  LabelFile labels;
  labels.labels.resize(static_cast<std::size_t>(count));
  read_exact(in, reinterpret_cast<char*>(labels.labels.data()),
             labels.labels.size() * sizeof(std::uint32_t), "labels");
  for (auto& v : labels.labels) v = to_little_endian(v);
  return labels;
}

void save_labels(const std::filesystem::path& path, const LabelFile& labels) {
  auto out = open_out(path);
  write_labels(out, labels);
}

LabelFile load_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  LabelFile labels = read_labels(in);
  expect_eof(in);
  return labels;
}

ActivationSet slice_channel(const Tensor& activations, std::size_t channel,
                            const LabelFile& labels, std::uint32_t num_classes) {
  if (activations.rank() != 4) {
    throw UsageError("activations must be a rank-4 [N, C, W, H] tensor");
  }
  const std::size_t n = activations.dim(0);
  const std::size_t channels = activations.dim(1);
  const std::size_t plane = activations.dim(2) * activations.dim(3);
  if (channel >= channels) {
    throw UsageError("channel " + std::to_string(channel) +
                     " out of range for layer with " + std::to_string(channels) +
                     " channels");
  }
  if (labels.count() != n) {
    throw UsageError("label count " + std::to_string(labels.count()) +
                     " does not match activation count " + std::to_string(n));
  }
  std::vector<float> maps(n * plane);
  const auto src = activations.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t offset = (i * channels + channel) * plane;
    std::memcpy(maps.data() + i * plane, src.data() + offset,
                plane * sizeof(float));
  }
  return ActivationSet(
      Tensor({n, activations.dim(2), activations.dim(3)}, std::move(maps)),
      labels.labels, num_classes);
}

}  // namespace chanprune
