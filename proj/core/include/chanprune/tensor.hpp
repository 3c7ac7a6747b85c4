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
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace chanprune {

/// Dense row-major float32 tensor. Every dimension is positive and the
/// payload length always equals the product of the dimensions.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  static Tensor zeros(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

std::size_t element_count(std::span<const std::size_t> dims);

/// Class labels stored alongside a tensor whose leading dimension is count().
struct LabelFile {
  std::vector<std::uint32_t> labels;

  std::size_t count() const noexcept { return labels.size(); }
  bool operator==(const LabelFile&) const = default;
};

/// Feature maps of a single channel over N samples, with their class labels.
/// Maps are stored as one [N, W, H] tensor; dense-layer channels use W = H = 1.
class ActivationSet {
 public:
  ActivationSet(Tensor maps, std::vector<std::uint32_t> labels,
                std::uint32_t num_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t width() const noexcept { return maps_.dim(1); }
  std::size_t height() const noexcept { return maps_.dim(2); }
  std::size_t map_size() const noexcept { return width() * height(); }
  std::uint32_t num_classes() const noexcept { return num_classes_; }

  std::span<const float> map(std::size_t i) const {
    return maps_.data().subspan(i * map_size(), map_size());
  }
  std::uint32_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
  const Tensor& maps() const noexcept { return maps_; }

 private:
  Tensor maps_;
  std::vector<std::uint32_t> labels_;
  std::uint32_t num_classes_ = 0;
};

// Binary I/O. Format (little-endian): "PTSR", u32 version=1, u32 dtype=1 (f32),
// u32 ndim, ndim x u64 dims, row-major f32 payload. Labels: "PLBL",
// u32 version=1, u64 count, count x u32.
void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

void write_labels(std::ostream& out, const LabelFile& labels);
LabelFile read_labels(std::istream& in);
void save_labels(const std::filesystem::path& path, const LabelFile& labels);
LabelFile load_labels(const std::filesystem::path& path);

/// Extracts channel `channel` of an [N, C, W, H] activation dump.
ActivationSet slice_channel(const Tensor& activations, std::size_t channel,
                            const LabelFile& labels, std::uint32_t num_classes);

}  // namespace chanprune
