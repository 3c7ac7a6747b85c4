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

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "chanprune/error.hpp"
#include "chanprune/random.hpp"
#include "chanprune/tensor.hpp"

namespace chanprune {
namespace {

std::string bytes_of(const Tensor& t) {
  std::ostringstream out;
  write_tensor(out, t);
  return out.str();
}

Tensor from_bytes(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_tensor(in);
}

ErrorKind kind_of_read(const std::string& bytes) {
  try {
    from_bytes(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "read succeeded";
  return ErrorKind::kUsage;
}

std::string message_of_read(const std::string& bytes) {
  try {
    from_bytes(bytes);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

TEST(Tensor, RejectsBadDims) {
  EXPECT_THROW(Tensor({2, 0}, {}), UsageError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), UsageError);
  EXPECT_THROW(Tensor({}, {}), UsageError);
}

TEST(Tensor, SmallRoundTrip) {
  const Tensor t({2, 2}, {0, 1, 2, 3});
  const Tensor back = from_bytes(bytes_of(t));
  EXPECT_EQ(back.dims(), (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(back, t);
}

TEST(Tensor, HeaderLayout) {
  const std::string b = bytes_of(Tensor({1}, {1.0f}));
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 8 + 4);
  EXPECT_EQ(b.substr(0, 4), "PTSR");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 1);   // dtype
  EXPECT_EQ(b[12], 1);  // ndim
  EXPECT_EQ(b[16], 1);  // dims[0]
  float v;
  std::memcpy(&v, b.data() + 24, 4);
  EXPECT_EQ(v, 1.0f);
}

TEST(Tensor, RejectsNonFinite) {
  const std::string b = bytes_of(Tensor({1}, {0.0f}));
  std::string nan = b;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 24, &q, 4);
  EXPECT_EQ(kind_of_read(nan), ErrorKind::kFormat);
  EXPECT_NE(message_of_read(nan).find("non-finite value"), std::string::npos);
  std::string inf = b;
  const float i = std::numeric_limits<float>::infinity();
  std::memcpy(inf.data() + 24, &i, 4);
  EXPECT_NE(message_of_read(inf).find("non-finite value"), std::string::npos);
}

TEST(Tensor, DistinctFormatErrors) {
  const std::string good = bytes_of(Tensor({2, 2}, {0, 1, 2, 3}));
  std::string magic = good;
  magic[0] = 'X';
  std::string version = good;
  version[4] = 2;
  std::string dtype = good;
  dtype[8] = 2;
  std::string truncated = good.substr(0, good.size() - 3);

  std::set<std::string> messages;
  for (const std::string* bytes : {&magic, &version, &dtype, &truncated}) {
    EXPECT_EQ(kind_of_read(*bytes), ErrorKind::kFormat);
    messages.insert(message_of_read(*bytes));
  }
  EXPECT_EQ(messages.size(), 4u);
  EXPECT_NE(message_of_read(magic).find("magic"), std::string::npos);
  EXPECT_NE(message_of_read(version).find("version"), std::string::npos);
  EXPECT_NE(message_of_read(truncated).find("truncated"), std::string::npos);

  // A file must hold exactly one tensor.
  const auto path = std::filesystem::temp_directory_path() / "chanprune_trailing.ptsr";
  {
    std::ofstream out(path, std::ios::binary);
    out << good << 'x';
  }
  try {
    load_tensor(path);
    ADD_FAILURE() << "load succeeded";
  } catch (const FormatError& e) {
    EXPECT_EQ(messages.count(e.what()), 0u);
    EXPECT_NE(std::string(e.what()).find("trailing"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Tensor, RandomFloatsRoundTripBytes) {
  Rng rng(7);
  std::vector<float> data(10000);
  for (auto& v : data) {
    // Any finite bit pattern.
    std::uint32_t bits;
    do {
      bits = static_cast<std::uint32_t>(rng());
      std::memcpy(&v, &bits, 4);
    } while (!std::isfinite(v));
  }
  const Tensor t({10000}, data);
  const std::string first = bytes_of(t);
  const Tensor back = from_bytes(first);
  EXPECT_EQ(std::memcmp(back.data().data(), data.data(), data.size() * 4), 0);
  EXPECT_EQ(bytes_of(back), first);
}

TEST(Tensor, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "chanprune_tensor_test.ptsr";
  const Tensor t({3, 1, 2}, {1, -2, 3.5f, 4, 5, 6});
  save_tensor(path, t);
  EXPECT_EQ(load_tensor(path), t);
  std::filesystem::remove(path);
  EXPECT_THROW(load_tensor(path), UsageError);
}

TEST(Labels, RoundTripAndErrors) {
  const LabelFile labels{{0, 3, 1, 2}};
  std::ostringstream out;
  write_labels(out, labels);
  const std::string b = out.str();
  EXPECT_EQ(b.substr(0, 4), "PLBL");
  std::istringstream in(b);
  EXPECT_EQ(read_labels(in), labels);

  std::string bad = b;
  bad[1] = 'X';
  std::istringstream bad_in(bad);
  EXPECT_THROW(read_labels(bad_in), FormatError);
  std::istringstream short_in(b.substr(0, b.size() - 1));
  EXPECT_THROW(read_labels(short_in), FormatError);
}

TEST(ActivationSet, Validates) {
  EXPECT_THROW(ActivationSet(Tensor({1, 1, 1}, {0}), {0}, 2), UsageError);
  EXPECT_THROW(ActivationSet(Tensor({2, 1, 1}, {0, 1}), {0, 2}, 2), UsageError);
  EXPECT_THROW(ActivationSet(Tensor({2, 1, 1}, {0, 1}), {0, 1}, 1), UsageError);
  EXPECT_THROW(ActivationSet(Tensor({2, 1, 1}, {0, 1}), {0}, 2), UsageError);
  const ActivationSet ok(Tensor({2, 1, 1}, {0, 1}), {0, 1}, 2);
  EXPECT_EQ(ok.size(), 2u);
}

TEST(SliceChannel, PicksChannel) {
  const Tensor acts({2, 3, 1, 1}, {0, 1, 2, 3, 4, 5});
  const LabelFile labels{{0, 1}};
  const ActivationSet set = slice_channel(acts, 1, labels, 2);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.map(0)[0], 1.0f);
  EXPECT_EQ(set.map(1)[0], 4.0f);
  EXPECT_THROW(slice_channel(acts, 5, labels, 2), UsageError);
  EXPECT_THROW(slice_channel(acts, 0, LabelFile{{0, 1, 1}}, 2), UsageError);
}

TEST(SliceChannel, RestackReproducesInput) {
  Rng rng(11);
  const std::size_t n = 6, c = 5, w = 3, h = 4;
  std::vector<float> data(n * c * w * h);
  for (auto& v : data) v = static_cast<float>(standard_normal(rng));
  const Tensor acts({n, c, w, h}, data);
  LabelFile labels;
  for (std::size_t i = 0; i < n; ++i) labels.labels.push_back(i % 3);

  std::vector<float> rebuilt(data.size(), 0.0f);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const ActivationSet set = slice_channel(acts, ch, labels, 3);
    EXPECT_EQ(set.labels(), labels.labels);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < w * h; ++k) {
        rebuilt[(i * c + ch) * w * h + k] = set.map(i)[k];
      }
    }
  }
  EXPECT_EQ(rebuilt, data);
}

}  // namespace
}  // namespace chanprune
