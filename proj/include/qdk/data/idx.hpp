// Copyright 2026 The QDK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Loader for IDX image/label files (MNIST layout). Images are scaled to
// [0, 1] and centre-padded onto the 36x36 canvas.

#ifndef QDK_DATA_IDX_HPP_
#define QDK_DATA_IDX_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "qdk/data/dataset.hpp"
#include "qdk/error.hpp"

namespace qdk {

namespace detail {

inline std::vector<std::uint8_t> ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t BigEndian32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw ParseError(off, "truncated IDX header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline DatasetSplit load_idx(const std::string& images_path, const std::string& labels_path,
                             int num_classes = 0) {
  const auto img = detail::ReadAll(images_path);
  const auto lab = detail::ReadAll(labels_path);
  if (detail::BigEndian32(img, 0) != 0x00000803u) throw ParseError(0, "bad IDX image magic");
  if (detail::BigEndian32(lab, 0) != 0x00000801u) throw ParseError(0, "bad IDX label magic");
  const std::uint32_t n = detail::BigEndian32(img, 4);
  const std::uint32_t rows = detail::BigEndian32(img, 8);
  const std::uint32_t cols = detail::BigEndian32(img, 12);
  if (detail::BigEndian32(lab, 4) != n) throw ParseError(4, "label count differs from image count");
  if (n == 0) throw ParseError(4, "empty IDX file");
  if (rows > static_cast<std::uint32_t>(kCanvas) || cols > static_cast<std::uint32_t>(kCanvas) ||
      rows == 0 || cols == 0) {
    throw ParseError(8, "images must be at most 36x36");
  }
  const std::size_t plane = std::size_t{rows} * cols;
  if (img.size() < 16 + n * plane) throw ParseError(img.size(), "truncated IDX image data");
  if (lab.size() < 8 + std::size_t{n}) throw ParseError(lab.size(), "truncated IDX label data");

  int classes = num_classes;
  for (std::uint32_t i = 0; i < n; ++i) classes = std::max<int>(classes, lab[8 + i] + 1);
  if (num_classes > 0 && classes > num_classes) throw ConfigError("IDX label exceeds num_classes");

  DatasetSplit split;
  split.images = Tensor(Shape{static_cast<int>(n), 1, kCanvas, kCanvas});
  split.class_counts.assign(classes, 0);
  const int top = (kCanvas - static_cast<int>(rows)) / 2;
  const int left = (kCanvas - static_cast<int>(cols)) / 2;
  for (std::uint32_t i = 0; i < n; ++i) {
    float* dst = split.images.ptr() + std::size_t{i} * kCanvas * kCanvas;
    const std::uint8_t* src = img.data() + 16 + i * plane;
    for (std::uint32_t y = 0; y < rows; ++y)
      for (std::uint32_t x = 0; x < cols; ++x)
        dst[(top + y) * kCanvas + left + x] = src[y * cols + x] / 255.0f;
    const int label = lab[8 + i];
    split.labels.push_back(label);
    ++split.class_counts[label];
  }
  return split;
}

}  // namespace qdk

#endif  // QDK_DATA_IDX_HPP_
