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

// Random-crop / flip augmentation and batch assembly.

#ifndef QDK_DATA_AUGMENT_HPP_
#define QDK_DATA_AUGMENT_HPP_

#include <random>
#include <span>
#include <vector>

#include "qdk/data/dataset.hpp"
#include "qdk/error.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

struct CropParams {
  int top = (kCanvas - kCrop) / 2;
  int left = (kCanvas - kCrop) / 2;
  bool flip = false;
};

inline CropParams center_crop_params() { return {}; }

inline CropParams random_crop_params(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> off(0, kCanvas - kCrop);
  std::bernoulli_distribution coin(0.5);
  CropParams p;
  p.top = off(rng);
  p.left = off(rng);
  p.flip = coin(rng);
  return p;
}

// Writes the 32x32 crop of a 36x36 plane into `out`.
inline void crop_into(std::span<const float> image, const CropParams& p, float* out) {
  if (image.size() != static_cast<std::size_t>(kCanvas) * kCanvas) {
    throw DimensionError("expected a 36x36 image, got " + std::to_string(image.size()) + " values");
  }
  for (int y = 0; y < kCrop; ++y) {
    const float* row = image.data() + (p.top + y) * kCanvas + p.left;
    float* dst = out + y * kCrop;
    if (p.flip) {
      for (int x = 0; x < kCrop; ++x) dst[x] = row[kCrop - 1 - x];
    } else {
      for (int x = 0; x < kCrop; ++x) dst[x] = row[x];
    }
  }
}

namespace detail {

inline std::span<const float> CanvasOf(const Tensor& image) {
  if (image.size() != static_cast<std::size_t>(kCanvas) * kCanvas) {
    throw DimensionError("expected a [1, 36, 36] image, got " + image.shape().ToString());
  }
  return image.data();
}

}  // namespace detail

inline Tensor augment(const Tensor& image, std::mt19937_64& rng) {
  Tensor out(Shape{1, kCrop, kCrop});
  crop_into(detail::CanvasOf(image), random_crop_params(rng), out.ptr());
  return out;
}

inline Tensor center_crop(const Tensor& image) {
  Tensor out(Shape{1, kCrop, kCrop});
  crop_into(detail::CanvasOf(image), center_crop_params(), out.ptr());
  return out;
}

inline Tensor hflip(const Tensor& image) {
  const int h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  Tensor out(image.shape());
  const std::size_t planes = image.size() / (static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(p * h + y) * w + x] = image[(p * h + y) * w + (w - 1 - x)];
  return out;
}

// Stacks the given samples into [B, 1, 32, 32]. With rng == nullptr every
// sample gets the eval transform (centre crop, no flip).
inline Tensor make_batch(const DatasetSplit& split, std::span<const int> indices,
                         std::mt19937_64* rng) {
  const int b = static_cast<int>(indices.size());
  if (b == 0) throw ShapeError("empty batch");
  Tensor out(Shape{b, 1, kCrop, kCrop});
  const std::size_t plane = static_cast<std::size_t>(kCrop) * kCrop;
  for (int i = 0; i < b; ++i) {
    if (indices[i] < 0 || indices[i] >= split.size()) {
      throw ContractError("sample index out of range: " + std::to_string(indices[i]));
    }
    const CropParams p = rng ? random_crop_params(*rng) : center_crop_params();
    crop_into(split.image(indices[i]), p, out.ptr() + i * plane);
  }
  return out;
}

inline std::vector<int> gather_labels(const DatasetSplit& split, std::span<const int> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(split.labels[i]);
  return out;
}

}  // namespace qdk

#endif  // QDK_DATA_AUGMENT_HPP_
