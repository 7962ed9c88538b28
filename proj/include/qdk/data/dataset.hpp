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

// Procedurally rendered grayscale shape classes on a 36x36 canvas.

#ifndef QDK_DATA_DATASET_HPP_
#define QDK_DATA_DATASET_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qdk/error.hpp"
#include "qdk/tensor.hpp"

namespace qdk {

inline constexpr int kCanvas = 36;
inline constexpr int kCrop = 32;
inline constexpr int kMinClasses = 4;
inline constexpr int kMaxClasses = 16;

struct DatasetSplit {
  Tensor images;  // [N, 1, 36, 36], values in [0, 1]
  std::vector<int> labels;
  std::vector<int> class_counts;

  int size() const { return static_cast<int>(labels.size()); }
  int num_classes() const { return static_cast<int>(class_counts.size()); }
  std::span<const float> image(int i) const {
    const std::size_t n = static_cast<std::size_t>(kCanvas) * kCanvas;
    return images.data().subspan(static_cast<std::size_t>(i) * n, n);
  }
};

struct Dataset {
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test;
};

struct DatasetOptions {
  int val_per_class = 30;
  int test_per_class = 50;
  // Background noise standard deviation range.
  float noise_min = 0.04f;
  float noise_max = 0.16f;
  int max_distractors = 3;
  // Shape rendered for each label; empty means label c draws shape c.
  std::vector<int> shape_ids;
};

inline const char* shape_class_name(int c) {
  static constexpr std::array<const char*, kMaxClasses> kNames = {
      "disk",        "ring",          "square",    "hollow_square",
      "triangle",    "hollow_triangle", "plus",    "cross",
      "bar",         "arc",           "diamond",   "hollow_diamond",
      "two_dots",    "ellipse",       "bullseye",  "chevron"};
  return (c >= 0 && c < kMaxClasses) ? kNames[c] : "?";
}

// Geometric decay (ratio 0.7) from `largest`, floored at 10 per class.
inline std::vector<int> default_class_counts(int num_classes, int largest = 160,
                                             double ratio = 0.7) {
  std::vector<int> counts(num_classes);
  double v = largest;
  for (int c = 0; c < num_classes; ++c, v *= ratio)
    counts[c] = std::max(10, static_cast<int>(std::lround(v)));
  return counts;
}

namespace detail {

struct Vec2 {
  double x, y;
};

inline double Length(double x, double y) { return std::sqrt(x * x + y * y); }

// Signed distance to an axis-aligned box of half-extents (hx, hy).
inline double SdBox(double px, double py, double hx, double hy) {
  const double qx = std::abs(px) - hx, qy = std::abs(py) - hy;
  return Length(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0);
}

// Signed distance to an equilateral triangle with circumradius-ish size r.
inline double SdTriangle(double px, double py, double r) {
  const double k = std::sqrt(3.0);
  px = std::abs(px) - r;
  py = py + r / k;
  if (px + k * py > 0.0) {
    const double nx = (px - k * py) / 2.0, ny = (-k * px - py) / 2.0;
    px = nx;
    py = ny;
  }
  px -= std::clamp(px, -2.0 * r, 0.0);
  return -Length(px, py) * (py < 0.0 ? -1.0 : 1.0);
}

inline double SdSegment(double px, double py, double ax, double ay, double bx, double by) {
  const double pax = px - ax, pay = py - ay, bax = bx - ax, bay = by - ay;
  const double h = std::clamp((pax * bax + pay * bay) / (bax * bax + bay * bay), 0.0, 1.0);
  return Length(pax - bax * h, pay - bay * h);
}

struct ShapeParams {
  double cx, cy, radius, angle, stroke, intensity, aspect;
};

// Signed distance (negative inside) of class `c` at local point (x, y),
// already translated to the shape centre.
inline double ShapeDistance(int c, double x, double y, const ShapeParams& p) {
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  const double rx = ca * x + sa * y, ry = -sa * x + ca * y;
  const double r = p.radius, half = p.stroke / 2.0;
  switch (c) {
    case 0: return Length(x, y) - r;
    case 1: return std::abs(Length(x, y) - r) - half;
    case 2: return SdBox(rx, ry, r * 0.8, r * 0.8);
    case 3: return std::abs(SdBox(rx, ry, r * 0.8, r * 0.8)) - half;
    case 4: return SdTriangle(rx, ry, r * 0.95);
    case 5: return std::abs(SdTriangle(rx, ry, r * 0.95)) - half;
    case 6:
    case 7: return std::min(SdBox(rx, ry, r, half), SdBox(rx, ry, half, r));
    case 8: return SdBox(rx, ry, r, half);
    case 9: {
      // Upper half of a ring in the rotated frame.
      if (ry <= 0.0) return std::abs(Length(rx, ry) - r) - half;
      return std::min(Length(rx - r, ry), Length(rx + r, ry)) - half;
    }
    case 10: return SdBox(rx, ry, r * 0.75, r * 0.75);
    case 11: return std::abs(SdBox(rx, ry, r * 0.75, r * 0.75)) - half;
    case 12: {
      const double d = r * 0.6, dot = r * 0.35;
      return std::min(Length(rx - d, ry), Length(rx + d, ry)) - dot;
    }
    case 13: return (Length(rx / 1.0, ry / p.aspect) - r) * std::min(1.0, p.aspect);
    case 14: return std::min(std::abs(Length(x, y) - r) - half, Length(x, y) - r * 0.3);
    case 15:
      return std::min(SdSegment(rx, ry, -r, -r * 0.6, 0.0, r * 0.5),
                      SdSegment(rx, ry, 0.0, r * 0.5, r, -r * 0.6)) - half;
    default: break;
  }
  return 1e9;
}

inline double ClassAngle(int c, std::mt19937_64& rng) {
  constexpr double pi = std::numbers::pi;
  std::uniform_real_distribution<double> full(0.0, 2.0 * pi), small(-pi / 12.0, pi / 12.0);
  switch (c) {
    case 2: case 3: case 6: return small(rng);
    case 7: case 10: case 11: return pi / 4.0 + small(rng);
    default: return full(rng);
  }
}

inline void RenderSample(int c, std::mt19937_64& rng, const DatasetOptions& opt, float* img) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  ShapeParams p;
  p.cx = kCanvas / 2.0 + uni(-4.0, 4.0);
  p.cy = kCanvas / 2.0 + uni(-4.0, 4.0);
  p.radius = uni(6.0, 11.0);
  p.angle = ClassAngle(c, rng);
  p.stroke = uni(1.5, 3.0);
  p.intensity = uni(0.55, 1.0);
  p.aspect = uni(0.45, 0.65);
  const double background = uni(0.0, 0.2);
  const double noise = uni(opt.noise_min, opt.noise_max);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct Distractor { double x, y, r, v; };
  std::vector<Distractor> clutter;
  const int nd = static_cast<int>(u01(rng) * (opt.max_distractors + 1));
  for (int i = 0; i < nd; ++i)
    clutter.push_back({uni(2.0, kCanvas - 2.0), uni(2.0, kCanvas - 2.0), uni(0.8, 1.8), uni(0.3, 0.7)});

  for (int y = 0; y < kCanvas; ++y) {
    for (int x = 0; x < kCanvas; ++x) {
      const double px = x + 0.5 - p.cx, py = y + 0.5 - p.cy;
      const double d = ShapeDistance(c, px, py, p);
      double v = background + p.intensity * std::clamp(0.5 - d, 0.0, 1.0);
      for (const auto& k : clutter) {
        const double dd = Length(x + 0.5 - k.x, y + 0.5 - k.y) - k.r;
        v = std::max(v, background + k.v * std::clamp(0.5 - dd, 0.0, 1.0));
      }
      v += noise * gauss(rng);
      img[y * kCanvas + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

inline DatasetSplit RenderSplit(int num_classes, std::span<const int> counts, std::uint64_t seed,
                                std::uint64_t stream, const DatasetOptions& opt) {
  auto shape_of = [&](int label) { return opt.shape_ids.empty() ? label : opt.shape_ids[label]; };
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  int total = 0;
  for (int c : counts) total += c;
  DatasetSplit split;
  split.images = Tensor(Shape{total, 1, kCanvas, kCanvas});
  split.class_counts.assign(counts.begin(), counts.end());
  // Interleave classes so that a prefix of the split stays class-mixed.
  std::vector<int> order;
  order.reserve(total);
  for (int c = 0; c < num_classes; ++c) order.insert(order.end(), counts[c], c);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t plane = static_cast<std::size_t>(kCanvas) * kCanvas;
  for (int i = 0; i < total; ++i) {
    RenderSample(shape_of(order[i]), rng, opt, split.images.ptr() + i * plane);
    split.labels.push_back(order[i]);
  }
  return split;
}

}  // namespace detail

inline Dataset generate_shapes_dataset(int num_classes, std::span<const int> samples_per_class,
                                       std::uint64_t seed, const DatasetOptions& opt = {}) {
  if (num_classes < kMinClasses || num_classes > kMaxClasses) {
    throw ConfigError("num_classes must be in [4, 16], got " + std::to_string(num_classes));
  }
  if (samples_per_class.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("samples_per_class needs one count per class");
  }
  for (int c : samples_per_class) {
    if (c < 10) throw ConfigError("every class needs at least 10 training samples");
  }
  if (!opt.shape_ids.empty()) {
    if (opt.shape_ids.size() != static_cast<std::size_t>(num_classes)) {
      throw ConfigError("shape_ids needs one entry per class");
    }
    for (int id : opt.shape_ids)
      if (id < 0 || id >= kMaxClasses) throw ConfigError("shape id out of range");
  }
  if (opt.val_per_class < 1 || opt.test_per_class < 1) {
    throw ConfigError("validation and test splits need at least one sample per class");
  }
  Dataset d;
  d.train = detail::RenderSplit(num_classes, samples_per_class, seed, 1, opt);
  const std::vector<int> val(num_classes, opt.val_per_class);
  const std::vector<int> test(num_classes, opt.test_per_class);
  d.val = detail::RenderSplit(num_classes, val, seed, 2, opt);
  d.test = detail::RenderSplit(num_classes, test, seed, 3, opt);
  return d;
}

}  // namespace qdk

#endif  // QDK_DATA_DATASET_HPP_
