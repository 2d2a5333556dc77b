/*
  Copyright 2026 The protoguide Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

  http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace pg {

// Channel-major [C,H,W] array of doubles. Latents, images in [-1,1] and
// attention keys all use this layout.
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[(c * plane()) + y * width + x]; }
  double at(int c, int y, int x) const { return data[(c * plane()) + y * width + x]; }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  std::string shape_string() const {
    return "[" + std::to_string(channels) + "," + std::to_string(height) + "," +
           std::to_string(width) + "]";
  }
};

// Row-major H x W map.
template <typename V>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<V> data;

  Grid() = default;
  Grid(int h, int w, V fill = V{})
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return data.size(); }
  V& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  const V& at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(int h, int w) const { return height == h && width == w; }
};

using GridMap = Grid<double>;
using GridMask = Grid<std::uint8_t>;

inline void require_same_shape(const Tensor3& a, const Tensor3& b, const char* what) {
  require(a.same_shape(b), ErrorKind::Contract,
          std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
              b.shape_string());
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double relative_l2(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace pg
