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

#include <cstdint>
#include <string>
#include <vector>

#include "common/tensor.hpp"

namespace pg {

// 8-bit interleaved RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

RgbImage read_png(const std::string& path);
void write_png(const std::string& path, const RgbImage& image);
// Binary PGM (P5) of a map scaled from [lo, hi] to [0, 255].
void write_pgm(const std::string& path, const GridMap& map, double lo, double hi);

// [0,255] <-> [-1,1] latent range; to_rgb rounds and clamps.
Tensor3 to_latent(const RgbImage& image);
RgbImage to_rgb(const Tensor3& latent);
// [C,H,W] with values in [0,255] for the metrics.
Tensor3 to_pixels(const RgbImage& image);

}  // namespace pg
