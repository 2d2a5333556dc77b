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

#include "common/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace pg {

RgbImage read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(ErrorKind::Io, "cannot read PNG " + path + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorKind::Io, "cannot decode PNG " + path + ": " + img.message);
  }
  return out;
}

void write_png(const std::string& path, const RgbImage& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorKind::Io, "cannot write PNG " + path + ": " + img.message);
  }
}

void write_pgm(const std::string& path, const GridMap& map, double lo, double hi) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path);
  f << "P5\n" << map.width << " " << map.height << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : map.data) {
    const double s = std::clamp((v - lo) / span, 0.0, 1.0);
    f.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(s * 255.0))));
  }
}

Tensor3 to_latent(const RgbImage& image) {
  Tensor3 t(3, image.height, image.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) t.at(c, y, x) = image.at(y, x, c) / 127.5 - 1.0;
  return t;
}

RgbImage to_rgb(const Tensor3& latent) {
  require(latent.channels == 3, ErrorKind::Contract, "to_rgb expects 3 channels");
  RgbImage img(latent.width, latent.height);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < latent.height; ++y)
      for (int x = 0; x < latent.width; ++x) {
        const double v = std::clamp((latent.at(c, y, x) + 1.0) * 127.5, 0.0, 255.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v));
      }
  return img;
}

Tensor3 to_pixels(const RgbImage& image) {
  Tensor3 t(3, image.height, image.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) t.at(c, y, x) = image.at(y, x, c);
  return t;
}

}  // namespace pg
