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

#include "prototypes/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/image_io.hpp"

namespace pg {

std::pair<double, double> cell_coordinates(int x, int y, int width, int height) {
  return {(x + 0.5) / width, (y + 0.5) / height};
}

GridLayout to_grid(const Layout& layout, int image_width, int image_height, int downsample) {
  require(downsample >= 1, ErrorKind::Parameter, "grid transform: downsample must be positive");
  require(image_width > 0 && image_height > 0, ErrorKind::Parameter, "grid transform: empty image");
  GridLayout g;
  g.width = (image_width + downsample - 1) / downsample;
  g.height = (image_height + downsample - 1) / downsample;
  g.indicator = GridMask(g.height, g.width, 0);
  const double d = downsample;
  for (const auto& b : layout.boxes) {
    require(b.left >= 0 && b.top >= 0 && b.right <= image_width && b.bottom <= image_height,
            ErrorKind::Contract, "grid transform: box outside the image");
    GridBox gb{b.word, static_cast<int>(std::floor(b.left / d)), static_cast<int>(std::floor(b.top / d)),
               static_cast<int>(std::ceil(b.right / d)), static_cast<int>(std::ceil(b.bottom / d))};
    if (gb.right <= gb.left) {
      gb.left = std::min(gb.left, g.width - 1);
      gb.right = gb.left + 1;
    }
    if (gb.bottom <= gb.top) {
      gb.top = std::min(gb.top, g.height - 1);
      gb.bottom = gb.top + 1;
    }
    for (int y = gb.top; y < gb.bottom; ++y)
      for (int x = gb.left; x < gb.right; ++x) g.indicator.at(y, x) = 1;
    g.centers.emplace_back(0.5 * (gb.left + gb.right) / g.width, 0.5 * (gb.top + gb.bottom) / g.height);
    g.boxes.push_back(std::move(gb));
  }
  return g;
}

bool ConceptMask::any_constant() const {
  return std::find(constant.begin(), constant.end(), true) != constant.end();
}

ConceptMask concept_mask(const std::vector<GridMap>& cross_maps) {
  require(!cross_maps.empty(), ErrorKind::Parameter, "concept mask: no concept maps");
  const int h = cross_maps[0].height, w = cross_maps[0].width;
  ConceptMask m;
  m.values = GridMap(h, w, 0.0);
  for (const auto& c : cross_maps) {
    require(c.same_shape(h, w), ErrorKind::Contract, "concept mask: map shapes differ");
    const auto [lo_it, hi_it] = std::minmax_element(c.data.begin(), c.data.end());
    const double lo = *lo_it, hi = *hi_it;
    require(std::isfinite(lo) && std::isfinite(hi), ErrorKind::Contract, "concept mask: non-finite map");
    m.ranges.emplace_back(lo, hi);
    const bool flat = !(hi > lo);
    m.constant.push_back(flat);
    if (flat) continue;
    for (std::size_t i = 0; i < c.size(); ++i) m.values.data[i] = std::max(m.values.data[i], (c.data[i] - lo) / (hi - lo));
  }
  return m;
}

double peak_weight(double p, double q, double center_p, double center_q, double sigma) {
  const double d2 = (p - center_p) * (p - center_p) + (q - center_q) * (q - center_q);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

GridMap update_mask(const GridMap& mask, const GridLayout& grid, double sigma) {
  require(mask.same_shape(grid.height, grid.width), ErrorKind::Contract, "mask update: grid shape mismatch");
  GridMap out = mask;
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      if (!grid.indicator.at(y, x)) continue;
      const auto [p, q] = cell_coordinates(x, y, grid.width, grid.height);
      double best = std::numeric_limits<double>::infinity();
      double weight = 0.0;
      for (std::size_t i = 0; i < grid.boxes.size(); ++i) {
        const auto& b = grid.boxes[i];
        if (x < b.left || x >= b.right || y < b.top || y >= b.bottom) continue;
        const auto [cp, cq] = grid.centers[i];
        const double d2 = (p - cp) * (p - cp) + (q - cq) * (q - cq);
        if (d2 < best) {
          best = d2;
          weight = peak_weight(p, q, cp, cq, sigma);
        }
      }
      out.at(y, x) += weight;
    }
  }
  return out;
}

GridMask binarize(const GridMap& mask, double tau) {
  GridMask out(mask.height, mask.width, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] = mask.data[i] > tau ? 1 : 0;
  return out;
}

std::vector<double> restrict_to_mask(const PrincipalComponents& pcs, const GridMask& mask) {
  require(mask.same_shape(pcs.height, pcs.width), ErrorKind::Contract, "prototype: mask shape differs from components");
  std::vector<double> out = pcs.components;
  const std::size_t L = pcs.plane();
  for (int i = 0; i < pcs.n_components; ++i)
    for (std::size_t p = 0; p < L; ++p)
      if (!mask.data[p]) out[i * L + p] = 0.0;
  return out;
}

std::map<int, PrototypeEntry> extract_prototypes(const std::map<int, PrincipalComponents>& components,
                                                 const GridMap& updated_mask, double tau, int n_p) {
  const GridMask mask = binarize(updated_mask, tau);
  std::map<int, PrototypeEntry> out;
  for (int k = 1; k <= n_p; ++k) {
    auto it = components.find(k);
    require(it != components.end(), ErrorKind::Store, "prototype extraction: no components for step " + std::to_string(k));
    out[k] = PrototypeEntry{it->second, restrict_to_mask(it->second, mask), mask};
  }
  return out;
}

void write_mask_pgm(const std::string& path, const GridMap& map, double lo, double hi) {
  write_pgm(path, map, lo, hi);
}

void write_mask_pgm(const std::string& path, const GridMask& mask) {
  GridMap m(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.size(); ++i) m.data[i] = mask.data[i];
  write_pgm(path, m, 0.0, 1.0);
}

}  // namespace pg
