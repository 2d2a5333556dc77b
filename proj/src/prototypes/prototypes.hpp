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

#include <string>
#include <utility>
#include <vector>

#include "common/tensor.hpp"
#include "layout/kitti.hpp"
#include "pca/prototype_store.hpp"

namespace pg {

struct GridBox {
  std::string word;
  int left = 0, top = 0, right = 0, bottom = 0;  // half-open cell range
};

struct GridLayout {
  int height = 0;
  int width = 0;
  std::vector<GridBox> boxes;
  std::vector<std::pair<double, double>> centers;  // (x / W_f, y / H_f) of each box midpoint
  GridMask indicator;
};

// Grid cell (x, y) sits at normalized coordinates ((x + 0.5) / W_f, (y + 0.5) / H_f).
std::pair<double, double> cell_coordinates(int x, int y, int width, int height);

// floor/ceil transform of pixel boxes onto a grid of ceil(size / d) cells;
// boxes thinner than one cell are inflated to one cell.
GridLayout to_grid(const Layout& layout, int image_width, int image_height, int downsample);

struct ConceptMask {
  GridMap values;
  std::vector<std::pair<double, double>> ranges;  // per concept (min, max) before normalization
  std::vector<bool> constant;                     // per concept; constant maps normalize to zero
  bool any_constant() const;
};

ConceptMask concept_mask(const std::vector<GridMap>& cross_maps);

double peak_weight(double p, double q, double center_p, double center_q, double sigma);

// M + m * L, with m taken against the nearest center among the boxes that
// contain the cell.
GridMap update_mask(const GridMap& mask, const GridLayout& grid, double sigma);

// Strict threshold: cell selected iff value > tau.
GridMask binarize(const GridMap& mask, double tau);

// Components with every cell outside `mask` zeroed.
std::vector<double> restrict_to_mask(const PrincipalComponents& pcs, const GridMask& mask);

// Prototypes for steps 1..n_p; throws Store when a step has no components.
std::map<int, PrototypeEntry> extract_prototypes(const std::map<int, PrincipalComponents>& components,
                                                 const GridMap& updated_mask, double tau, int n_p);

// Dumps a map as an 8-bit PGM scaled from [lo, hi].
void write_mask_pgm(const std::string& path, const GridMap& map, double lo, double hi);
void write_mask_pgm(const std::string& path, const GridMask& mask);

}  // namespace pg
