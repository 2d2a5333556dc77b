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
#include <vector>

#include "common/tensor.hpp"

namespace pg {

// PCA of one step's self-attention keys. Spatial positions are samples and
// key channels are dimensions.
struct PrincipalComponents {
  int step = 0;
  int n_components = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> components;   // [N_b, H, W]
  std::vector<double> basis;        // [N_b, N_c], orthonormal rows
  std::vector<double> mean;         // [N_c]
  std::vector<double> eigenvalues;  // [N_b], descending
  std::vector<std::uint8_t> active; // per component; inactive ones project to zero
  bool degenerate = false;          // zero total variance

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

// Eigenvalues below kRankTolerance * trace are treated as zero.
inline constexpr double kRankTolerance = 1e-10;

PrincipalComponents fit_pca(const Tensor3& keys, int n_components);

// Coordinates of (keys - mean) in the stored basis, [N_b, H, W].
std::vector<double> project_onto(const PrincipalComponents& pc, const Tensor3& keys);

}  // namespace pg
