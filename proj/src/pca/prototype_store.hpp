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

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "common/tensor.hpp"
#include "pca/pca.hpp"

namespace pg {

struct PrototypeEntry {
  PrincipalComponents pcs;
  std::vector<double> prototype;  // components restricted to `mask`, [N_b, H_f, W_f]
  GridMask mask;                  // binarized updated mask at the stage-1 tau
};

// Stage-1 output for one image. Holds everything stage 2 needs besides the
// original image: per-step bases and prototypes, the raw and updated
// concept masks (so stage 2 can re-threshold), and the inversion latents
// for the guided steps.
struct PrototypeStore {
  static constexpr std::uint32_t kVersion = 1;

  std::string stem;
  std::string prompt;
  std::vector<std::string> concepts;
  std::string labels;  // KITTI text of the source layout
  int image_width = 0;
  int image_height = 0;
  int downsample = 1;
  int n_t = 0;
  int n_p = 0;
  int n_b = 0;
  int grid_height = 0;
  int grid_width = 0;
  double tau = 0.0;
  double sigma = 0.0;
  bool mask_constant = false;  // some concept map carried no signal
  GridMap raw_mask;
  GridMap updated_mask;
  std::map<int, PrototypeEntry> entries;  // sampling step k = 1..N_p
  std::map<int, Tensor3> latents;          // latent index -> z^I
  nlohmann::json config;
  std::string config_hash;

  // Throws Store unless steps 1..N_p are present with grid-shaped masks.
  void validate() const;
};

void save_prototype_store(const std::string& path, const PrototypeStore& store);
PrototypeStore load_prototype_store(const std::string& path);

}  // namespace pg
