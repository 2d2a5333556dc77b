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
#include <vector>

#include "backends/backend.hpp"
#include "layout/kitti.hpp"
#include "pca/prototype_store.hpp"
#include "schedule/sampler.hpp"

namespace pg {

// sum over components and cells of mask * (now - prototype)^2; the mask is
// per cell and shared by all components.
double g_sa(const std::vector<double>& components_now, const std::vector<double>& prototype, const GridMask& mask);

// (1/N_i) * sum over cells of L * |z_inv - z|^2 across channels. An empty
// indicator returns 0; a nonempty one with n_objects < 1 is a contract error.
double g_sl(const Tensor3& z, const Tensor3& z_inv, const GridMask& indicator, int n_objects);
Tensor3 g_sl_gradient(const Tensor3& z, const Tensor3& z_inv, const GridMask& indicator, int n_objects);

// Layout rasterized at latent resolution with the grid-transform rule.
GridMask latent_indicator(const Layout& layout, int image_width, int image_height, int latent_height,
                          int latent_width);

// Which mask feeds g_sa: the layout-updated one (prototypes) or the raw
// cross-attention mask.
enum class MaskSource { Updated, Raw };

struct GuidanceState {
  const PrototypeStore* store = nullptr;
  GridMask mask;        // binarized at the stage-2 tau
  GridMask indicator;   // latent resolution
  int n_objects = 0;
  bool use_sa = true;
  bool use_sl = true;
  bool refit_pca = false;  // ablation: fit a fresh basis on live keys every step
};

GuidanceState make_guidance_state(const PrototypeStore& store, const Layout& layout, const Capabilities& caps,
                                  double tau, MaskSource source, bool use_sa, bool use_sl, bool refit_pca);

struct StepLog {
  int k = 0;
  int t = 0;
  double g_sa = 0.0;
  double g_sl = 0.0;
  double grad_sa_norm = 0.0;
  double grad_sl_norm = 0.0;
  bool sa_gradient = true;  // false when the backend cannot differentiate features
};

struct StepGuidanceResult {
  StepGuidance grads;
  StepLog log;
};

StepGuidanceResult assemble_step_guidance(const Tensor3& z, int k, int t, const GuidanceState& state,
                                          const DenoiserBackend& backend, const Condition& cond,
                                          const GuidanceConfig& config);

// One JSON object per line.
std::string format_step_log(const StepLog& log);

}  // namespace pg
