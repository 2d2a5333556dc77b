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
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "backends/backend.hpp"
#include "schedule/schedule.hpp"

namespace pg {

struct GuidanceConfig {
  double s = 7.5;
  double sigma = 0.1;
  double tau = 0.3;
  int n_t = 200;
  std::optional<int> n_p;  // unset: ceil(0.6 * n_t)
  double w_sa = 1.0;
  double w_sl = 1.0;
  std::uint64_t seed = 0;
  bool guidance = true;  // false: plain CFG sampling, no hook needed

  int guided_steps() const;
  // Throws Parameter on out-of-domain values.
  void validate() const;
};

// latents[j] for DDIM latent index j = 0..N_t; latents[0] is the clean input.
// features[k] holds the record captured for sampling step k (1..N_p), i.e.
// at latent index N_t - k + 1.
struct LatentTrajectory {
  std::vector<Tensor3> latents;
  std::map<int, FeatureRecord> features;
  int steps() const { return static_cast<int>(latents.size()) - 1; }
};

// Sampling step k (1 = noisiest) reads latent N_t - k + 1.
inline int latent_index_for_step(int k, int n_t) { return n_t - k + 1; }

struct InversionOptions {
  // Each forward step starts from the explicit DDIM guess and then solves
  // the implicit relation z_k = (z_{k-1} - b * eps(z_k)) / a by fixed-point
  // iteration, so that sampling retraces the inversion exactly.
  int refine_iterations = 100;
  double refine_tolerance = 1e-12;  // relative L2 change that stops refinement
  int capture_steps = 0;            // N_p
};

LatentTrajectory invert(const Tensor3& image, const Condition& cond, const NoiseSchedule& schedule,
                        const DenoiserBackend& backend, const InversionOptions& options = {});

// (1+s) * eps_cond - s * eps_null + w_sa * grad_sa + w_sl * grad_sl.
// Empty gradient tensors count as zero.
Tensor3 combine_guidance(const Tensor3& eps_cond, const Tensor3& eps_null, const Tensor3& grad_sa,
                         const Tensor3& grad_sl, double s, double w_sa, double w_sl);

Tensor3 guided_epsilon(const DenoiserBackend& backend, const Tensor3& z, int t, const Condition& cond,
                       const Tensor3& grad_sa, const Tensor3& grad_sl, const GuidanceConfig& config);

struct StepGuidance {
  Tensor3 grad_sa;
  Tensor3 grad_sl;
};

// Called for sampling steps k <= N_p with the current latent.
using GuidanceHook = std::function<StepGuidance(const Tensor3& z, int k, int t)>;

struct SampleResult {
  Tensor3 final_latent;
  std::vector<Tensor3> trajectory;  // trajectory[j] is latent index j, like LatentTrajectory
};

// Draws N(0, I) of the given shape from `seed`.
Tensor3 gaussian_latent(int channels, int height, int width, std::uint64_t seed);

// Deterministic DDIM sampling from `initial` (latent index N_t) down to 0.
// An empty `initial` starts from gaussian_latent(config.seed).
SampleResult sample(const Tensor3& initial, const Condition& cond, const NoiseSchedule& schedule,
                    const DenoiserBackend& backend, const GuidanceHook& hook, const GuidanceConfig& config);

}  // namespace pg
