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

#include <vector>

#include "common/tensor.hpp"

namespace pg {

struct BetaSpec {
  double beta_start = 1e-4;
  double beta_end = 2e-2;
};

enum class Direction { Forward, Reverse };

// Discrete training schedule plus the DDIM sub-step map. DDIM step k in
// [1, ddim_steps] maps to step_index[k-1]; latent index 0 is the clean image
// and carries alpha_bar = 1.
class NoiseSchedule {
 public:
  NoiseSchedule(int train_steps, int ddim_steps, BetaSpec beta = {});

  // Arbitrary non-increasing alpha_bar table in (0,1]; used for backends
  // with their own schedule and for degenerate-step tests.
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar, int ddim_steps);

  int train_steps() const { return static_cast<int>(alpha_bar_.size()); }
  int ddim_steps() const { return static_cast<int>(step_index_.size()); }
  const BetaSpec& beta_spec() const { return beta_; }
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }
  const std::vector<int>& step_index() const { return step_index_; }

  // Training timestep of DDIM latent k (k >= 1).
  int timestep(int k) const;
  // alpha_bar of DDIM latent k, with alpha_bar(0) == 1.
  double alpha(int k) const;

  // Relabels the DDIM sub-steps without touching the training schedule.
  NoiseSchedule with_ddim_steps(int ddim_steps) const;

 private:
  NoiseSchedule() = default;
  void build_step_index(int ddim_steps);

  BetaSpec beta_;
  std::vector<double> alpha_bar_;
  std::vector<int> step_index_;
};

NoiseSchedule build_schedule(int train_steps, int ddim_steps, BetaSpec beta = {});

// Deterministic DDIM update. Reverse maps latent k to latent k-1; forward maps
// latent k-1 to latent k (inversion). k is in [1, ddim_steps].
Tensor3 ddim_step(const Tensor3& z, const Tensor3& eps, int k, const NoiseSchedule& schedule,
                  Direction direction);

// Coefficients of the reverse update z_{k-1} = a * z_k + b * eps.
struct StepCoefficients {
  double a;
  double b;
};
StepCoefficients reverse_coefficients(int k, const NoiseSchedule& schedule);

}  // namespace pg
