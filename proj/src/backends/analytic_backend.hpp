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

#include "backends/backend.hpp"

namespace pg {

struct AnalyticConfig {
  int channels = 3;
  int height = 32;
  int width = 64;
  double data_mean = 0.0;
  double data_variance = 0.25;
  int downsample = 4;
  int feature_channels = 64;
  std::uint64_t feature_seed = 0x5eed;
};

// Closed-form denoiser for data distributed as N(mean, variance * I): the
// noised marginal is Gaussian, so its score and the optimal noise prediction
// are exact. Features are a stand-in: a fixed seeded 3x3 linear projection of
// the latent average-pooled by `downsample`, so every feature-consuming code
// path runs under exact math. Conditioning does not change the prediction.
class AnalyticBackend final : public DenoiserBackend {
 public:
  AnalyticBackend(AnalyticConfig config, NoiseSchedule schedule);

  std::string name() const override { return "analytic"; }
  const Capabilities& capabilities() const override { return caps_; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  const AnalyticConfig& config() const { return config_; }

  Tensor3 predict_noise(const Tensor3& z, int t, const Condition& cond) const override;
  FeatureRecord capture_features(const Tensor3& z, int t, const Condition& cond) const override;
  LossGradient loss_input_gradient(const Tensor3& z, int t, const Condition& cond,
                                   const LossSpec& loss) const override;

 private:
  struct Graph {
    ad::Var z;
    ad::Var keys;  // [1, L, N_c]
    std::vector<ad::Var> cross;  // [1, 1, H_f, W_f] each
  };
  Graph build(ad::Tape<double>& tape, const Tensor3& z, const Condition& cond, bool grad) const;
  std::vector<double> concept_weights(const std::string& word) const;

  AnalyticConfig config_;
  NoiseSchedule schedule_;
  Capabilities caps_;
  std::vector<double> key_weights_;  // [N_c, C, 3, 3]
};

}  // namespace pg
