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
#include <string>
#include <vector>

#include "backends/corpus.hpp"
#include "backends/toy_backend.hpp"

namespace pg {

struct TrainSpec {
  int iterations = 3000;
  int batch = 16;
  double learning_rate = 2e-3;
  double final_lr_fraction = 0.05;  // cosine decay floor
  int warmup = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 1.0;
  double cond_dropout = 0.1;
  double ema_decay = 0.999;  // 0 disables EMA
  // Training fails when the smoothed loss at this fraction of the budget is
  // still above the first logged loss.
  double divergence_check = 0.2;
  int log_every = 25;
  std::uint64_t seed = 1;
};

struct TrainingLog {
  std::vector<int> iteration;
  std::vector<double> loss;      // raw batch loss
  std::vector<double> smoothed;  // EMA of the batch loss
  void write_csv(const std::string& path) const;
};

struct TrainResult {
  ToyUNet net;
  TrainingLog log;
};

using TrainProgress = std::function<void(int iteration, double smoothed_loss)>;

// The condition a training sample is denoised under.
Condition condition_for(const ToySample& s);

// Noise-prediction training with classifier-free condition dropout. Zero
// iterations returns the initialization unchanged.
TrainResult train_toy_denoiser(const std::vector<ToySample>& data, const ToyUNetConfig& config,
                               const NoiseSchedule& schedule, const TrainSpec& spec,
                               std::uint64_t init_seed, const TrainProgress& progress = {});

struct EpsilonEval {
  double model_mse = 0.0;
  double zero_mse = 0.0;  // MSE of always predicting zero noise
  double ratio() const { return zero_mse > 0.0 ? model_mse / zero_mse : 0.0; }
};

// Noise-prediction error on held-out samples, probes_per_image random
// timesteps each.
EpsilonEval evaluate_epsilon_mse(const DenoiserBackend& backend, const std::vector<ToySample>& data,
                                 int probes_per_image, std::uint64_t seed);

}  // namespace pg
