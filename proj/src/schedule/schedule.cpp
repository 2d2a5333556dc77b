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

#include "schedule/schedule.hpp"

#include <cmath>
#include <string>

namespace pg {

NoiseSchedule::NoiseSchedule(int train_steps, int ddim_steps, BetaSpec beta) : beta_(beta) {
  require(train_steps >= 1, ErrorKind::Parameter, "train_steps must be positive");
  require(ddim_steps >= 1 && ddim_steps <= train_steps, ErrorKind::Parameter,
          "ddim_steps must lie in [1, train_steps], got " + std::to_string(ddim_steps));
  require(beta.beta_start > 0.0 && beta.beta_end < 1.0 && beta.beta_start <= beta.beta_end,
          ErrorKind::Parameter, "beta range must satisfy 0 < start <= end < 1");
  alpha_bar_.resize(train_steps);
  double prod = 1.0;
  for (int i = 0; i < train_steps; ++i) {
    const double frac = train_steps > 1 ? static_cast<double>(i) / (train_steps - 1) : 0.0;
    const double b = beta.beta_start + frac * (beta.beta_end - beta.beta_start);
    prod *= 1.0 - b;
    alpha_bar_[i] = prod;
  }
  build_step_index(ddim_steps);
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar, int ddim_steps) {
  require(!alpha_bar.empty(), ErrorKind::Parameter, "alpha_bar table is empty");
  for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
    require(alpha_bar[i] > 0.0 && alpha_bar[i] <= 1.0, ErrorKind::Parameter, "alpha_bar entries must lie in (0,1]");
    require(i == 0 || alpha_bar[i] <= alpha_bar[i - 1], ErrorKind::Parameter, "alpha_bar must be non-increasing");
  }
  require(ddim_steps >= 1 && ddim_steps <= static_cast<int>(alpha_bar.size()), ErrorKind::Parameter,
          "ddim_steps must lie in [1, train_steps]");
  NoiseSchedule s;
  s.beta_ = {0.0, 0.0};
  s.alpha_bar_ = std::move(alpha_bar);
  s.build_step_index(ddim_steps);
  return s;
}

void NoiseSchedule::build_step_index(int ddim_steps) {
  const long long train = static_cast<long long>(alpha_bar_.size());
  step_index_.resize(ddim_steps);
  for (int k = 1; k <= ddim_steps; ++k) {
    step_index_[k - 1] = static_cast<int>((k * train) / ddim_steps) - 1;
  }
}

NoiseSchedule NoiseSchedule::with_ddim_steps(int ddim_steps) const {
  require(ddim_steps >= 1 && ddim_steps <= train_steps(), ErrorKind::Parameter,
          "ddim_steps must lie in [1, train_steps], got " + std::to_string(ddim_steps));
  NoiseSchedule s = *this;
  s.build_step_index(ddim_steps);
  return s;
}

int NoiseSchedule::timestep(int k) const {
  require(k >= 1 && k <= ddim_steps(), ErrorKind::Step,
          "DDIM latent index " + std::to_string(k) + " outside [1, " + std::to_string(ddim_steps()) + "]");
  return step_index_[k - 1];
}

double NoiseSchedule::alpha(int k) const {
  require(k >= 0 && k <= ddim_steps(), ErrorKind::Step,
          "DDIM latent index " + std::to_string(k) + " outside [0, " + std::to_string(ddim_steps()) + "]");
  return k == 0 ? 1.0 : alpha_bar_[step_index_[k - 1]];
}

NoiseSchedule build_schedule(int train_steps, int ddim_steps, BetaSpec beta) {
  return NoiseSchedule(train_steps, ddim_steps, beta);
}

StepCoefficients reverse_coefficients(int k, const NoiseSchedule& schedule) {
  require(k >= 1 && k <= schedule.ddim_steps(), ErrorKind::Step, "step " + std::to_string(k) + " out of range");
  const double a_t = schedule.alpha(k);
  const double a_prev = schedule.alpha(k - 1);
  const double ratio = std::sqrt(a_prev / a_t);
  return {ratio, std::sqrt(1.0 - a_prev) - ratio * std::sqrt(1.0 - a_t)};
}

Tensor3 ddim_step(const Tensor3& z, const Tensor3& eps, int k, const NoiseSchedule& schedule,
                  Direction direction) {
  require_same_shape(z, eps, "ddim_step");
  require(k >= 1 && k <= schedule.ddim_steps(), ErrorKind::Step,
          "DDIM step " + std::to_string(k) + " outside [1, " + std::to_string(schedule.ddim_steps()) + "]");
  // from: latent the input sits at; to: latent produced.
  const int from = direction == Direction::Reverse ? k : k - 1;
  const int to = direction == Direction::Reverse ? k - 1 : k;
  const double a_from = schedule.alpha(from);
  const double a_to = schedule.alpha(to);
  const double s_from = std::sqrt(1.0 - a_from);
  const double s_to = std::sqrt(1.0 - a_to);
  const double r = std::sqrt(a_to / a_from);
  Tensor3 out(z.channels, z.height, z.width);
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.data[i] = r * (z.data[i] - s_from * eps.data[i]) + s_to * eps.data[i];
  }
  return out;
}

}  // namespace pg
