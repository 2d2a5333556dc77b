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

#include "schedule/sampler.hpp"

#include <cmath>
#include <random>

namespace pg {

int GuidanceConfig::guided_steps() const {
  return n_p ? *n_p : static_cast<int>(std::ceil(0.6 * n_t - 1e-9));
}

void GuidanceConfig::validate() const {
  require(n_t >= 1, ErrorKind::Parameter, "n_t must be positive");
  const int np = guided_steps();
  require(np >= 0 && np <= n_t, ErrorKind::Parameter,
          "n_p must be in [0, n_t], got " + std::to_string(np) + " with n_t " + std::to_string(n_t));
  require(s >= 0.0, ErrorKind::Parameter, "s must be nonnegative");
  require(sigma > 0.0 && sigma < 1.0, ErrorKind::Parameter, "sigma must be in (0,1)");
  require(tau >= 0.0 && tau < 1.0, ErrorKind::Parameter, "tau must be in [0,1)");
  require(w_sa >= 0.0 && w_sl >= 0.0, ErrorKind::Parameter, "loss weights must be nonnegative");
}

LatentTrajectory invert(const Tensor3& image, const Condition& cond, const NoiseSchedule& schedule,
                        const DenoiserBackend& backend, const InversionOptions& options) {
  const int n = schedule.ddim_steps();
  require(options.capture_steps >= 0 && options.capture_steps <= n, ErrorKind::Parameter,
          "inversion: capture steps outside [0, N_t]");
  LatentTrajectory traj;
  traj.latents.reserve(n + 1);
  traj.latents.push_back(image);
  for (int k = 1; k <= n; ++k) {
    const Tensor3& prev = traj.latents.back();
    const int t = schedule.timestep(k);
    Tensor3 z = ddim_step(prev, backend.predict_noise(prev, t, cond), k, schedule, Direction::Forward);
    const auto [a, b] = reverse_coefficients(k, schedule);
    for (int it = 0; it < options.refine_iterations; ++it) {
      const Tensor3 eps = backend.predict_noise(z, t, cond);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double v = (prev.data[i] - b * eps.data[i]) / a;
        num += (v - z.data[i]) * (v - z.data[i]);
        den += v * v;
        z.data[i] = v;
      }
      if (num <= options.refine_tolerance * options.refine_tolerance * std::max(den, 1e-300)) break;
    }
    const int step = n - k + 1;
    if (step <= options.capture_steps) traj.features[step] = backend.capture_features(z, t, cond);
    traj.latents.push_back(std::move(z));
  }
  return traj;
}

Tensor3 combine_guidance(const Tensor3& eps_cond, const Tensor3& eps_null, const Tensor3& grad_sa,
                         const Tensor3& grad_sl, double s, double w_sa, double w_sl) {
  require_same_shape(eps_cond, eps_null, "guided epsilon");
  const bool has_sa = grad_sa.size() > 0, has_sl = grad_sl.size() > 0;
  if (has_sa) require_same_shape(eps_cond, grad_sa, "guided epsilon (g_sa gradient)");
  if (has_sl) require_same_shape(eps_cond, grad_sl, "guided epsilon (g_sl gradient)");
  Tensor3 out(eps_cond.channels, eps_cond.height, eps_cond.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = (1.0 + s) * eps_cond.data[i] - s * eps_null.data[i];
    if (has_sa) v += w_sa * grad_sa.data[i];
    if (has_sl) v += w_sl * grad_sl.data[i];
    out.data[i] = v;
  }
  return out;
}

namespace {

std::pair<Tensor3, Tensor3> cfg_pair(const DenoiserBackend& backend, const Tensor3& z, int t, const Condition& cond,
                                     double s) {
  if (s == 0.0) {
    Tensor3 e = backend.predict_noise(z, t, cond);
    return {e, e};
  }
  const Condition both[2] = {cond, Condition::null_condition()};
  auto eps = backend.predict_noise_batch(z, t, both);
  return {std::move(eps[0]), std::move(eps[1])};
}

}  // namespace

Tensor3 guided_epsilon(const DenoiserBackend& backend, const Tensor3& z, int t, const Condition& cond,
                       const Tensor3& grad_sa, const Tensor3& grad_sl, const GuidanceConfig& config) {
  auto [ec, eu] = cfg_pair(backend, z, t, cond, config.s);
  return combine_guidance(ec, eu, grad_sa, grad_sl, config.s, config.w_sa, config.w_sl);
}

Tensor3 gaussian_latent(int channels, int height, int width, std::uint64_t seed) {
  Tensor3 z(channels, height, width);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (double& v : z.data) v = g(rng);
  return z;
}

SampleResult sample(const Tensor3& initial, const Condition& cond, const NoiseSchedule& schedule,
                    const DenoiserBackend& backend, const GuidanceHook& hook, const GuidanceConfig& config) {
  const int n = schedule.ddim_steps();
  const int np = config.guidance ? std::min(config.guided_steps(), n) : 0;
  require(np == 0 || static_cast<bool>(hook), ErrorKind::Configuration,
          "guided sampling requested without prototypes");
  const auto& caps = backend.capabilities();
  Tensor3 z = initial.size() > 0 ? initial : gaussian_latent(caps.channels, caps.height, caps.width, config.seed);
  SampleResult out;
  out.trajectory.assign(n + 1, Tensor3());
  out.trajectory[n] = z;
  for (int k = 1; k <= n; ++k) {
    const int j = latent_index_for_step(k, n);
    const int t = schedule.timestep(j);
    StepGuidance g;
    if (k <= np) g = hook(z, k, t);
    auto [ec, eu] = cfg_pair(backend, z, t, cond, config.s);
    const Tensor3 eps = combine_guidance(ec, eu, g.grad_sa, g.grad_sl, config.s, config.w_sa, config.w_sl);
    z = ddim_step(z, eps, j, schedule, Direction::Reverse);
    out.trajectory[j - 1] = z;
  }
  out.final_latent = std::move(z);
  return out;
}

}  // namespace pg
