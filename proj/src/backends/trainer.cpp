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

#include "backends/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>


#include "common/error.hpp"

namespace pg {

void TrainingLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path);
  f << "iteration,loss,smoothed\n";
  for (std::size_t i = 0; i < iteration.size(); ++i) f << iteration[i] << ',' << loss[i] << ',' << smoothed[i] << '\n';
}

Condition condition_for(const ToySample& s) {
  Condition c;
  for (const auto& b : s.layout.boxes) c.concepts.push_back(b.word);
  if (s.scenario != "clean") c.scenario = s.scenario;
  return c;
}

namespace {

std::vector<double> sample_latent(const ToySample& s) {
  Tensor3 x = to_latent(s.image);
  return std::move(x.data);
}

}  // namespace

TrainResult train_toy_denoiser(const std::vector<ToySample>& data, const ToyUNetConfig& config,
                               const NoiseSchedule& schedule, const TrainSpec& spec,
                               std::uint64_t init_seed, const TrainProgress& progress) {
  require(spec.batch > 0 && spec.iterations >= 0, ErrorKind::Parameter, "training: bad batch or iteration count");
  ToyUNet net(config);
  net.initialize(init_seed);
  TrainResult result{net, {}};
  if (spec.iterations == 0) return result;
  require(!data.empty(), ErrorKind::Parameter, "training: empty corpus");

  const int C = config.image_channels, H = config.image_height, W = config.image_width;
  const std::size_t n_pix = static_cast<std::size_t>(C) * H * W;
  std::vector<std::vector<double>> latents;
  std::vector<EncodedCondition> conds;
  latents.reserve(data.size());
  for (const auto& s : data) {
    require(s.image.width == W && s.image.height == H, ErrorKind::Parameter,
            "training: sample " + s.stem + " does not match the model resolution");
    latents.push_back(sample_latent(s));
    Condition c = condition_for(s);
    conds.push_back(net.encode(false, c.concepts, c.scenario));
  }
  const EncodedCondition null_cond = net.encode(true, {}, "");

  auto& params = net.params();
  const std::size_t P = params.size();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  std::vector<float> ema = params;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> pick_t(0, schedule.train_steps() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const auto& ab = schedule.alpha_bar();

  double smoothed = 0.0, initial = -1.0;
  const int check_at = std::max(1, static_cast<int>(spec.divergence_check * spec.iterations));
  for (int it = 0; it < spec.iterations; ++it) {
    const int B = spec.batch;
    std::vector<float> x(n_pix * B), target(n_pix * B);
    std::vector<int> ts(B);
    std::vector<EncodedCondition> bc(B);
    for (int b = 0; b < B; ++b) {
      const std::size_t i = pick(rng);
      const int t = pick_t(rng);
      const double a = ab[t];
      const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
      for (std::size_t p = 0; p < n_pix; ++p) {
        const double e = gauss(rng);
        target[b * n_pix + p] = static_cast<float>(e);
        x[b * n_pix + p] = static_cast<float>(sa * latents[i][p] + sn * e);
      }
      ts[b] = t;
      bc[b] = unit(rng) < spec.cond_dropout ? null_cond : conds[i];
    }

    ad::Tape<float> tape;
    auto pv = net.bind(tape, true);
    ad::Var xv = tape.leaf({B, C, H, W}, std::move(x));
    UNetOutputs out = net.forward(tape, pv, xv, ts, bc, ForwardUntil::Output);
    ad::Var loss = tape.mse(out.eps, target);
    tape.backward(loss);
    const double lv = tape.value(loss)[0];
    require(std::isfinite(lv), ErrorKind::Training, "training: non-finite loss at iteration " + std::to_string(it));

    // Flatten gradients in slot order, clip by global norm.
    std::vector<float> g(P, 0.0f);
    double gn = 0.0;
    const auto& slots = net.slots();
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const auto& gs = tape.grad(pv[s]);
      for (std::size_t k = 0; k < gs.size(); ++k) {
        g[slots[s].offset + k] = gs[k];
        gn += static_cast<double>(gs[k]) * gs[k];
      }
    }
    gn = std::sqrt(gn);
    const double clip = (spec.grad_clip > 0 && gn > spec.grad_clip) ? spec.grad_clip / gn : 1.0;

    const double progress_frac = static_cast<double>(it) / spec.iterations;
    double lr = spec.learning_rate *
                (spec.final_lr_fraction +
                 (1.0 - spec.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress_frac)));
    if (it < spec.warmup) lr *= static_cast<double>(it + 1) / spec.warmup;
    const double bc1 = 1.0 - std::pow(spec.beta1, it + 1), bc2 = 1.0 - std::pow(spec.beta2, it + 1);
    for (std::size_t k = 0; k < P; ++k) {
      const double gk = g[k] * clip;
      m[k] = spec.beta1 * m[k] + (1.0 - spec.beta1) * gk;
      v[k] = spec.beta2 * v[k] + (1.0 - spec.beta2) * gk * gk;
      params[k] -= static_cast<float>(lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + 1e-8));
    }
    if (spec.ema_decay > 0.0) {
      const double d = std::min(spec.ema_decay, (1.0 + it) / (10.0 + it));
      for (std::size_t k = 0; k < P; ++k) ema[k] = static_cast<float>(d * ema[k] + (1.0 - d) * params[k]);
    }

    smoothed = it == 0 ? lv : 0.98 * smoothed + 0.02 * lv;
    if (initial < 0.0) initial = lv;
    if (it % spec.log_every == 0 || it + 1 == spec.iterations) {
      result.log.iteration.push_back(it);
      result.log.loss.push_back(lv);
      result.log.smoothed.push_back(smoothed);
      if (progress) progress(it, smoothed);
    }
    if (it + 1 == check_at && spec.iterations >= 50 && smoothed > initial) {
      fail(ErrorKind::Training, "training diverged: smoothed loss " + std::to_string(smoothed) + " at iteration " +
                                    std::to_string(it + 1) + " exceeds initial loss " + std::to_string(initial) +
                                    " (lr " + std::to_string(spec.learning_rate) + ")");
    }
  }
  if (spec.ema_decay > 0.0) params = ema;
  result.net = net;
  return result;
}

EpsilonEval evaluate_epsilon_mse(const DenoiserBackend& backend, const std::vector<ToySample>& data,
                                 int probes_per_image, std::uint64_t seed) {
  EpsilonEval out;
  std::mt19937_64 rng(seed);
  const auto& sched = backend.schedule();
  std::uniform_int_distribution<int> pick_t(0, sched.train_steps() - 1);
  std::normal_distribution<double> gauss;
  double num = 0.0, zero = 0.0;
  std::size_t count = 0;
  for (const auto& s : data) {
    const Tensor3 x0 = to_latent(s.image);
    const Condition cond = condition_for(s);
    for (int p = 0; p < probes_per_image; ++p) {
      const int t = pick_t(rng);
      const double a = sched.alpha_bar()[t];
      Tensor3 e(x0.channels, x0.height, x0.width), xt = e;
      for (std::size_t i = 0; i < x0.size(); ++i) {
        e.data[i] = gauss(rng);
        xt.data[i] = std::sqrt(a) * x0.data[i] + std::sqrt(1.0 - a) * e.data[i];
      }
      const Tensor3 pred = backend.predict_noise(xt, t, cond);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        num += (pred.data[i] - e.data[i]) * (pred.data[i] - e.data[i]);
        zero += e.data[i] * e.data[i];
      }
      count += x0.size();
    }
  }
  require(count > 0, ErrorKind::Parameter, "epsilon evaluation: no samples");
  out.model_mse = num / count;
  out.zero_mse = zero / count;
  return out;
}

}  // namespace pg
