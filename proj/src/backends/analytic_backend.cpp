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

#include "backends/analytic_backend.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace pg {

namespace {

std::vector<double> seeded_uniform(std::uint64_t seed, std::size_t n, double bound) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

AnalyticBackend::AnalyticBackend(AnalyticConfig config, NoiseSchedule schedule)
    : config_(config), schedule_(std::move(schedule)) {
  require(config_.data_variance > 0.0, ErrorKind::Parameter, "analytic backend variance must be positive");
  require(config_.downsample == 1 || config_.downsample == 2 || config_.downsample == 4 ||
              config_.downsample == 8,
          ErrorKind::Parameter, "analytic backend downsample must be a power of two <= 8");
  require(config_.height % config_.downsample == 0 && config_.width % config_.downsample == 0,
          ErrorKind::Parameter, "latent size must be divisible by the downsample factor");
  caps_.channels = config_.channels;
  caps_.height = config_.height;
  caps_.width = config_.width;
  caps_.image_height = config_.height;
  caps_.image_width = config_.width;
  caps_.downsample = config_.downsample;
  caps_.feature_channels = config_.feature_channels;
  caps_.feature_height = config_.height / config_.downsample;
  caps_.feature_width = config_.width / config_.downsample;
  caps_.input_gradients = true;
  caps_.concurrent_inference = true;
  const std::size_t fan_in = static_cast<std::size_t>(config_.channels) * 9;
  key_weights_ = seeded_uniform(config_.feature_seed, config_.feature_channels * fan_in,
                                std::sqrt(3.0 / static_cast<double>(fan_in)));
}

Tensor3 AnalyticBackend::predict_noise(const Tensor3& z, int t, const Condition&) const {
  check_latent(z, t);
  const double a = schedule_.alpha_bar()[t];
  const double total_var = a * config_.data_variance + 1.0 - a;
  const double shift = std::sqrt(a) * config_.data_mean;
  const double gain = std::sqrt(1.0 - a) / total_var;
  Tensor3 eps(z.channels, z.height, z.width);
  for (std::size_t i = 0; i < z.size(); ++i) eps.data[i] = gain * (z.data[i] - shift);
  return eps;
}

std::vector<double> AnalyticBackend::concept_weights(const std::string& word) const {
  const std::size_t fan_in = static_cast<std::size_t>(config_.channels) * 9;
  return seeded_uniform(config_.feature_seed ^ fnv1a(word), fan_in, std::sqrt(3.0 / static_cast<double>(fan_in)));
}

AnalyticBackend::Graph AnalyticBackend::build(ad::Tape<double>& tape, const Tensor3& z,
                                              const Condition& cond, bool grad) const {
  Graph g;
  g.z = tape.leaf({1, z.channels, z.height, z.width}, z.data, grad);
  ad::Var pooled = g.z;
  for (int d = config_.downsample; d > 1; d /= 2) pooled = tape.avg_pool2(pooled);
  ad::Var w = tape.constant({config_.feature_channels, config_.channels, 3, 3}, key_weights_);
  ad::Var keys = tape.conv2d(pooled, w, {}, 1, 1);
  g.keys = tape.to_tokens(keys);
  if (!cond.null) {
    for (const auto& word : cond.concepts) {
      ad::Var cw = tape.constant({1, config_.channels, 3, 3}, concept_weights(word));
      g.cross.push_back(tape.conv2d(pooled, cw, {}, 1, 1));
    }
  }
  return g;
}

FeatureRecord AnalyticBackend::capture_features(const Tensor3& z, int t, const Condition& cond) const {
  check_latent(z, t);
  ad::Tape<double> tape;
  Graph g = build(tape, z, cond, false);
  FeatureRecord rec;
  const int hf = caps_.feature_height, wf = caps_.feature_width, nc = caps_.feature_channels;
  rec.self_keys = Tensor3(nc, hf, wf);
  const auto& kv = tape.value(g.keys);
  for (int p = 0; p < hf * wf; ++p)
    for (int c = 0; c < nc; ++c) rec.self_keys.data[static_cast<std::size_t>(c) * hf * wf + p] = kv[static_cast<std::size_t>(p) * nc + c];
  for (ad::Var v : g.cross) {
    GridMap m(hf, wf);
    m.data.assign(tape.value(v).begin(), tape.value(v).end());
    rec.cross_maps.push_back(std::move(m));
  }
  return rec;
}

LossGradient AnalyticBackend::loss_input_gradient(const Tensor3& z, int t, const Condition& cond,
                                                  const LossSpec& loss) const {
  check_latent(z, t);
  ad::Tape<double> tape;
  Graph g = build(tape, z, cond, true);
  ad::Var l = build_loss(tape, g.z, g.keys, loss);
  tape.backward(l);
  LossGradient out;
  out.value = tape.value(l)[0];
  out.gradient = Tensor3(z.channels, z.height, z.width);
  out.gradient.data = tape.grad(g.z);
  return out;
}

}  // namespace pg
