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

#include "backends/toy_backend.hpp"

namespace pg {

ToyBackend::ToyBackend(ToyUNet net, NoiseSchedule schedule, Precision precision)
    : net_(std::move(net)), schedule_(std::move(schedule)), precision_(precision) {
  const auto& c = net_.config();
  caps_.channels = c.image_channels;
  caps_.height = c.image_height;
  caps_.width = c.image_width;
  caps_.image_height = c.image_height;
  caps_.image_width = c.image_width;
  caps_.downsample = c.downsample();
  caps_.feature_channels = c.attn_dim;
  caps_.feature_height = (c.image_height + caps_.downsample - 1) / caps_.downsample;
  caps_.feature_width = (c.image_width + caps_.downsample - 1) / caps_.downsample;
  caps_.input_gradients = true;
  caps_.concurrent_inference = true;
}

EncodedCondition ToyBackend::encode(const Condition& cond) const {
  return net_.encode(cond.null, cond.concepts, cond.scenario);
}

template <typename T>
std::vector<Tensor3> ToyBackend::predict_impl(const Tensor3& z, int t, std::span<const Condition> conds) const {
  const int N = static_cast<int>(conds.size());
  std::vector<EncodedCondition> enc;
  for (const auto& c : conds) enc.push_back(encode(c));
  std::vector<T> x;
  x.reserve(z.size() * N);
  for (int n = 0; n < N; ++n) x.insert(x.end(), z.data.begin(), z.data.end());
  ad::Tape<T> tape;
  auto params = net_.bind(tape, false);
  ad::Var xv = tape.leaf({N, z.channels, z.height, z.width}, std::move(x));
  std::vector<int> ts(N, t);
  UNetOutputs out = net_.forward(tape, params, xv, ts, enc, ForwardUntil::Output);
  const auto& ev = tape.value(out.eps);
  std::vector<Tensor3> result;
  for (int n = 0; n < N; ++n) {
    Tensor3 e(z.channels, z.height, z.width);
    for (std::size_t i = 0; i < z.size(); ++i) e.data[i] = ev[n * z.size() + i];
    result.push_back(std::move(e));
  }
  return result;
}

Tensor3 ToyBackend::predict_noise(const Tensor3& z, int t, const Condition& cond) const {
  return predict_noise_batch(z, t, std::span<const Condition>(&cond, 1)).front();
}

std::vector<Tensor3> ToyBackend::predict_noise_batch(const Tensor3& z, int t,
                                                     std::span<const Condition> conds) const {
  check_latent(z, t);
  if (conds.empty()) return {};
  return precision_ == Precision::Float32 ? predict_impl<float>(z, t, conds) : predict_impl<double>(z, t, conds);
}

template <typename T>
FeatureRecord ToyBackend::features_impl(const Tensor3& z, int t, const Condition& cond) const {
  EncodedCondition enc = encode(cond);
  ad::Tape<T> tape;
  auto params = net_.bind(tape, false);
  ad::Var xv = tape.leaf({1, z.channels, z.height, z.width}, std::vector<T>(z.data.begin(), z.data.end()));
  const int ts[1] = {t};
  UNetOutputs out = net_.forward(tape, params, xv, ts, std::span<const EncodedCondition>(&enc, 1),
                                 ForwardUntil::Attention);
  const int hf = caps_.feature_height, wf = caps_.feature_width, nc = caps_.feature_channels;
  const int L = hf * wf;
  FeatureRecord rec;
  rec.self_keys = Tensor3(nc, hf, wf);
  const auto& kv = tape.value(out.keys);
  for (int p = 0; p < L; ++p)
    for (int c = 0; c < nc; ++c) rec.self_keys.data[static_cast<std::size_t>(c) * L + p] = kv[static_cast<std::size_t>(p) * nc + c];
  const auto& av = tape.value(out.cross_probs);
  const int S = net_.context_length();
  // Token 0 is the always-present null token; concept j sits at token 1+j.
  const int n_maps = cond.null ? 0 : static_cast<int>(cond.concepts.size());
  for (int j = 0; j < n_maps; ++j) {
    GridMap m(hf, wf, 0.0);
    if (j < enc.n_concepts)
      for (int p = 0; p < L; ++p) m.data[p] = av[static_cast<std::size_t>(p) * S + 1 + j];
    rec.cross_maps.push_back(std::move(m));
  }
  return rec;
}

FeatureRecord ToyBackend::capture_features(const Tensor3& z, int t, const Condition& cond) const {
  check_latent(z, t);
  return precision_ == Precision::Float32 ? features_impl<float>(z, t, cond) : features_impl<double>(z, t, cond);
}

template <typename T>
LossGradient ToyBackend::gradient_impl(const Tensor3& z, int t, const Condition& cond, const LossSpec& loss) const {
  ad::Tape<T> tape;
  ad::Var xv = tape.leaf({1, z.channels, z.height, z.width}, std::vector<T>(z.data.begin(), z.data.end()), true);
  ad::Var keys;
  if (std::holds_alternative<KeyProjectionLoss>(loss)) {
    EncodedCondition enc = encode(cond);
    auto params = net_.bind(tape, false);
    const int ts[1] = {t};
    keys = net_.forward(tape, params, xv, ts, std::span<const EncodedCondition>(&enc, 1), ForwardUntil::Attention).keys;
  }
  ad::Var l = build_loss(tape, xv, keys, loss);
  tape.backward(l);
  LossGradient out;
  out.value = tape.value(l)[0];
  out.gradient = Tensor3(z.channels, z.height, z.width);
  const auto& g = tape.grad(xv);
  out.gradient.data.assign(g.begin(), g.end());
  return out;
}

LossGradient ToyBackend::loss_input_gradient(const Tensor3& z, int t, const Condition& cond,
                                             const LossSpec& loss) const {
  check_latent(z, t);
  return precision_ == Precision::Float32 ? gradient_impl<float>(z, t, cond, loss)
                                          : gradient_impl<double>(z, t, cond, loss);
}

}  // namespace pg
