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

#include "backends/backend.hpp"

namespace pg {

std::vector<Tensor3> DenoiserBackend::predict_noise_batch(const Tensor3& z, int t,
                                                          std::span<const Condition> conds) const {
  std::vector<Tensor3> out;
  out.reserve(conds.size());
  for (const auto& c : conds) out.push_back(predict_noise(z, t, c));
  return out;
}

void DenoiserBackend::check_latent(const Tensor3& z, int t) const {
  const Capabilities& caps = capabilities();
  require(z.channels == caps.channels && z.height == caps.height && z.width == caps.width,
          ErrorKind::Contract,
          name() + ": latent shape " + z.shape_string() + " does not match backend [" +
              std::to_string(caps.channels) + "," + std::to_string(caps.height) + "," +
              std::to_string(caps.width) + "]");
  require(t >= 0 && t < schedule().train_steps(), ErrorKind::Step,
          name() + ": timestep " + std::to_string(t) + " out of range");
}

template <typename T>
ad::Var build_loss(ad::Tape<T>& tape, ad::Var z, ad::Var keys, const LossSpec& spec) {
  if (const auto* lq = std::get_if<LatentQuadraticLoss>(&spec)) {
    const auto target = to_vector<T>(lq->target.data);
    const auto weight = to_vector<T>(lq->weight);
    require(target.size() == ad::numel(tape.shape(z)), ErrorKind::Contract, "latent loss target shape");
    return tape.weighted_sq_error(z, target, weight, static_cast<T>(lq->factor));
  }
  const auto& kp = std::get<KeyProjectionLoss>(spec);
  require(keys.valid(), ErrorKind::Contract, "key projection loss needs captured keys");
  const auto& ks = tape.shape(keys);
  const int L = ks[1], nc = ks[2], nb = kp.n_components;
  require(static_cast<int>(kp.mean.size()) == nc && static_cast<int>(kp.basis.size()) == nb * nc,
          ErrorKind::Contract, "key projection loss: channel count does not match the basis");
  require(kp.target.size() == static_cast<std::size_t>(nb) * L &&
              (kp.weight.empty() || kp.weight.size() == kp.target.size()),
          ErrorKind::Contract, "key projection loss: target/weight shape");
  // coordinates [L, nb] = keys * basis^T - basis * mean
  std::vector<T> wt(static_cast<std::size_t>(nc) * nb);
  std::vector<T> bias(nb, T(0));
  for (int i = 0; i < nb; ++i) {
    double shift = 0.0;
    for (int c = 0; c < nc; ++c) {
      wt[static_cast<std::size_t>(c) * nb + i] = static_cast<T>(kp.basis[static_cast<std::size_t>(i) * nc + c]);
      shift += kp.basis[static_cast<std::size_t>(i) * nc + c] * kp.mean[c];
    }
    bias[i] = static_cast<T>(-shift);
  }
  ad::Var w = tape.constant({nc, nb}, std::move(wt));
  ad::Var b = tape.constant({nb}, std::move(bias));
  ad::Var coords = tape.linear(keys, w, b);  // [1, L, nb]
  // target/weight come as [nb, L]; transpose to token order.
  std::vector<T> target(static_cast<std::size_t>(L) * nb), weight;
  if (!kp.weight.empty()) weight.resize(target.size());
  for (int i = 0; i < nb; ++i)
    for (int p = 0; p < L; ++p) {
      target[static_cast<std::size_t>(p) * nb + i] = static_cast<T>(kp.target[static_cast<std::size_t>(i) * L + p]);
      if (!weight.empty())
        weight[static_cast<std::size_t>(p) * nb + i] = static_cast<T>(kp.weight[static_cast<std::size_t>(i) * L + p]);
    }
  return tape.weighted_sq_error(coords, target, weight, static_cast<T>(kp.factor));
}

template ad::Var build_loss<float>(ad::Tape<float>&, ad::Var, ad::Var, const LossSpec&);
template ad::Var build_loss<double>(ad::Tape<double>&, ad::Var, ad::Var, const LossSpec&);

}  // namespace pg
