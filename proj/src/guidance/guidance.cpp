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

#include "guidance/guidance.hpp"

#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "prototypes/prototypes.hpp"

namespace pg {

double g_sa(const std::vector<double>& components_now, const std::vector<double>& prototype, const GridMask& mask) {
  require(components_now.size() == prototype.size(), ErrorKind::Contract, "g_sa: component shapes differ");
  const std::size_t L = mask.size();
  require(L > 0 && components_now.size() % L == 0, ErrorKind::Contract, "g_sa: mask does not tile the components");
  double s = 0.0;
  for (std::size_t i = 0; i < components_now.size(); ++i) {
    if (!mask.data[i % L]) continue;
    const double d = components_now[i] - prototype[i];
    s += d * d;
  }
  return s;
}

namespace {

bool check_sl(const Tensor3& z, const Tensor3& z_inv, const GridMask& indicator, int n_objects, const char* what) {
  require_same_shape(z, z_inv, what);
  require(indicator.same_shape(z.height, z.width), ErrorKind::Contract,
          std::string(what) + ": indicator does not match the latent grid");
  bool any = false;
  for (auto v : indicator.data) any = any || v;
  require(!any || n_objects >= 1, ErrorKind::Contract, std::string(what) + ": object count must be positive");
  return any;
}

}  // namespace

double g_sl(const Tensor3& z, const Tensor3& z_inv, const GridMask& indicator, int n_objects) {
  if (!check_sl(z, z_inv, indicator, n_objects, "g_sl")) return 0.0;
  const std::size_t P = z.plane();
  double s = 0.0;
  for (int c = 0; c < z.channels; ++c)
    for (std::size_t p = 0; p < P; ++p) {
      if (!indicator.data[p]) continue;
      const double d = z_inv.data[c * P + p] - z.data[c * P + p];
      s += d * d;
    }
  return s / n_objects;
}

Tensor3 g_sl_gradient(const Tensor3& z, const Tensor3& z_inv, const GridMask& indicator, int n_objects) {
  Tensor3 g(z.channels, z.height, z.width);
  if (!check_sl(z, z_inv, indicator, n_objects, "g_sl gradient")) return g;
  const std::size_t P = z.plane();
  for (int c = 0; c < z.channels; ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (indicator.data[p]) g.data[c * P + p] = 2.0 / n_objects * (z.data[c * P + p] - z_inv.data[c * P + p]);
  return g;
}

GridMask latent_indicator(const Layout& layout, int image_width, int image_height, int latent_height,
                          int latent_width) {
  require(latent_width > 0 && image_width % latent_width == 0 && image_height % latent_height == 0 &&
              image_width / latent_width == image_height / latent_height,
          ErrorKind::Contract, "latent indicator: image size is not an integer multiple of the latent size");
  return to_grid(layout, image_width, image_height, image_width / latent_width).indicator;
}

GuidanceState make_guidance_state(const PrototypeStore& store, const Layout& layout, const Capabilities& caps,
                                  double tau, MaskSource source, bool use_sa, bool use_sl, bool refit_pca) {
  GuidanceState s;
  s.store = &store;
  s.mask = binarize(source == MaskSource::Updated ? store.updated_mask : store.raw_mask, tau);
  s.indicator = latent_indicator(layout, store.image_width, store.image_height, caps.height, caps.width);
  s.n_objects = static_cast<int>(layout.boxes.size());
  s.use_sa = use_sa;
  s.use_sl = use_sl;
  s.refit_pca = refit_pca;
  return s;
}

StepGuidanceResult assemble_step_guidance(const Tensor3& z, int k, int t, const GuidanceState& state,
                                          const DenoiserBackend& backend, const Condition& cond,
                                          const GuidanceConfig& config) {
  require(state.store != nullptr, ErrorKind::Configuration, "guidance: no prototype store");
  const PrototypeStore& store = *state.store;
  require(k >= 1 && k <= store.n_p, ErrorKind::Contract,
          "guidance requested at step " + std::to_string(k) + " beyond N_p=" + std::to_string(store.n_p));
  auto entry = store.entries.find(k);
  require(entry != store.entries.end(), ErrorKind::Store, "guidance: no prototype for step " + std::to_string(k));
  const int j = latent_index_for_step(k, store.n_t);
  auto zi = store.latents.find(j);
  require(zi != store.latents.end(), ErrorKind::Store, "guidance: no inversion latent for index " + std::to_string(j));

  StepGuidanceResult r;
  r.log.k = k;
  r.log.t = t;
  const auto& caps = backend.capabilities();

  if (state.use_sl) {
    r.log.g_sl = g_sl(z, zi->second, state.indicator, state.n_objects);
    r.grads.grad_sl = g_sl_gradient(z, zi->second, state.indicator, state.n_objects);
    r.log.grad_sl_norm = l2_norm(r.grads.grad_sl.data);
  }

  if (state.use_sa && config.w_sa > 0.0) {
    PrincipalComponents pcs = entry->second.pcs;
    if (state.refit_pca) {
      const FeatureRecord live = backend.capture_features(z, t, cond);
      pcs = fit_pca(live.self_keys, pcs.n_components);
    }
    KeyProjectionLoss loss;
    loss.n_components = pcs.n_components;
    loss.basis = pcs.basis;
    loss.mean = pcs.mean;
    // Inactive components project to zero on both sides.
    for (int i = 0; i < pcs.n_components; ++i)
      if (!pcs.active[i]) std::fill(loss.basis.begin() + i * pcs.channels, loss.basis.begin() + (i + 1) * pcs.channels, 0.0);
    loss.target = entry->second.pcs.components;
    const std::size_t L = state.mask.size();
    loss.weight.resize(loss.target.size());
    for (std::size_t i = 0; i < loss.weight.size(); ++i) loss.weight[i] = state.mask.data[i % L];
    if (caps.input_gradients) {
      LossGradient lg = backend.loss_input_gradient(z, t, cond, loss);
      r.log.g_sa = lg.value;
      r.grads.grad_sa = std::move(lg.gradient);
      r.log.grad_sa_norm = l2_norm(r.grads.grad_sa.data);
    } else {
      const FeatureRecord live = backend.capture_features(z, t, cond);
      r.log.g_sa = g_sa(project_onto(pcs, live.self_keys), loss.target, state.mask);
      r.log.sa_gradient = false;
      if (k == 1) spdlog::warn("backend {} has no input gradients; g_sa guidance disabled", backend.name());
    }
  }
  return r;
}

std::string format_step_log(const StepLog& log) {
  nlohmann::json j{{"step", log.k},          {"t", log.t},
                   {"g_sa", log.g_sa},       {"g_sl", log.g_sl},
                   {"grad_sa_norm", log.grad_sa_norm}, {"grad_sl_norm", log.grad_sl_norm},
                   {"sa_gradient", log.sa_gradient}};
  return j.dump();
}

}  // namespace pg
