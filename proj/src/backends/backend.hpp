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

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "autodiff/tape.hpp"
#include "common/tensor.hpp"
#include "schedule/schedule.hpp"

namespace pg {

// Text conditioning reduced to what the prompt template carries: one concept
// word per object, in layout order, and an optional scenario word. The null
// condition is the unconditional branch of classifier-free guidance.
struct Condition {
  bool null = false;
  std::vector<std::string> concepts;
  std::string scenario;  // empty means the clean scene

  static Condition null_condition() {
    Condition c;
    c.null = true;
    return c;
  }
};

struct Capabilities {
  int channels = 0;  // latent shape
  int height = 0;
  int width = 0;
  int feature_channels = 0;  // designated self-attention key width N_c
  int feature_height = 0;
  int feature_width = 0;
  int downsample = 1;
  int image_height = 0;
  int image_width = 0;
  bool input_gradients = false;
  bool concurrent_inference = false;
};

struct FeatureRecord {
  Tensor3 self_keys;                // [N_c, H_f, W_f]
  std::vector<GridMap> cross_maps;  // one per concept word, [H_f, W_f]
};

// factor * sum_{i,p} weight[i,p] * (<basis_i, keys_p - mean> - target[i,p])^2
// over the designated keys. basis is [n_components, N_c] row-major, target
// and weight are [n_components, H_f*W_f]; an empty weight means all ones.
struct KeyProjectionLoss {
  int n_components = 0;
  std::vector<double> basis;
  std::vector<double> mean;
  std::vector<double> target;
  std::vector<double> weight;
  double factor = 1.0;
};

// factor * sum weight * (z - target)^2 over the latent.
struct LatentQuadraticLoss {
  Tensor3 target;
  std::vector<double> weight;
  double factor = 1.0;
};

using LossSpec = std::variant<KeyProjectionLoss, LatentQuadraticLoss>;

struct LossGradient {
  double value = 0.0;
  Tensor3 gradient;
};

// Denoiser contract. Implementations are immutable once constructed, so a
// backend that reports concurrent_inference may be shared across threads.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual std::string name() const = 0;
  virtual const Capabilities& capabilities() const = 0;
  // Training schedule the backend was built against.
  virtual const NoiseSchedule& schedule() const = 0;

  virtual Tensor3 predict_noise(const Tensor3& z, int t, const Condition& cond) const = 0;
  virtual std::vector<Tensor3> predict_noise_batch(const Tensor3& z, int t,
                                                   std::span<const Condition> conds) const;
  virtual FeatureRecord capture_features(const Tensor3& z, int t, const Condition& cond) const = 0;
  virtual LossGradient loss_input_gradient(const Tensor3& z, int t, const Condition& cond,
                                           const LossSpec& loss) const = 0;

 protected:
  void check_latent(const Tensor3& z, int t) const;
};

// Appends the scalar loss for `spec` to the tape. keys are [1, L, N_c]
// tokens (may be invalid when the spec is latent-only), z is [1,C,H,W].
template <typename T>
ad::Var build_loss(ad::Tape<T>& tape, ad::Var z, ad::Var keys, const LossSpec& spec);

extern template ad::Var build_loss<float>(ad::Tape<float>&, ad::Var, ad::Var, const LossSpec&);
extern template ad::Var build_loss<double>(ad::Tape<double>&, ad::Var, ad::Var, const LossSpec&);

template <typename T>
std::vector<T> to_vector(std::span<const double> v) {
  return std::vector<T>(v.begin(), v.end());
}

}  // namespace pg
