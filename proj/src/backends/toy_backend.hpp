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

#include <filesystem>
#include <memory>

#include "backends/backend.hpp"
#include "backends/toy_unet.hpp"

namespace pg {

enum class Precision { Float32, Float64 };

class ToyBackend final : public DenoiserBackend {
 public:
  ToyBackend(ToyUNet net, NoiseSchedule schedule, Precision precision = Precision::Float32);

  std::string name() const override { return "toy"; }
  const Capabilities& capabilities() const override { return caps_; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  const ToyUNet& net() const { return net_; }
  Precision precision() const { return precision_; }
  void set_precision(Precision p) { precision_ = p; }

  Tensor3 predict_noise(const Tensor3& z, int t, const Condition& cond) const override;
  std::vector<Tensor3> predict_noise_batch(const Tensor3& z, int t,
                                           std::span<const Condition> conds) const override;
  FeatureRecord capture_features(const Tensor3& z, int t, const Condition& cond) const override;
  LossGradient loss_input_gradient(const Tensor3& z, int t, const Condition& cond,
                                   const LossSpec& loss) const override;

  EncodedCondition encode(const Condition& cond) const;

 private:
  template <typename T>
  std::vector<Tensor3> predict_impl(const Tensor3& z, int t, std::span<const Condition> conds) const;
  template <typename T>
  FeatureRecord features_impl(const Tensor3& z, int t, const Condition& cond) const;
  template <typename T>
  LossGradient gradient_impl(const Tensor3& z, int t, const Condition& cond, const LossSpec& loss) const;

  ToyUNet net_;
  NoiseSchedule schedule_;
  Precision precision_;
  Capabilities caps_;
};

}  // namespace pg
