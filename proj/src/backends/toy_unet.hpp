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
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "autodiff/tape.hpp"

namespace pg {

struct ToyUNetConfig {
  int image_channels = 3;
  int image_height = 32;
  int image_width = 64;
  int width0 = 32;  // full resolution
  int width1 = 48;  // 1/2
  int width2 = 64;  // 1/4, where the first decoder level lives
  int attn_dim = 64;
  int context_dim = 64;
  int time_dim = 128;
  int groups = 8;
  int max_concepts = 4;
  std::vector<std::string> concepts{"car", "pedestrian", "cyclist"};
  std::vector<std::string> scenarios{"clean", "snow", "fog", "night", "defocus"};

  int downsample() const { return 4; }
  std::string architecture_hash() const;
  nlohmann::json to_json() const;
  static ToyUNetConfig from_json(const nlohmann::json& j);
};

struct ParamSlot {
  std::string name;
  ad::Shape shape;
  std::size_t offset = 0;
};

// Conditioning lowered to embedding-table indices.
struct EncodedCondition {
  int scenario_row = 0;            // row in the scenario table; the last row is null
  std::vector<int> context_rows;   // [1 + max_concepts] rows in the concept table
  std::vector<int> context_valid;  // 1 for live tokens
  int n_concepts = 0;
};

// What a forward pass needs to produce. Stopping early skips the decoder
// tail when only the first decoder level's attention is wanted.
enum class ForwardUntil { Attention, Output };

struct UNetOutputs {
  ad::Var eps;          // [N,C,H,W] (Output only)
  ad::Var keys;         // [N,L,D] self-attention keys at the first decoder level
  ad::Var cross_probs;  // [N,L,S] cross-attention probabilities
};

// Two-level attention U-Net. The first decoder level (1/4 resolution) holds
// a self-attention block, whose keys are the designated features, followed
// by a cross-attention block over concept tokens. Scenario embeddings enter
// through the timestep embedding.
class ToyUNet {
 public:
  explicit ToyUNet(ToyUNetConfig config);

  const ToyUNetConfig& config() const { return config_; }
  const std::vector<ParamSlot>& slots() const { return slots_; }
  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  void initialize(std::uint64_t seed);
  // Throws Vocabulary for unknown concept or scenario words.
  EncodedCondition encode(bool null, std::span<const std::string> concepts, const std::string& scenario) const;
  int context_length() const { return 1 + config_.max_concepts; }

  template <typename T>
  std::vector<ad::Var> bind(ad::Tape<T>& tape, bool requires_grad) const;

  template <typename T>
  UNetOutputs forward(ad::Tape<T>& tape, const std::vector<ad::Var>& params, ad::Var x,
                      std::span<const int> timesteps, std::span<const EncodedCondition> conds,
                      ForwardUntil until) const;

 private:
  std::size_t add_slot(const std::string& name, ad::Shape shape);
  const ParamSlot& slot(const std::string& name) const;
  int slot_index(const std::string& name) const;

  ToyUNetConfig config_;
  std::vector<ParamSlot> slots_;
  std::map<std::string, int> slot_lookup_;
  std::vector<float> params_;
};

extern template std::vector<ad::Var> ToyUNet::bind<float>(ad::Tape<float>&, bool) const;
extern template std::vector<ad::Var> ToyUNet::bind<double>(ad::Tape<double>&, bool) const;
extern template UNetOutputs ToyUNet::forward<float>(ad::Tape<float>&, const std::vector<ad::Var>&, ad::Var,
                                                    std::span<const int>, std::span<const EncodedCondition>,
                                                    ForwardUntil) const;
extern template UNetOutputs ToyUNet::forward<double>(ad::Tape<double>&, const std::vector<ad::Var>&, ad::Var,
                                                     std::span<const int>, std::span<const EncodedCondition>,
                                                     ForwardUntil) const;

}  // namespace pg
