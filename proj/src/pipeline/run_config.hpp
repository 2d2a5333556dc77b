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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common/config.hpp"
#include "schedule/sampler.hpp"

namespace pg {

// Stage-2 sampling variants. The ablation names map onto them as
// prompt-only, +g_sa (raw mask), +g_sa+prototypes (updated mask), full.
enum class Mode { Full, PromptOnly, Off, SaOnly, SaRaw, SlOnly };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);
// "+g_sa" style ablation names and mode names both resolve.
Mode parse_variant(const std::string& s);
std::string variant_name(Mode m);

struct RunConfig {
  std::string backend = "analytic";  // "analytic" or a toy checkpoint path
  std::string images;
  std::string labels;
  std::string generated;  // evaluate: directory of generated images
  std::string stores;     // stage 2: directory of prototype stores
  std::string corpus;     // train-toy: corpus directory
  std::string scenario;
  std::string out;
  std::string vocabulary;  // optional key=value vocabulary file
  GuidanceConfig guidance;
  int n_b = 8;
  Mode mode = Mode::Full;
  bool refit_pca = false;
  std::vector<double> tau_sweep;
  std::vector<Mode> variants{Mode::PromptOnly, Mode::SaRaw, Mode::SaOnly, Mode::Full};
  int workers = 1;
  int refine_iterations = -1;  // -1: backend default
  // gen-corpus
  int count = 100;
  int max_objects = 0;
  // train-toy
  int iterations = 3000;
  int batch = 16;
  double learning_rate = 2e-3;
  double holdout = 0.05;

  nlohmann::json to_json() const;
  std::string hash() const;
};

// Keys mirror the long CLI flags without dashes (tau-sweep becomes
// tau_sweep). Unknown keys and malformed values are configuration errors.
RunConfig resolve_run_config(const KeyValueConfig& kv);

const std::vector<std::string>& known_config_keys();

}  // namespace pg
