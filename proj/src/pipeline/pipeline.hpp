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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "backends/backend.hpp"
#include "guidance/guidance.hpp"
#include "layout/kitti.hpp"
#include "metrics/metrics.hpp"
#include "pca/prototype_store.hpp"
#include "pipeline/run_config.hpp"

namespace pg {

struct RunSummary {
  int processed = 0;
  int failed = 0;
  int skipped = 0;
  nlohmann::json details = nlohmann::json::object();
  bool partial() const { return failed > 0 || skipped > 0; }
};

struct ImageInput {
  std::string stem;
  std::string image_path;
  std::string label_path;
};

// Pairs images/<stem>.png with labels/<stem>.txt; unpaired files are
// reported in `summary` and skipped.
std::vector<ImageInput> pair_inputs(const std::string& images, const std::string& labels, RunSummary& summary);

Vocabulary load_vocabulary(const RunConfig& config);

// "analytic" builds the closed-form backend at the given image size;
// anything else is a toy checkpoint path.
std::unique_ptr<DenoiserBackend> make_backend(const RunConfig& config, int image_width, int image_height);

// Stage 1 for one image.
PrototypeStore extract_image(const std::string& stem, const RgbImage& image, const Layout& layout,
                             const DenoiserBackend& backend, const RunConfig& config, const Vocabulary& vocab);

struct Generation {
  RgbImage image;
  RegionReport report;
  std::vector<StepLog> steps;
  std::string prompt;
};

// Stage 2 for one image. `store` may be null only in prompt-only mode.
Generation generate_image(const std::string& stem, const RgbImage& original, const Layout& layout,
                          const PrototypeStore* store, const DenoiserBackend& backend, const RunConfig& config,
                          Mode mode, const Vocabulary& vocab);

RunSummary run_gen_corpus(const RunConfig& config);
RunSummary run_train_toy(const RunConfig& config);
RunSummary run_stage1(const RunConfig& config);
RunSummary run_stage2(const RunConfig& config);
RunSummary run_ablation(const RunConfig& config);
RunSummary run_evaluate(const RunConfig& config);

const std::vector<std::string>& verbs();
RunSummary run_verb(const std::string& verb, const RunConfig& config);

// Per-image seed: independent of processing order and worker count.
std::uint64_t image_seed(std::uint64_t seed, const std::string& stem);

}  // namespace pg
