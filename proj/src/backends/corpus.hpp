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

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "common/image_io.hpp"
#include "layout/kitti.hpp"

namespace pg {

struct ClassPrior {
  std::string word;  // lower-case concept word
  std::string type;  // label-file class token
  int min_w, max_w, min_h, max_h;
  std::array<int, 3> color;
  double frequency;
};

// Desk-scale stand-in for street imagery: sky/road backdrops with solid
// colored objects, rendered under one of a few corruption scenarios.
struct ToyCorpusSpec {
  int width = 64;
  int height = 32;
  std::vector<ClassPrior> classes{
      {"car", "Car", 10, 18, 6, 10, {205, 45, 40}, 0.5},
      {"pedestrian", "Pedestrian", 3, 5, 7, 12, {45, 70, 205}, 0.25},
      {"cyclist", "Cyclist", 3, 6, 4, 8, {50, 185, 70}, 0.25},
  };
  std::vector<std::string> scenarios{"clean", "snow", "fog", "night", "defocus"};
  std::vector<double> scenario_weights{0.4, 0.15, 0.15, 0.15, 0.15};
  int min_objects = 1;
  int max_objects = 4;
  double snow_density = 0.06;
  double fog_gray = 190.0;
  double fog_keep = 0.4;
  double night_scale = 0.3;
  int blur_radius = 2;
};

struct ToySample {
  std::string stem;
  RgbImage image;  // rendered under `scenario`
  RgbImage base;   // the clean scene before the scenario render
  Layout layout;
  std::string prompt;
  std::string scenario;
};

// Sample i depends only on (seed, i), so corpora of different sizes share
// prefixes. force_scenario pins every sample to one scenario.
std::vector<ToySample> generate_toy_corpus(const ToyCorpusSpec& spec, int n, std::uint64_t seed,
                                           const std::optional<std::string>& force_scenario = std::nullopt,
                                           int max_objects_override = 0);

RgbImage render_scenario(const RgbImage& base, const std::string& scenario, const ToyCorpusSpec& spec,
                         std::mt19937_64& rng);

// images/<stem>.png, labels/<stem>.txt, manifest.json
void write_corpus(const std::string& dir, const std::vector<ToySample>& samples, std::uint64_t seed);
std::vector<ToySample> load_corpus(const std::string& dir);

}  // namespace pg
