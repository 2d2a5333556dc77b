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

#include <optional>
#include <string>
#include <vector>

#include "layout/kitti.hpp"

namespace pg {

struct Prompt {
  std::string text;
  std::vector<std::string> concepts;  // lower-case, layout order
  std::optional<std::string> scenario;
};

// "A photo of car, car, and pedestrian"; a single object drops the list
// punctuation and an empty layout falls back to a road-scene prompt.
Prompt build_prompt(const Layout& layout, const Vocabulary& vocab = {});
Prompt apply_scenario(const Prompt& prompt, const std::string& scenario, const Vocabulary& vocab = {});

}  // namespace pg
