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
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pg {

// Class and scenario vocabularies plus the scenario suffix table. Loadable
// from a key=value file:
//   vocabulary = car, pedestrian, cyclist
//   scenario.snow = , in the snow
struct Vocabulary {
  std::vector<std::string> classes{"car", "pedestrian", "cyclist"};
  std::map<std::string, std::string> scenario_suffix{
      {"snow", ", in the snow"}, {"rain", ", in the rain"},
      {"fog", ", in the fog"},   {"sandstorm", ", in the sandstorm"},
      {"night", ", at night"},   {"defocus", ", with defocus blur"}};

  bool has_class(std::string_view word) const;
  bool has_scenario(std::string_view word) const { return scenario_suffix.count(std::string(word)) > 0; }
  static Vocabulary from_file(const std::string& path);
};

struct LayoutBox {
  std::string type;  // class token as written in the label file, e.g. "Car"
  std::string word;  // lower-cased class word
  double left = 0, top = 0, right = 0, bottom = 0;
  // KITTI fields 2-4 (truncated, occluded, alpha) and 9-15 (dimensions,
  // location, rotation_y), plus an optional trailing score, kept verbatim.
  std::array<std::string, 3> head{"0.00", "0", "0.00"};
  std::vector<std::string> tail{"-1", "-1", "-1", "-1000", "-1000", "-1000", "-10"};
};

struct Layout {
  std::vector<LayoutBox> boxes;
  std::string source;
  int image_width = 0;
  int image_height = 0;

  bool empty() const { return boxes.empty(); }
};

std::string lowercase(std::string_view s);

Layout parse_kitti_labels(std::string_view text, int image_width, int image_height,
                          const Vocabulary& vocab = {});
std::string serialize_kitti_labels(const Layout& layout);
Layout load_kitti_labels(const std::string& path, int image_width, int image_height,
                         const Vocabulary& vocab = {});

}  // namespace pg
