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

#include "layout/prompt.hpp"

#include "common/error.hpp"

namespace pg {

Prompt build_prompt(const Layout& layout, const Vocabulary& vocab) {
  Prompt p;
  for (const auto& b : layout.boxes) {
    const std::string w = lowercase(b.word.empty() ? b.type : b.word);
    require(vocab.has_class(w), ErrorKind::Vocabulary, "class word '" + w + "' is not in the vocabulary");
    p.concepts.push_back(w);
  }
  const auto n = p.concepts.size();
  if (n == 0) {
    p.text = "A photo of a road scene";
  } else if (n == 1) {
    p.text = "A photo of " + p.concepts[0];
  } else if (n == 2) {
    p.text = "A photo of " + p.concepts[0] + ", and " + p.concepts[1];
  } else {
    p.text = "A photo of ";
    for (std::size_t i = 0; i + 1 < n; ++i) p.text += p.concepts[i] + ", ";
    p.text += "and " + p.concepts.back();
  }
  return p;
}

Prompt apply_scenario(const Prompt& prompt, const std::string& scenario, const Vocabulary& vocab) {
  require(!prompt.scenario.has_value(), ErrorKind::Contract,
          "prompt already carries scenario '" + prompt.scenario.value_or("") + "'");
  const std::string s = lowercase(scenario);
  auto it = vocab.scenario_suffix.find(s);
  require(it != vocab.scenario_suffix.end(), ErrorKind::Vocabulary, "unknown scenario '" + scenario + "'");
  Prompt out = prompt;
  out.text += it->second;
  out.scenario = s;
  return out;
}

}  // namespace pg
