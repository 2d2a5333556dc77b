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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pg {

// Flat key=value configuration. '#' starts a comment, keys are trimmed, a
// value drops one leading space and its trailing whitespace, and later keys
// override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string dump() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

}  // namespace pg
