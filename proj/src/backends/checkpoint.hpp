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

#include <nlohmann/json.hpp>

#include "backends/toy_backend.hpp"

namespace pg {

// Versioned binary container:
//   "PGCK" | u32 version | u64 manifest bytes | manifest JSON | u64 count | float32[count]
// The manifest carries the architecture and its hash, the schedule, the
// embedding vocabulary, the parameter table and a payload checksum.
void save_checkpoint(const std::string& path, const ToyUNet& net, const NoiseSchedule& schedule,
                     const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<ToyBackend> load_checkpoint(const std::string& path, Precision precision = Precision::Float32);
nlohmann::json read_checkpoint_manifest(const std::string& path);

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull);

}  // namespace pg
