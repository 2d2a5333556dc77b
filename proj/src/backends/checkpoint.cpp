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

#include "backends/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace pg {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename V>
void put(std::ofstream& f, V v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::ifstream& f, const std::string& path) {
  V v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  require(static_cast<bool>(f), ErrorKind::Io, "truncated checkpoint " + path);
  return v;
}

nlohmann::json read_manifest(std::ifstream& f, const std::string& path) {
  char magic[4];
  f.read(magic, 4);
  require(static_cast<bool>(f) && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::Io, path + " is not a checkpoint");
  const auto version = get<std::uint32_t>(f, path);
  require(version == kVersion, ErrorKind::Io, path + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(f, path);
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(f), ErrorKind::Io, "truncated checkpoint manifest " + path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, path + ": bad manifest: " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const std::string& path, const ToyUNet& net, const NoiseSchedule& schedule,
                     const nlohmann::json& extra) {
  const auto& params = net.params();
  nlohmann::json m;
  m["format"] = "protoguide-checkpoint";
  m["version"] = kVersion;
  m["architecture"] = net.config().to_json();
  m["architecture_hash"] = net.config().architecture_hash();
  m["schedule"] = {{"train_steps", schedule.train_steps()},
                   {"beta_start", schedule.beta_spec().beta_start},
                   {"beta_end", schedule.beta_spec().beta_end}};
  m["vocabulary"] = {{"concepts", net.config().concepts}, {"scenarios", net.config().scenarios}};
  nlohmann::json table = nlohmann::json::array();
  for (const auto& s : net.slots()) table.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset}});
  m["params"] = table;
  m["param_count"] = params.size();
  m["payload_fnv1a"] = hex64(fnv1a_bytes(params.data(), params.size() * sizeof(float)));
  m["extra"] = extra;
  const std::string text = m.dump();

  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write checkpoint " + path);
  f.write(kMagic, 4);
  put<std::uint32_t>(f, kVersion);
  put<std::uint64_t>(f, text.size());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(f, params.size());
  f.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size() * sizeof(float)));
  require(static_cast<bool>(f), ErrorKind::Io, "failed writing checkpoint " + path);
}

nlohmann::json read_checkpoint_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open checkpoint " + path);
  return read_manifest(f, path);
}

std::unique_ptr<ToyBackend> load_checkpoint(const std::string& path, Precision precision) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open checkpoint " + path);
  const nlohmann::json m = read_manifest(f, path);
  ToyUNetConfig cfg = ToyUNetConfig::from_json(m.at("architecture"));
  require(cfg.architecture_hash() == m.at("architecture_hash").get<std::string>(), ErrorKind::Io,
          path + ": architecture hash mismatch");
  ToyUNet net(cfg);
  const auto count = get<std::uint64_t>(f, path);
  require(count == net.param_count(), ErrorKind::Io,
          path + ": parameter count " + std::to_string(count) + " does not match architecture (" +
              std::to_string(net.param_count()) + ")");
  f.read(reinterpret_cast<char*>(net.params().data()), static_cast<std::streamsize>(count * sizeof(float)));
  require(static_cast<bool>(f), ErrorKind::Io, "truncated checkpoint payload " + path);
  const std::string sum = hex64(fnv1a_bytes(net.params().data(), count * sizeof(float)));
  require(sum == m.at("payload_fnv1a").get<std::string>(), ErrorKind::Io, path + ": payload checksum mismatch");
  const auto& s = m.at("schedule");
  NoiseSchedule schedule(s.at("train_steps").get<int>(), 1,
                         BetaSpec{s.at("beta_start").get<double>(), s.at("beta_end").get<double>()});
  return std::make_unique<ToyBackend>(std::move(net), std::move(schedule), precision);
}

}  // namespace pg
