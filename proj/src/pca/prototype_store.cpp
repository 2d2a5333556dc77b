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

#include "pca/prototype_store.hpp"

#include <cstring>
#include <fstream>

namespace pg {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'P', 'S'};

class Writer {
 public:
  void doubles(const std::vector<double>& v) { data_.insert(data_.end(), v.begin(), v.end()); }
  void bytes(const std::vector<std::uint8_t>& v) { data_.insert(data_.end(), v.begin(), v.end()); }
  const std::vector<double>& data() const { return data_; }

 private:
  std::vector<double> data_;
};

class Reader {
 public:
  Reader(std::vector<double> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
  std::vector<double> doubles(std::size_t n) {
    require(pos_ + n <= data_.size(), ErrorKind::Store, path_ + ": payload shorter than manifest");
    std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    auto d = doubles(n);
    return std::vector<std::uint8_t>(d.begin(), d.end());
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::vector<double> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void PrototypeStore::validate() const {
  require(n_p >= 0 && n_p <= n_t, ErrorKind::Store, "prototype store " + stem + ": N_p outside [0, N_t]");
  require(static_cast<int>(entries.size()) == n_p, ErrorKind::Store,
          "prototype store " + stem + ": holds " + std::to_string(entries.size()) + " steps, expected " +
              std::to_string(n_p));
  for (int k = 1; k <= n_p; ++k) {
    auto it = entries.find(k);
    require(it != entries.end(), ErrorKind::Store, "prototype store " + stem + ": missing step " + std::to_string(k));
    require(it->second.mask.same_shape(grid_height, grid_width), ErrorKind::Store,
            "prototype store " + stem + ": mask shape differs from the grid at step " + std::to_string(k));
    require(it->second.pcs.n_components == n_b, ErrorKind::Store,
            "prototype store " + stem + ": component count differs at step " + std::to_string(k));
  }
  require(raw_mask.same_shape(grid_height, grid_width) && updated_mask.same_shape(grid_height, grid_width),
          ErrorKind::Store, "prototype store " + stem + ": concept mask shape differs from the grid");
}

void save_prototype_store(const std::string& path, const PrototypeStore& store) {
  store.validate();
  nlohmann::json m;
  m["format"] = "protoguide-prototype-store";
  m["version"] = PrototypeStore::kVersion;
  m["stem"] = store.stem;
  m["prompt"] = store.prompt;
  m["concepts"] = store.concepts;
  m["labels"] = store.labels;
  m["image_size"] = {store.image_width, store.image_height};
  m["downsample"] = store.downsample;
  m["n_t"] = store.n_t;
  m["n_p"] = store.n_p;
  m["n_b"] = store.n_b;
  m["grid"] = {store.grid_height, store.grid_width};
  m["tau"] = store.tau;
  m["sigma"] = store.sigma;
  m["mask_constant"] = store.mask_constant;
  m["config"] = store.config;
  m["config_hash"] = store.config_hash;

  Writer w;
  w.doubles(store.raw_mask.data);
  w.doubles(store.updated_mask.data);
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& [k, e] : store.entries) {
    const auto& pc = e.pcs;
    steps.push_back({{"step", k}, {"channels", pc.channels}, {"degenerate", pc.degenerate}, {"pca_step", pc.step}});
    w.doubles(pc.mean);
    w.doubles(pc.basis);
    w.doubles(pc.eigenvalues);
    w.bytes(pc.active);
    w.doubles(pc.components);
    w.doubles(e.prototype);
    w.bytes(e.mask.data);
  }
  m["steps"] = steps;
  nlohmann::json lat = nlohmann::json::array();
  for (const auto& [j, z] : store.latents) {
    lat.push_back({{"index", j}, {"shape", {z.channels, z.height, z.width}}});
    w.doubles(z.data);
  }
  m["latents"] = lat;
  m["payload_doubles"] = w.data().size();
  const std::string text = m.dump(1);

  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write prototype store " + path);
  f.write(kMagic, 4);
  const std::uint32_t version = PrototypeStore::kVersion;
  const std::uint64_t len = text.size();
  f.write(reinterpret_cast<const char*>(&version), sizeof version);
  f.write(reinterpret_cast<const char*>(&len), sizeof len);
  f.write(text.data(), static_cast<std::streamsize>(len));
  f.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size() * sizeof(double)));
  require(static_cast<bool>(f), ErrorKind::Io, "failed writing prototype store " + path);
}

PrototypeStore load_prototype_store(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Store, "cannot open prototype store " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  f.read(reinterpret_cast<char*>(&len), sizeof len);
  require(static_cast<bool>(f) && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::Store,
          path + " is not a prototype store");
  require(version == PrototypeStore::kVersion, ErrorKind::Store,
          path + ": unsupported store version " + std::to_string(version));
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(f), ErrorKind::Store, path + ": truncated manifest");

  PrototypeStore s;
  try {
    const auto m = nlohmann::json::parse(text);
    const std::size_t n_payload = m.at("payload_doubles").get<std::size_t>();
    std::vector<double> payload(n_payload);
    f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n_payload * sizeof(double)));
    require(static_cast<bool>(f), ErrorKind::Store, path + ": truncated payload");
    Reader r(std::move(payload), path);

    s.stem = m.at("stem");
    s.prompt = m.at("prompt");
    s.concepts = m.at("concepts").get<std::vector<std::string>>();
    s.labels = m.at("labels");
    s.image_width = m.at("image_size")[0];
    s.image_height = m.at("image_size")[1];
    s.downsample = m.at("downsample");
    s.n_t = m.at("n_t");
    s.n_p = m.at("n_p");
    s.n_b = m.at("n_b");
    s.grid_height = m.at("grid")[0];
    s.grid_width = m.at("grid")[1];
    s.tau = m.at("tau");
    s.sigma = m.at("sigma");
    s.mask_constant = m.at("mask_constant");
    s.config = m.at("config");
    s.config_hash = m.at("config_hash");
    const std::size_t L = static_cast<std::size_t>(s.grid_height) * s.grid_width;
    s.raw_mask = GridMap(s.grid_height, s.grid_width);
    s.raw_mask.data = r.doubles(L);
    s.updated_mask = GridMap(s.grid_height, s.grid_width);
    s.updated_mask.data = r.doubles(L);
    for (const auto& st : m.at("steps")) {
      PrototypeEntry e;
      auto& pc = e.pcs;
      pc.n_components = s.n_b;
      pc.channels = st.at("channels");
      pc.height = s.grid_height;
      pc.width = s.grid_width;
      pc.degenerate = st.at("degenerate");
      pc.step = st.at("pca_step");
      pc.mean = r.doubles(pc.channels);
      pc.basis = r.doubles(static_cast<std::size_t>(s.n_b) * pc.channels);
      pc.eigenvalues = r.doubles(s.n_b);
      pc.active = r.bytes(s.n_b);
      pc.components = r.doubles(s.n_b * L);
      e.prototype = r.doubles(s.n_b * L);
      e.mask = GridMask(s.grid_height, s.grid_width);
      e.mask.data = r.bytes(L);
      s.entries[st.at("step").get<int>()] = std::move(e);
    }
    for (const auto& lt : m.at("latents")) {
      const auto& sh = lt.at("shape");
      Tensor3 z(sh[0], sh[1], sh[2]);
      z.data = r.doubles(z.size());
      s.latents[lt.at("index").get<int>()] = std::move(z);
    }
    require(r.done(), ErrorKind::Store, path + ": payload longer than manifest");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Store, path + ": bad manifest: " + e.what());
  }
  s.validate();
  return s;
}

}  // namespace pg
