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

#include "backends/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "common/error.hpp"
#include "layout/prompt.hpp"

namespace pg {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void fill_rect(RgbImage& img, int x0, int y0, int x1, int y1, const std::array<double, 3>& rgb) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp8(rgb[c]);
}

struct Placed {
  const ClassPrior* prior;
  int x, y, w, h;
  std::array<double, 3> color;
};

void draw_object(RgbImage& img, const Placed& p) {
  const auto dark = std::array<double, 3>{p.color[0] * 0.45, p.color[1] * 0.45, p.color[2] * 0.45};
  const std::array<double, 3> black{20, 20, 20};
  fill_rect(img, p.x, p.y, p.x + p.w, p.y + p.h, p.color);
  if (p.prior->word == "car") {
    // cabin window band and wheels
    fill_rect(img, p.x + 2, p.y + 1, p.x + p.w - 2, p.y + std::max(2, p.h / 3), dark);
    fill_rect(img, p.x + 1, p.y + p.h - 1, p.x + 3, p.y + p.h, black);
    fill_rect(img, p.x + p.w - 3, p.y + p.h - 1, p.x + p.w - 1, p.y + p.h, black);
  } else if (p.prior->word == "pedestrian") {
    fill_rect(img, p.x, p.y, p.x + p.w, p.y + 2, {225, 185, 150});
  } else {
    fill_rect(img, p.x, p.y + p.h - 2, p.x + p.w, p.y + p.h, black);
  }
}

}  // namespace

RgbImage render_scenario(const RgbImage& base, const std::string& scenario, const ToyCorpusSpec& spec,
                         std::mt19937_64& rng) {
  RgbImage out = base;
  if (scenario == "clean") return out;
  if (scenario == "snow") {
    std::bernoulli_distribution speck(spec.snow_density);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        if (speck(rng))
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = 255;
  } else if (scenario == "fog") {
    for (auto& v : out.pixels) v = clamp8(spec.fog_gray + (v - spec.fog_gray) * spec.fog_keep);
  } else if (scenario == "night") {
    for (auto& v : out.pixels) v = clamp8(v * spec.night_scale);
  } else if (scenario == "defocus") {
    const int r = spec.blur_radius;
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = std::clamp(y + dy, 0, out.height - 1);
              const int xx = std::clamp(x + dx, 0, out.width - 1);
              s += base.at(yy, xx, c);
            }
          out.at(y, x, c) = clamp8(s / ((2 * r + 1) * (2 * r + 1)));
        }
  } else {
    fail(ErrorKind::Vocabulary, "toy corpus: unknown scenario '" + scenario + "'");
  }
  return out;
}

std::vector<ToySample> generate_toy_corpus(const ToyCorpusSpec& spec, int n, std::uint64_t seed,
                                           const std::optional<std::string>& force_scenario,
                                           int max_objects_override) {
  require(n >= 1, ErrorKind::Parameter, "corpus size must be at least 1");
  require(spec.min_objects >= 1 && spec.min_objects <= spec.max_objects, ErrorKind::Parameter,
          "object count range must satisfy 1 <= min <= max");
  if (force_scenario) {
    require(std::find(spec.scenarios.begin(), spec.scenarios.end(), *force_scenario) != spec.scenarios.end(),
            ErrorKind::Vocabulary, "toy corpus: unknown scenario '" + *force_scenario + "'");
  }
  const int max_objects = max_objects_override > 0 ? std::min(max_objects_override, spec.max_objects) : spec.max_objects;
  Vocabulary vocab;
  vocab.classes.clear();
  for (const auto& c : spec.classes) vocab.classes.push_back(c.word);

  std::vector<double> class_w;
  for (const auto& c : spec.classes) class_w.push_back(c.frequency);

  std::vector<ToySample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i) + 1)));
    auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto jitter = [&](double amp) { return std::uniform_real_distribution<double>(-amp, amp)(rng); };

    RgbImage img(spec.width, spec.height);
    const int horizon = uni(spec.height * 11 / 32, spec.height * 15 / 32);
    const double sky_shift = jitter(20.0);
    for (int y = 0; y < horizon; ++y) {
      const double f = static_cast<double>(y) / std::max(1, horizon - 1);
      const std::array<double, 3> c{120 + 70 * f + sky_shift, 170 + 40 * f + sky_shift * 0.5, 230 + 5 * f};
      fill_rect(img, 0, y, spec.width, y + 1, c);
    }
    const double road = 100 + jitter(15.0);
    for (int y = horizon; y < spec.height; ++y) {
      const double f = static_cast<double>(y - horizon) / std::max(1, spec.height - horizon);
      fill_rect(img, 0, y, spec.width, y + 1, {road + 25 * f, road + 25 * f, road + 22 * f});
    }
    const int lane_y = horizon + (spec.height - horizon) * 3 / 5;
    const int phase = uni(0, 7);
    for (int x = phase; x < spec.width; x += 8) fill_rect(img, x, lane_y, x + 4, lane_y + 1, {230, 230, 210});

    const int count = uni(spec.min_objects, max_objects);
    std::discrete_distribution<int> pick(class_w.begin(), class_w.end());
    std::vector<Placed> placed;
    for (int k = 0; k < count; ++k) {
      const ClassPrior& pr = spec.classes[pick(rng)];
      Placed p{&pr, 0, 0, uni(pr.min_w, pr.max_w), uni(pr.min_h, pr.max_h), {}};
      p.w = std::min(p.w, spec.width);
      p.h = std::min(p.h, spec.height);
      const int bottom = uni(std::min(spec.height, std::max(p.h, horizon + 2)), spec.height);
      p.y = bottom - p.h;
      p.x = uni(0, spec.width - p.w);
      for (int c = 0; c < 3; ++c) p.color[c] = pr.color[c] + jitter(25.0);
      placed.push_back(p);
    }
    // Far objects first so nearer ones overdraw them.
    std::stable_sort(placed.begin(), placed.end(),
                     [](const Placed& a, const Placed& b) { return a.y + a.h < b.y + b.h; });
    for (const auto& p : placed) draw_object(img, p);

    ToySample s;
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06d", i);
    s.stem = stem;
    s.base = img;
    if (force_scenario) {
      s.scenario = *force_scenario;
    } else {
      std::discrete_distribution<int> sc(spec.scenario_weights.begin(), spec.scenario_weights.end());
      s.scenario = spec.scenarios[sc(rng)];
    }
    s.image = render_scenario(img, s.scenario, spec, rng);
    s.layout.image_width = spec.width;
    s.layout.image_height = spec.height;
    for (const auto& p : placed) {
      LayoutBox b;
      b.type = p.prior->type;
      b.word = p.prior->word;
      b.left = p.x;
      b.top = p.y;
      b.right = p.x + p.w;
      b.bottom = p.y + p.h;
      s.layout.boxes.push_back(std::move(b));
    }
    Prompt prompt = build_prompt(s.layout, vocab);
    if (s.scenario != "clean") prompt = apply_scenario(prompt, s.scenario);
    s.prompt = prompt.text;
    out.push_back(std::move(s));
  }
  return out;
}

void write_corpus(const std::string& dir, const std::vector<ToySample>& samples, std::uint64_t seed) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  nlohmann::json manifest;
  manifest["format"] = "protoguide-corpus";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["count"] = samples.size();
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : samples) {
    write_png((root / "images" / (s.stem + ".png")).string(), s.image);
    std::ofstream lf(root / "labels" / (s.stem + ".txt"));
    require(static_cast<bool>(lf), ErrorKind::Io, "cannot write labels for " + s.stem);
    lf << serialize_kitti_labels(s.layout);
    list.push_back({{"stem", s.stem}, {"scenario", s.scenario}, {"prompt", s.prompt}});
    if (!samples.empty()) {
      manifest["image_size"] = {s.image.width, s.image.height};
    }
  }
  manifest["samples"] = list;
  std::ofstream mf(root / "manifest.json");
  require(static_cast<bool>(mf), ErrorKind::Io, "cannot write corpus manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

std::vector<ToySample> load_corpus(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json");
  require(static_cast<bool>(mf), ErrorKind::Io, "no corpus manifest in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "corpus manifest: " + std::string(e.what()));
  }
  Vocabulary vocab;
  std::vector<ToySample> out;
  for (const auto& entry : manifest.at("samples")) {
    ToySample s;
    s.stem = entry.at("stem").get<std::string>();
    s.scenario = entry.at("scenario").get<std::string>();
    s.prompt = entry.at("prompt").get<std::string>();
    s.image = read_png((root / "images" / (s.stem + ".png")).string());
    s.layout = load_kitti_labels((root / "labels" / (s.stem + ".txt")).string(), s.image.width, s.image.height, vocab);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pg
