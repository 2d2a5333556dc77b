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

#include "pipeline/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "backends/checkpoint.hpp"

namespace pg {

namespace {

const std::vector<std::pair<Mode, std::string>> kModes = {
    {Mode::Full, "full"},       {Mode::PromptOnly, "prompt-only"}, {Mode::Off, "off"},
    {Mode::SaOnly, "sa-only"},  {Mode::SaRaw, "sa-raw"},           {Mode::SlOnly, "sl-only"}};

const std::vector<std::pair<Mode, std::string>> kVariants = {
    {Mode::PromptOnly, "prompt-only"}, {Mode::SaRaw, "+g_sa"}, {Mode::SaOnly, "+g_sa+prototypes"}, {Mode::Full, "full"}};

template <typename V>
V number(const std::string& key, const std::string& text) {
  V v{};
  const std::string t = trim(text);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && p == t.data() + t.size() && !t.empty(), ErrorKind::Configuration,
          "config " + key + ": cannot parse '" + text + "'");
  return v;
}

bool boolean(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  fail(ErrorKind::Configuration, "config " + key + ": expected a boolean, got '" + text + "'");
}

}  // namespace

Mode parse_mode(const std::string& s) {
  for (const auto& [m, n] : kModes)
    if (n == s) return m;
  fail(ErrorKind::Configuration, "unknown mode '" + s + "' (full, prompt-only, off, sa-only, sa-raw, sl-only)");
}

std::string mode_name(Mode m) {
  for (const auto& [k, n] : kModes)
    if (k == m) return n;
  return "?";
}

Mode parse_variant(const std::string& s) {
  for (const auto& [m, n] : kVariants)
    if (n == s) return m;
  return parse_mode(s);
}

std::string variant_name(Mode m) {
  for (const auto& [k, n] : kVariants)
    if (k == m) return n;
  return mode_name(m);
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "backend", "images", "labels",   "generated", "stores",     "corpus",      "scenario",   "out",
      "vocabulary", "steps", "np",     "s",         "sigma",      "tau",         "wsa",        "wsl",
      "tau_sweep", "seed",  "workers", "mode",      "nb",         "refit_pca",   "variants",   "refine",
      "count",   "max_objects", "iterations", "batch", "lr",      "holdout"};
  return keys;
}

RunConfig resolve_run_config(const KeyValueConfig& kv) {
  RunConfig c;
  const auto& keys = known_config_keys();
  for (const auto& [k, v] : kv.entries()) {
    require(std::find(keys.begin(), keys.end(), k) != keys.end(), ErrorKind::Configuration,
            "unknown config key '" + k + "'");
    if (k == "backend") c.backend = trim(v);
    else if (k == "images") c.images = trim(v);
    else if (k == "labels") c.labels = trim(v);
    else if (k == "generated") c.generated = trim(v);
    else if (k == "stores") c.stores = trim(v);
    else if (k == "corpus") c.corpus = trim(v);
    else if (k == "scenario") c.scenario = trim(v);
    else if (k == "out") c.out = trim(v);
    else if (k == "vocabulary") c.vocabulary = trim(v);
    else if (k == "steps") c.guidance.n_t = number<int>(k, v);
    else if (k == "np") c.guidance.n_p = number<int>(k, v);
    else if (k == "s") c.guidance.s = number<double>(k, v);
    else if (k == "sigma") c.guidance.sigma = number<double>(k, v);
    else if (k == "tau") c.guidance.tau = number<double>(k, v);
    else if (k == "wsa") c.guidance.w_sa = number<double>(k, v);
    else if (k == "wsl") c.guidance.w_sl = number<double>(k, v);
    else if (k == "seed") c.guidance.seed = number<std::uint64_t>(k, v);
    else if (k == "workers") c.workers = number<int>(k, v);
    else if (k == "mode") c.mode = parse_mode(trim(v));
    else if (k == "nb") c.n_b = number<int>(k, v);
    else if (k == "refit_pca") c.refit_pca = boolean(k, v);
    else if (k == "refine") c.refine_iterations = number<int>(k, v);
    else if (k == "count") c.count = number<int>(k, v);
    else if (k == "max_objects") c.max_objects = number<int>(k, v);
    else if (k == "iterations") c.iterations = number<int>(k, v);
    else if (k == "batch") c.batch = number<int>(k, v);
    else if (k == "lr") c.learning_rate = number<double>(k, v);
    else if (k == "holdout") c.holdout = number<double>(k, v);
    else if (k == "tau_sweep") {
      c.tau_sweep.clear();
      for (const auto& t : split_list(v)) c.tau_sweep.push_back(number<double>(k, t));
    } else if (k == "variants") {
      c.variants.clear();
      for (const auto& t : split_list(v)) c.variants.push_back(parse_variant(t));
    }
  }
  try {
    c.guidance.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Configuration, e.what());
  }
  for (double t : c.tau_sweep)
    require(t >= 0.0 && t < 1.0, ErrorKind::Configuration, "tau sweep values must be in [0,1)");
  require(c.n_b >= 1, ErrorKind::Configuration, "nb must be positive");
  require(c.workers >= 1, ErrorKind::Configuration, "workers must be positive");
  require(c.count >= 1, ErrorKind::Configuration, "count must be positive");
  require(c.iterations >= 0 && c.batch >= 1 && c.learning_rate > 0.0, ErrorKind::Configuration,
          "training settings out of range");
  require(c.holdout >= 0.0 && c.holdout < 1.0, ErrorKind::Configuration, "holdout must be in [0,1)");
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["backend"] = backend;
  j["images"] = images;
  j["labels"] = labels;
  j["generated"] = generated;
  j["stores"] = stores;
  j["corpus"] = corpus;
  j["scenario"] = scenario;
  j["out"] = out;
  j["vocabulary"] = vocabulary;
  j["steps"] = guidance.n_t;
  j["np"] = guidance.guided_steps();
  j["s"] = guidance.s;
  j["sigma"] = guidance.sigma;
  j["tau"] = guidance.tau;
  j["wsa"] = guidance.w_sa;
  j["wsl"] = guidance.w_sl;
  j["seed"] = guidance.seed;
  j["nb"] = n_b;
  j["mode"] = mode_name(mode);
  j["refit_pca"] = refit_pca;
  j["tau_sweep"] = tau_sweep;
  std::vector<std::string> v;
  for (Mode m : variants) v.push_back(variant_name(m));
  j["variants"] = v;
  j["workers"] = workers;
  j["refine"] = refine_iterations;
  j["count"] = count;
  j["max_objects"] = max_objects;
  j["iterations"] = iterations;
  j["batch"] = batch;
  j["lr"] = learning_rate;
  j["holdout"] = holdout;
  return j;
}

std::string RunConfig::hash() const {
  // Only the settings that shape stage-1 output.
  const nlohmann::json j{{"backend", backend}, {"steps", guidance.n_t}, {"np", guidance.guided_steps()},
                         {"sigma", guidance.sigma}, {"tau", guidance.tau}, {"nb", n_b},
                         {"refine", refine_iterations}};
  const std::string s = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a_bytes(s.data(), s.size())));
  return buf;
}

}  // namespace pg
