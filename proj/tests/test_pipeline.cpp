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
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path r = [] {
    fs::path p = fs::temp_directory_path() / ("pg_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PG_CLI_PATH + "\" " + args + " >> \"" +
                          (root() / "cli.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Five-image corpus with its stage-1 stores, built once per process.
const fs::path& corpus() {
  static const fs::path c = [] {
    const fs::path d = root() / "corpus";
    REQUIRE(cli("gen-corpus --count 5 --seed 3 --scenario clean --out " + d.string()) == 0);
    REQUIRE(cli("stage1 --backend analytic --steps 10 --images " + (d / "images").string() + " --labels " +
                (d / "labels").string() + " --out " + (root() / "s1").string()) == 0);
    return d;
  }();
  return c;
}

std::string io(const fs::path& out) {
  return " --backend analytic --steps 10 --images " + (corpus() / "images").string() + " --labels " +
         (corpus() / "labels").string() + " --out " + out.string();
}

std::string stores() { return " --stores " + (root() / "s1" / "stores").string(); }

int count_files(const fs::path& dir, const std::string& ext) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ext) ++n;
  return n;
}

void copy_subset(const fs::path& to, int images, int labels) {
  fs::create_directories(to / "images");
  fs::create_directories(to / "labels");
  int i = 0;
  for (const auto& e : fs::directory_iterator(corpus() / "labels")) {
    const auto stem = e.path().stem().string();
    if (i < images) fs::copy_file(corpus() / "images" / (stem + ".png"), to / "images" / (stem + ".png"));
    if (i < labels) fs::copy_file(e.path(), to / "labels" / (stem + ".txt"));
    ++i;
  }
}

}  // namespace

TEST_CASE("stage1 writes one store per image and is byte-identical on rerun") {
  corpus();
  const fs::path a = root() / "s1" / "stores";
  CHECK(count_files(a, ".pgps") == 5);
  CHECK(count_files(root() / "s1" / "masks", ".pgm") == 15);
  CHECK(fs::exists(root() / "s1" / "stage1_summary.json"));
  CHECK(fs::exists(root() / "s1" / "run_config.json"));
  const fs::path again = root() / "s1b";
  REQUIRE(cli("stage1" + io(again)) == 0);
  for (const auto& e : fs::directory_iterator(a))
    CHECK(slurp(e.path()) == slurp(again / "stores" / e.path().filename()));
}

TEST_CASE("stage2 consumes stores and writes images, logs and summaries") {
  const fs::path out = root() / "s2";
  REQUIRE(cli("stage2 --scenario snow" + io(out) + stores()) == 0);
  CHECK(count_files(out / "images", ".png") == 5);
  CHECK(count_files(out / "logs", ".jsonl") == 5);
  for (const char* f : {"metrics.jsonl", "guidance_log.jsonl", "summary.json", "run_config.json"})
    CHECK(fs::exists(out / f));
  const auto s = load(out / "summary.json");
  CHECK(s.contains("mean_selected_cells"));
  CHECK(s["failures"].empty());
  const auto rc = load(out / "run_config.json");
  CHECK(rc["verb"] == "stage2");
  CHECK(rc["scenario"] == "snow");
  CHECK(rc.contains("config_hash"));
  std::istringstream lines(slurp(out / "metrics.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["method"] == "full");
    CHECK(j["scenario"] == "snow");
    ++n;
  }
  CHECK(n == 5);
}

TEST_CASE("prompt-only mode runs without stores") {
  const fs::path out = root() / "prompt";
  CHECK(cli("stage2 --mode prompt-only" + io(out)) == 0);
  CHECK(count_files(out / "images", ".png") == 5);
}

TEST_CASE("a missing store fails that image only") {
  const fs::path st = root() / "partial_stores";
  fs::create_directories(st);
  int i = 0;
  for (const auto& e : fs::directory_iterator(root() / "s1" / "stores"))
    if (i++ < 4) fs::copy_file(e.path(), st / e.path().filename());
  const fs::path out = root() / "missing";
  CHECK(cli("stage2" + io(out) + " --stores " + st.string()) == 1);
  CHECK(count_files(out / "images", ".png") == 4);
  CHECK(load(out / "summary.json")["failures"].size() == 1);
}

TEST_CASE("unpaired files are skipped with exit 1") {
  const fs::path d = root() / "unpaired";
  copy_subset(d, 3, 2);
  CHECK(cli("stage2 --mode prompt-only --backend analytic --steps 10 --images " + (d / "images").string() +
            " --labels " + (d / "labels").string() + " --out " + (d / "out").string()) == 1);
  CHECK(count_files(d / "out" / "images", ".png") == 2);
}

TEST_CASE("configuration errors exit with 2") {
  const std::string base = io(root() / "bad");
  CHECK(cli("stage2 --no-such-flag 1" + base) == 2);
  CHECK(cli("stage2 --tau 1.5" + base + stores()) == 2);
  CHECK(cli("stage2 --steps abc" + base) == 2);
  CHECK(cli("stage2 --mode sideways" + base) == 2);
  CHECK(cli("stage2 --scenario blizzard" + base + stores()) == 2);
  CHECK(cli("stage2 --backend /nonexistent.pgck" + base + stores()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("stage2 --mode full --backend analytic --out " + (root() / "bad2").string()) == 2);
}

TEST_CASE("flags override the config file") {
  const fs::path cfg = root() / "run.cfg";
  std::ofstream(cfg) << "# comment\nsteps = 12\ntau = 0.4\nscenario = fog\n";
  const fs::path out = root() / "cfg";
  REQUIRE(cli("stage2 --config " + cfg.string() + " --scenario snow" + io(out) + stores()) == 0);
  const auto rc = load(out / "run_config.json");
  CHECK(rc["tau"].get<double>() == doctest::Approx(0.4));
  CHECK(rc["scenario"] == "snow");
  CHECK(rc["steps"].get<int>() == 10);
}

TEST_CASE("an image with an empty layout is generated as background only") {
  const fs::path d = root() / "empty";
  copy_subset(d, 1, 1);
  const auto label = *fs::directory_iterator(d / "labels");
  std::ofstream(label.path(), std::ios::trunc);
  REQUIRE(cli("stage1 --backend analytic --steps 10 --images " + (d / "images").string() + " --labels " +
              (d / "labels").string() + " --out " + (d / "s1").string()) == 0);
  REQUIRE(cli("stage2 --backend analytic --steps 10 --images " + (d / "images").string() + " --labels " +
              (d / "labels").string() + " --stores " + (d / "s1" / "stores").string() + " --out " +
              (d / "s2").string()) == 0);
  std::istringstream lines(slurp(d / "s2" / "metrics.jsonl"));
  std::string line;
  REQUIRE(std::getline(lines, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j["psnr_object"].is_null());
  CHECK(!j["psnr_background"].is_null());
}

TEST_CASE("ablation rows are canonical and match standalone stage2") {
  const fs::path a = root() / "abl_a", b = root() / "abl_b";
  REQUIRE(cli("ablate --scenario snow --variants full,prompt-only,+g_sa" + io(a) + stores()) == 0);
  REQUIRE(cli("ablate --scenario snow --variants +g_sa,prompt-only,full" + io(b) + stores()) == 0);
  const auto ta = load(a / "ablation.json");
  REQUIRE(ta.size() == 3);
  CHECK(ta[0]["variant"] == "prompt-only");
  CHECK(ta[1]["variant"] == "+g_sa");
  CHECK(ta[2]["variant"] == "full");
  CHECK(ta == load(b / "ablation.json"));
  CHECK(slurp(a / "ablation.csv") == slurp(b / "ablation.csv"));
  for (const auto& e : fs::directory_iterator(root() / "s2" / "images"))
    CHECK(slurp(e.path()) == slurp(a / "full" / "images" / e.path().filename()));
}

TEST_CASE("evaluate scores a generated directory under its own name") {
  const fs::path out = root() / "eval";
  REQUIRE(cli("evaluate --generated " + (root() / "s2" / "images").string() + io(out)) == 0);
  const auto s = load(out / "summary.json");
  REQUIRE(s["summary"].size() == 1);
  CHECK(s["summary"][0]["method"] == "images");
  CHECK(s["summary"][0]["images"] == 5);
  CHECK(fs::exists(out / "run_config.json"));
  CHECK(cli("evaluate --generated " + (root() / "nope").string() + io(root() / "eval2")) != 0);
}

TEST_CASE("tau sweep writes one run per threshold") {
  const fs::path out = root() / "sweep";
  REQUIRE(cli("stage2 --tau-sweep 0.1,0.5" + io(out) + stores()) == 0);
  const auto sw = load(out / "tau_sweep.json");
  REQUIRE(sw.size() == 2);
  CHECK(sw[0]["tau"].get<double>() == doctest::Approx(0.1));
  CHECK(sw[0]["mean_selected_cells"].get<double>() >= sw[1]["mean_selected_cells"].get<double>());
  CHECK(fs::exists(out / "tau_0.1" / "summary.json"));
  CHECK(fs::exists(out / "tau_0.5" / "summary.json"));
  CHECK(fs::exists(out / "run_config.json"));
}

TEST_CASE("two workers produce the same images as one") {
  const fs::path out = root() / "workers";
  REQUIRE(cli("stage2 --scenario snow --workers 2" + io(out) + stores()) == 0);
  for (const auto& e : fs::directory_iterator(root() / "s2" / "images"))
    CHECK(slurp(e.path()) == slurp(out / "images" / e.path().filename()));
  CHECK(slurp(root() / "s2" / "metrics.jsonl") == slurp(out / "metrics.jsonl"));
}

TEST_CASE("a 50-step run with matching stores completes") {
  const fs::path s1 = root() / "s1_50", out = root() / "s2_50";
  const std::string in = " --backend analytic --steps 50 --images " + (corpus() / "images").string() +
                         " --labels " + (corpus() / "labels").string();
  REQUIRE(cli("stage1" + in + " --out " + s1.string()) == 0);
  REQUIRE(cli("stage2" + in + " --stores " + (s1 / "stores").string() + " --out " + out.string()) == 0);
  CHECK(count_files(out / "images", ".png") == 5);
  CHECK(load(out / "run_config.json")["steps"] == 50);
}
