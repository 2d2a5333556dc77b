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

#include <filesystem>
#include <fstream>
#include <random>

#include "backends/corpus.hpp"
#include "layout/kitti.hpp"
#include "layout/prompt.hpp"

using namespace pg;

namespace {

const char* kCarLine = "Car 0.00 0 -1.58 100.00 150.00 300.00 250.00 1.50 1.60 4.00 2.00 1.50 30.00 -1.55";

void check_same(const Layout& a, const Layout& b) {
  REQUIRE(a.boxes.size() == b.boxes.size());
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    const auto &x = a.boxes[i], &y = b.boxes[i];
    CHECK(x.type == y.type);
    CHECK(x.word == y.word);
    CHECK(x.left == y.left);
    CHECK(x.top == y.top);
    CHECK(x.right == y.right);
    CHECK(x.bottom == y.bottom);
    CHECK(x.head == y.head);
    CHECK(x.tail == y.tail);
  }
}

std::string random_layout_text(std::mt19937_64& rng, int w, int h) {
  static const char* types[] = {"Car", "Pedestrian", "Cyclist", "car", "DontCare"};
  std::uniform_int_distribution<int> count(0, 6), type(0, 4), cents(0, 99), coin(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto fixed2 = [&](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::string text;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double l = std::floor(u(rng) * (w - 2)) + cents(rng) / 100.0;
    const double t = std::floor(u(rng) * (h - 2)) + cents(rng) / 100.0;
    const double r = std::min<double>(w, l + 0.5 + std::floor(u(rng) * 40));
    const double b = std::min<double>(h, t + 0.5 + std::floor(u(rng) * 30));
    text += types[type(rng)];
    text += " " + fixed2(u(rng)) + " " + std::to_string(cents(rng) % 4) + " " + fixed2(u(rng) * 6 - 3);
    text += " " + fixed2(l) + " " + fixed2(t) + " " + fixed2(r) + " " + fixed2(b);
    for (int k = 0; k < 7; ++k) text += " " + fixed2(u(rng) * 40 - 20);
    if (coin(rng)) text += " " + fixed2(u(rng));
    text += coin(rng) ? "\n" : "  \n";
  }
  return text;
}

}  // namespace

TEST_SUITE("kitti labels") {
  TEST_CASE("car line") {
    const Layout l = parse_kitti_labels(kCarLine, 1240, 368);
    REQUIRE(l.boxes.size() == 1);
    const auto& b = l.boxes[0];
    CHECK(b.type == "Car");
    CHECK(b.word == "car");
    CHECK(b.left == 100.0);
    CHECK(b.top == 150.0);
    CHECK(b.right == 300.0);
    CHECK(b.bottom == 250.0);
    CHECK(b.head == std::array<std::string, 3>{"0.00", "0", "-1.58"});
    CHECK(b.tail == std::vector<std::string>{"1.50", "1.60", "4.00", "2.00", "1.50", "30.00", "-1.55"});
  }

  TEST_CASE("dont-care and empty input") {
    CHECK(parse_kitti_labels("DontCare -1 -1 -10 0 0 10 10 -1 -1 -1 -1000 -1000 -1000 -10", 1240, 368).empty());
    CHECK(parse_kitti_labels("", 1240, 368).empty());
    CHECK(parse_kitti_labels("\n\n  \n", 1240, 368).empty());
    CHECK(serialize_kitti_labels(Layout{}).empty());
  }

  TEST_CASE("roundtrip of the car line") {
    const Layout a = parse_kitti_labels(kCarLine, 1240, 368);
    const std::string s = serialize_kitti_labels(a);
    CHECK(s == std::string(kCarLine) + "\n");
    check_same(parse_kitti_labels(s, 1240, 368), a);
  }

  TEST_CASE("passthrough fields keep their positions") {
    const char* line = "Pedestrian 0.37 2 1.25 10.50 20.25 30.75 60.00 1.7 0.6 0.8 -3.2 1.6 12.5 0.77 0.93";
    const Layout a = parse_kitti_labels(line, 100, 100);
    const std::string s = serialize_kitti_labels(a);
    std::istringstream in(s), ref(line);
    std::vector<std::string> got, want;
    for (std::string t; in >> t;) got.push_back(t);
    for (std::string t; ref >> t;) want.push_back(t);
    REQUIRE(got.size() == 16);
    for (int i : {0, 1, 2, 3, 8, 9, 10, 11, 12, 13, 14, 15}) CHECK(got[i] == want[i]);
    CHECK(got[4] == "10.50");
    CHECK(got[5] == "20.25");
  }

  TEST_CASE("200 randomized layouts roundtrip") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 200; ++i) {
      const int w = 64 + static_cast<int>(rng() % 1200), h = 32 + static_cast<int>(rng() % 400);
      const std::string text = random_layout_text(rng, w, h);
      const Layout a = parse_kitti_labels(text, w, h);
      const Layout b = parse_kitti_labels(serialize_kitti_labels(a), w, h);
      check_same(a, b);
      CHECK(serialize_kitti_labels(b) == serialize_kitti_labels(a));
    }
  }

  TEST_CASE("malformed lines report the line number") {
    const std::string good = std::string(kCarLine) + "\n";
    auto expect_parse = [](const std::string& text, const std::string& needle) {
      try {
        parse_kitti_labels(text, 1240, 368);
        FAIL("expected parse error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find(needle) != std::string::npos);
      }
    };
    expect_parse(good + "Car 0 0 0 1 2 3\n", "line 2");
    expect_parse(good + good + "Car 0.00 0 -1.58 x 150 300 250 1 1 1 1 1 1 1\n", "line 3");
    expect_parse("Car 0.00 0 -1.58 300 150 100 250 1 1 1 1 1 1 1\n", "inverted");
  }

  TEST_CASE("boxes are clamped to the image") {
    const Layout l = parse_kitti_labels("Car 0 0 0 -5.00 -3.00 80.00 40.00 1 1 1 1 1 1 1", 64, 32);
    REQUIRE(l.boxes.size() == 1);
    CHECK(l.boxes[0].left == 0.0);
    CHECK(l.boxes[0].top == 0.0);
    CHECK(l.boxes[0].right == 64.0);
    CHECK(l.boxes[0].bottom == 32.0);
  }

  TEST_CASE("vocabulary file") {
    const auto path = std::filesystem::temp_directory_path() / "pg_test_vocab.txt";
    {
      std::ofstream f(path);
      f << "vocabulary = car, truck\nscenario.snow = , in heavy snow\n";
    }
    const Vocabulary v = Vocabulary::from_file(path.string());
    CHECK(v.has_class("Truck"));
    CHECK_FALSE(v.has_class("pedestrian"));
    CHECK(v.scenario_suffix.size() == 1);
    const Layout l = parse_kitti_labels("Truck 0 0 0 1 1 5 5 1 1 1 1 1 1 1\nPedestrian 0 0 0 1 1 5 5 1 1 1 1 1 1 1", 64, 32, v);
    REQUIRE(l.boxes.size() == 1);
    CHECK(apply_scenario(build_prompt(l, v), "snow", v).text == "A photo of truck, in heavy snow");
  }

  TEST_CASE("generated corpus parses without errors") {
    const ToyCorpusSpec spec;
    const auto samples = generate_toy_corpus(spec, 2000, 7);
    int errors = 0;
    for (const auto& s : samples) {
      try {
        const Layout l = parse_kitti_labels(serialize_kitti_labels(s.layout), spec.width, spec.height);
        CHECK(l.boxes.size() == s.layout.boxes.size());
        CHECK(l.boxes.size() >= 1);
        CHECK(l.boxes.size() <= 4);
      } catch (const Error&) {
        ++errors;
      }
    }
    CHECK(errors == 0);
  }
}

TEST_SUITE("prompts") {
  Layout of_types(std::initializer_list<const char*> types) {
    std::string text;
    for (const char* t : types) text += std::string(t) + " 0 0 0 1 1 5 5 1 1 1 1 1 1 1\n";
    return parse_kitti_labels(text, 64, 32);
  }

  TEST_CASE("template examples") {
    CHECK(build_prompt(of_types({"Car", "Car", "Pedestrian"})).text == "A photo of car, car, and pedestrian");
    CHECK(build_prompt(of_types({"Cyclist"})).text == "A photo of cyclist");
    CHECK(build_prompt(of_types({})).text == "A photo of a road scene");
    const Prompt p = build_prompt(of_types({"Car", "Car", "Pedestrian"}));
    CHECK(p.concepts == std::vector<std::string>{"car", "car", "pedestrian"});
    CHECK_FALSE(p.scenario.has_value());
  }

  TEST_CASE("prompts are deterministic") {
    const Layout l = of_types({"Pedestrian", "Car", "Cyclist", "Car"});
    CHECK(build_prompt(l).text == build_prompt(l).text);
    CHECK(build_prompt(l).text == "A photo of pedestrian, car, cyclist, and car");
  }

  TEST_CASE("scenario suffixes") {
    const Prompt car = build_prompt(of_types({"Car"}));
    CHECK(apply_scenario(car, "snow").text == "A photo of car, in the snow");
    CHECK(apply_scenario(car, "night").text == "A photo of car, at night");
    CHECK(apply_scenario(car, "fog").text == "A photo of car, in the fog");
    CHECK(apply_scenario(car, "snow").scenario == std::optional<std::string>("snow"));
  }

  TEST_CASE("applying a scenario twice is an error") {
    const Prompt p = apply_scenario(build_prompt(of_types({"Car"})), "snow");
    CHECK_THROWS_AS(apply_scenario(p, "fog"), Error);
  }

  TEST_CASE("unknown words are vocabulary errors") {
    try {
      apply_scenario(build_prompt(of_types({"Car"})), "hail");
      FAIL("expected vocabulary error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Vocabulary);
    }
    Layout l;
    LayoutBox b;
    b.type = "Tram";
    b.word = "tram";
    l.boxes.push_back(b);
    try {
      build_prompt(l);
      FAIL("expected vocabulary error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Vocabulary);
    }
  }
}
