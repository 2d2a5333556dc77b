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

#include <cmath>
#include <random>

#include "metrics/metrics.hpp"
#include "oracles.hpp"

using namespace pg;

namespace {

Tensor3 random_image(int h, int w, std::uint64_t seed) {
  Tensor3 t(3, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  for (double& v : t.data) v = std::round(u(rng));
  return t;
}

GridMask rect(int h, int w, int x0, int y0, int x1, int y1) {
  GridMask m(h, w, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

GridMask random_region(int h, int w, std::uint64_t seed) {
  GridMask m(h, w, 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 3; ++i) {
    const int x0 = rng() % (w - 8), y0 = rng() % (h - 8);
    const int x1 = std::min<int>(w, x0 + 8 + rng() % 20), y1 = std::min<int>(h, y0 + 8 + rng() % 12);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  }
  return m;
}

RgbImage random_rgb(int w, int h, std::uint64_t seed) {
  RgbImage img(w, h);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

Layout one_box(double l, double t, double r, double b) {
  Layout lay;
  LayoutBox x;
  x.type = "Car";
  x.word = "car";
  x.left = l;
  x.top = t;
  x.right = r;
  x.bottom = b;
  lay.boxes.push_back(x);
  return lay;
}

}  // namespace

TEST_SUITE("psnr") {
  TEST_CASE("identical regions give the infinite sentinel") {
    const Tensor3 a = random_image(32, 64, 1);
    const Psnr p = region_psnr(a, a, GridMask(32, 64, 1), 255.0);
    CHECK(p.infinite);
  }

  TEST_CASE("uniform offset of 16") {
    Tensor3 a(3, 32, 64, 100.0), b(3, 32, 64, 116.0);
    const Psnr p = region_psnr(a, b, rect(32, 64, 5, 5, 20, 20), 255.0);
    REQUIRE_FALSE(p.infinite);
    CHECK(p.db == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-12));
    CHECK(p.db == doctest::Approx(24.048).epsilon(1e-4));
  }

  TEST_CASE("matches a direct-summation oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor3 a = random_image(32, 64, seed), b = random_image(32, 64, seed + 100);
      const GridMask r = random_region(32, 64, seed);
      CHECK(std::abs(region_psnr(a, b, r, 255.0).db - oracle::psnr(a, b, r, 255.0)) < 1e-9);
    }
  }

  TEST_CASE("symmetric") {
    const Tensor3 a = random_image(32, 64, 3), b = random_image(32, 64, 4);
    const GridMask r = random_region(32, 64, 3);
    CHECK(region_psnr(a, b, r, 255.0).db == region_psnr(b, a, r, 255.0).db);
  }

  TEST_CASE("strictly decreases with noise amplitude") {
    const Tensor3 a = random_image(32, 64, 5);
    const Tensor3 noise = oracle::random_tensor(3, 32, 64, 6);
    const GridMask r = random_region(32, 64, 5);
    double last = std::numeric_limits<double>::infinity();
    for (double amp : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      Tensor3 b = a;
      for (std::size_t i = 0; i < b.size(); ++i) b.data[i] += amp * noise.data[i];
      const double db = region_psnr(a, b, r, 255.0).db;
      CHECK(db < last);
      last = db;
    }
  }

  TEST_CASE("whole-image MSE decomposes over regions") {
    const Tensor3 a = random_image(32, 64, 7), b = random_image(32, 64, 8);
    const GridMask r = random_region(32, 64, 7);
    GridMask all(32, 64, 1), rest(32, 64, 0);
    std::size_t n_in = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      rest.data[i] = !r.data[i];
      n_in += r.data[i];
    }
    auto mse = [&](const GridMask& m) { return 255.0 * 255.0 / std::pow(10.0, region_psnr(a, b, m, 255.0).db / 10.0); };
    const double whole = mse(all);
    const double combined = (n_in * mse(r) + (r.size() - n_in) * mse(rest)) / r.size();
    CHECK(std::abs(whole - combined) < 1e-9 * whole);
  }

  TEST_CASE("empty region is a region error") {
    const Tensor3 a = random_image(8, 8, 1);
    try {
      region_psnr(a, a, GridMask(8, 8, 0), 255.0);
      FAIL("expected region error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Region);
    }
  }
}

TEST_SUITE("ssim") {
  TEST_CASE("identical images give one") {
    const Tensor3 a = random_image(32, 64, 1);
    CHECK(region_ssim(a, a, random_region(32, 64, 1), 255.0) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("noise against a constant has no structure") {
    const Tensor3 a = random_image(32, 64, 2);
    const Tensor3 b(3, 32, 64, 128.0);
    CHECK(std::abs(region_ssim(a, b, GridMask(32, 64, 1), 255.0)) < 0.1);
  }

  TEST_CASE("matches a per-window oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor3 a = random_image(32, 64, seed);
      Tensor3 b = a;
      const Tensor3 n = oracle::random_tensor(3, 32, 64, seed + 50, 30.0);
      for (std::size_t i = 0; i < b.size(); ++i) b.data[i] += n.data[i];
      const GridMask r = random_region(32, 64, seed);
      CHECK(std::abs(region_ssim(a, b, r, 255.0) - oracle::ssim(a, b, r, 255.0)) < 1e-6);
    }
  }

  TEST_CASE("symmetric") {
    const Tensor3 a = random_image(32, 64, 3), b = random_image(32, 64, 4);
    const GridMask r = random_region(32, 64, 9);
    CHECK(region_ssim(a, b, r, 255.0) == doctest::Approx(region_ssim(b, a, r, 255.0)).epsilon(1e-12));
  }

  TEST_CASE("region smaller than the window is a region error") {
    const Tensor3 a = random_image(32, 64, 3);
    try {
      region_ssim(a, a, rect(32, 64, 10, 10, 16, 30), 255.0);
      FAIL("expected region error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Region);
    }
    CHECK_NOTHROW(region_ssim(a, a, rect(32, 64, 10, 10, 17, 17), 255.0));
  }
}

TEST_SUITE("evaluate pair") {
  TEST_CASE("identical images are perfect everywhere") {
    const RgbImage img = random_rgb(64, 32, 1);
    const auto r = evaluate_pair(img, img, one_box(10, 5, 40, 25));
    REQUIRE(r.psnr_object);
    CHECK(r.psnr_object->infinite);
    CHECK(r.psnr_background->infinite);
    CHECK(*r.ssim_object == doctest::Approx(1.0));
    CHECK(*r.ssim_background == doctest::Approx(1.0));
    CHECK(r.object_pixels == 30u * 20u);
    CHECK(r.object_pixels + r.background_pixels == 64u * 32u);
  }

  TEST_CASE("changes outside the boxes only hurt the background") {
    const RgbImage img = random_rgb(64, 32, 2);
    RgbImage gen = img;
    const Layout lay = one_box(10, 5, 40, 25);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x)
        if (!(x >= 10 && x < 40 && y >= 5 && y < 25))
          for (int c = 0; c < 3; ++c) gen.at(y, x, c) = static_cast<std::uint8_t>(255 - img.at(y, x, c));
    const auto r = evaluate_pair(img, gen, lay);
    CHECK(r.psnr_object->infinite);
    REQUIRE_FALSE(r.psnr_background->infinite);
    CHECK(r.psnr_background->db < 20.0);
    CHECK(*r.ssim_background < *r.ssim_object);
  }

  TEST_CASE("empty layout reports only the background") {
    const RgbImage a = random_rgb(64, 32, 3), b = random_rgb(64, 32, 4);
    const auto r = evaluate_pair(a, b, Layout{});
    CHECK_FALSE(r.psnr_object.has_value());
    CHECK_FALSE(r.ssim_object.has_value());
    CHECK(r.background_pixels == 64u * 32u);
    CHECK(r.psnr_background.has_value());
  }

  TEST_CASE("tiny boxes keep PSNR and drop SSIM") {
    const RgbImage a = random_rgb(64, 32, 5), b = random_rgb(64, 32, 6);
    const auto r = evaluate_pair(a, b, one_box(10, 10, 13, 12));
    CHECK(r.psnr_object.has_value());
    CHECK_FALSE(r.ssim_object.has_value());
  }

  TEST_CASE("json and summary") {
    const RgbImage a = random_rgb(64, 32, 7), b = random_rgb(64, 32, 8);
    const auto same = evaluate_pair(a, a, one_box(10, 5, 40, 25));
    const auto diff = evaluate_pair(a, b, one_box(10, 5, 40, 25));
    CHECK(to_json(Psnr::inf()) == "inf");
    const auto j = to_json(diff);
    CHECK(j["psnr_object"].is_number());
    const auto s = summarize_reports({{"x", "full", "snow", same}, {"y", "full", "snow", diff}});
    CHECK(s.dump().find("full") != std::string::npos);
    const auto m = mean_finite_psnr({same.psnr_object, diff.psnr_object, std::nullopt});
    REQUIRE(m.has_value());
    CHECK(*m == doctest::Approx(diff.psnr_object->db));
    CHECK_FALSE(mean_finite_psnr({same.psnr_object}).has_value());
  }
}
