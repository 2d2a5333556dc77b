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

#include <nlohmann/json.hpp>

#include "backends/analytic_backend.hpp"
#include "backends/corpus.hpp"
#include "backends/toy_backend.hpp"
#include "common/image_io.hpp"
#include "guidance/guidance.hpp"
#include "oracles.hpp"
#include "pipeline/pipeline.hpp"
#include "schedule/sampler.hpp"

using namespace pg;

namespace {

GridMask mask_with(int h, int w, std::initializer_list<std::pair<int, int>> cells) {
  GridMask m(h, w, 0);
  for (auto [y, x] : cells) m.at(y, x) = 1;
  return m;
}

GridMask random_mask(int h, int w, std::uint64_t seed) {
  GridMask m(h, w, 0);
  std::mt19937_64 rng(seed);
  for (auto& v : m.data) v = rng() % 3 == 0;
  return m;
}

// Delegates to a backend but reports no input-gradient support.
class NoGradient final : public DenoiserBackend {
 public:
  explicit NoGradient(const DenoiserBackend& inner) : inner_(inner), caps_(inner.capabilities()) {
    caps_.input_gradients = false;
  }
  std::string name() const override { return "nograd"; }
  const Capabilities& capabilities() const override { return caps_; }
  const NoiseSchedule& schedule() const override { return inner_.schedule(); }
  Tensor3 predict_noise(const Tensor3& z, int t, const Condition& c) const override {
    return inner_.predict_noise(z, t, c);
  }
  FeatureRecord capture_features(const Tensor3& z, int t, const Condition& c) const override {
    return inner_.capture_features(z, t, c);
  }
  LossGradient loss_input_gradient(const Tensor3&, int, const Condition&, const LossSpec&) const override {
    fail(ErrorKind::Capability, "no input gradients");
  }

 private:
  const DenoiserBackend& inner_;
  Capabilities caps_;
};

struct Fixture {
  ToySample sample;
  RunConfig config;
  PrototypeStore store;
};

Fixture make_fixture(const DenoiserBackend& be, int n_t, std::uint64_t seed = 3) {
  Fixture f;
  f.sample = generate_toy_corpus({}, 1, seed, std::string("clean"))[0];
  f.config.guidance.n_t = n_t;
  f.config.n_b = 4;
  f.store = extract_image("probe", f.sample.image, f.sample.layout, be, f.config, Vocabulary{});
  return f;
}

Condition cond_of(const PrototypeStore& s) {
  Condition c;
  c.concepts = s.concepts;
  return c;
}

}  // namespace

TEST_SUITE("semantic alignment energy") {
  TEST_CASE("hand values") {
    const std::vector<double> p{1.0, 2.0, 3.0, 4.0}, q{1.0, 0.5, -3.0, 0.0};
    CHECK(g_sa(p, p, GridMask(2, 2, 1)) == 0.0);
    CHECK(g_sa(p, q, GridMask(2, 2, 0)) == 0.0);
    CHECK(g_sa(p, q, mask_with(2, 2, {{0, 1}})) == 2.25);
  }

  TEST_CASE("mask is shared by every component") {
    const std::vector<double> p{1, 2, 3, 4, 5, 6, 7, 8}, q(8, 0.0);
    // two components over a 2x2 grid, only cell (1,1) selected
    CHECK(g_sa(p, q, mask_with(2, 2, {{1, 1}})) == 16.0 + 64.0);
  }

  TEST_CASE("nonnegative and blind to changes outside the mask") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const GridMask m = random_mask(8, 16, trial);
      const Tensor3 a = oracle::random_tensor(4, 8, 16, 100 + trial), b = oracle::random_tensor(4, 8, 16, 200 + trial);
      const double base = g_sa(a.data, b.data, m);
      CHECK(base >= 0.0);
      Tensor3 c = a;
      for (std::size_t i = 0; i < c.size(); ++i)
        if (!m.data[i % 128]) c.data[i] += 10.0;
      CHECK(g_sa(c.data, b.data, m) == base);
    }
  }

  TEST_CASE("shape mismatch is a contract error") {
    CHECK_THROWS_AS(g_sa(std::vector<double>(8), std::vector<double>(6), GridMask(2, 2, 1)), Error);
    CHECK_THROWS_AS(g_sa(std::vector<double>(6), std::vector<double>(6), GridMask(2, 2, 1)), Error);
  }
}

TEST_SUITE("shallow alignment energy") {
  TEST_CASE("hand values") {
    const Tensor3 zi = oracle::random_tensor(3, 4, 4, 1);
    Tensor3 z = zi;
    z.at(0, 2, 3) += 3.0;
    z.at(1, 2, 3) -= 4.0;
    const GridMask ind = mask_with(4, 4, {{2, 3}});
    CHECK(g_sl(zi, zi, ind, 1) == 0.0);
    CHECK(g_sl(z, zi, ind, 1) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(g_sl(z, zi, ind, 2) == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(g_sl(z, zi, GridMask(4, 4, 0), 0) == 0.0);
  }

  TEST_CASE("nonzero indicator without objects is a contract error") {
    const Tensor3 z(3, 4, 4);
    try {
      g_sl(z, z, mask_with(4, 4, {{0, 0}}), 0);
      FAIL("expected contract error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Contract);
    }
    CHECK_THROWS_AS(g_sl_gradient(z, z, mask_with(4, 4, {{0, 0}}), 0), Error);
    CHECK_THROWS_AS(g_sl(z, Tensor3(3, 4, 5), GridMask(4, 4, 0), 1), Error);
  }

  TEST_CASE("closed-form gradient") {
    const Tensor3 zi = oracle::random_tensor(3, 4, 4, 2);
    for (double v : g_sl_gradient(zi, zi, GridMask(4, 4, 1), 1).data) CHECK(v == 0.0);
    Tensor3 z = zi;
    z.at(2, 1, 1) += 0.75;
    const Tensor3 g = g_sl_gradient(z, zi, mask_with(4, 4, {{1, 1}}), 1);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(g.at(c, y, x) == doctest::Approx(c == 2 && y == 1 && x == 1 ? 1.5 : 0.0).epsilon(1e-12));
  }

  TEST_CASE("gradient agrees with central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Tensor3 z = oracle::random_tensor(3, 8, 16, seed), zi = oracle::random_tensor(3, 8, 16, seed + 10);
      const GridMask ind = random_mask(8, 16, seed);
      const int n = 1 + static_cast<int>(seed % 3);
      const Tensor3 g = g_sl_gradient(z, zi, ind, n);
      std::vector<std::size_t> coords(z.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
      const auto fd = oracle::central_differences(
          [&](const std::vector<double>& x) {
            Tensor3 zz = z;
            zz.data = x;
            return g_sl(zz, zi, ind, n);
          },
          z.data, coords, 1e-4);
      CHECK(relative_l2(g.data, fd) < 1e-6);
    }
  }

  TEST_CASE("scaling and locality") {
    const Tensor3 zi = oracle::random_tensor(3, 8, 16, 5), z = oracle::random_tensor(3, 8, 16, 6);
    const GridMask ind = random_mask(8, 16, 5);
    const double base = g_sl(z, zi, ind, 1);
    CHECK(base >= 0.0);
    Tensor3 scaled = zi;
    for (std::size_t i = 0; i < z.size(); ++i) scaled.data[i] = zi.data[i] + 3.0 * (z.data[i] - zi.data[i]);
    CHECK(g_sl(scaled, zi, ind, 1) == doctest::Approx(9.0 * base).epsilon(1e-12));
    CHECK(g_sl(z, zi, ind, 4) == doctest::Approx(base / 4.0).epsilon(1e-12));
    Tensor3 outside = z;
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 128; ++p)
        if (!ind.data[p]) outside.data[c * 128 + p] += 5.0;
    CHECK(g_sl(outside, zi, ind, 1) == base);
  }

  TEST_CASE("latent indicator follows the grid rule") {
    Layout l;
    LayoutBox b;
    b.word = "car";
    b.left = 3;
    b.top = 2;
    b.right = 9;
    b.bottom = 5;
    l.boxes.push_back(b);
    const GridMask full = latent_indicator(l, 64, 32, 32, 64);
    int on = 0;
    for (auto v : full.data) on += v;
    CHECK(on == 6 * 3);
    const GridMask half = latent_indicator(l, 64, 32, 16, 32);
    CHECK(half.at(1, 1) == 1);
    CHECK(half.at(2, 4) == 1);
    CHECK(half.at(3, 4) == 0);
    CHECK_THROWS_AS(latent_indicator(l, 64, 32, 10, 20), Error);
  }
}

TEST_SUITE("step guidance") {
  TEST_CASE("gate and missing entries") {
    const AnalyticBackend be(AnalyticConfig{}, NoiseSchedule(1000, 1));
    auto f = make_fixture(be, 10);
    const auto state = make_guidance_state(f.store, f.sample.layout, be.capabilities(), 0.3, MaskSource::Updated,
                                           true, true, false);
    const Tensor3 z = f.store.latents.at(10);
    GuidanceConfig cfg = f.config.guidance;
    try {
      assemble_step_guidance(z, f.store.n_p + 1, 0, state, be, cond_of(f.store), cfg);
      FAIL("expected contract error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Contract);
    }
    f.store.entries.erase(2);
    try {
      assemble_step_guidance(z, 2, 0, state, be, cond_of(f.store), cfg);
      FAIL("expected store error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Store);
    }
  }

  TEST_CASE("both gradients vanish at the inversion trajectory") {
    const AnalyticBackend be(AnalyticConfig{}, NoiseSchedule(1000, 1));
    const auto f = make_fixture(be, 10);
    const auto state = make_guidance_state(f.store, f.sample.layout, be.capabilities(), 0.3, MaskSource::Updated,
                                           true, true, false);
    const NoiseSchedule s = be.schedule().with_ddim_steps(10);
    for (int k = 1; k <= f.store.n_p; ++k) {
      const int j = latent_index_for_step(k, 10);
      const auto r = assemble_step_guidance(f.store.latents.at(j), k, s.timestep(j), state, be, cond_of(f.store),
                                            f.config.guidance);
      CHECK(r.log.g_sl == 0.0);
      CHECK(r.log.g_sa < 1e-20);
      CHECK(l2_norm(r.grads.grad_sl.data) == 0.0);
      CHECK(l2_norm(r.grads.grad_sa.data) < 1e-9);
    }
  }

  TEST_CASE("backend without gradients keeps g_sl and logs g_sa") {
    const AnalyticBackend inner(AnalyticConfig{}, NoiseSchedule(1000, 1));
    const NoGradient be(inner);
    const auto f = make_fixture(inner, 10);
    const auto state = make_guidance_state(f.store, f.sample.layout, be.capabilities(), 0.3, MaskSource::Updated,
                                           true, true, false);
    const Tensor3 z = oracle::random_tensor(3, 32, 64, 1);
    const auto r = assemble_step_guidance(z, 1, 999, state, be, cond_of(f.store), f.config.guidance);
    CHECK_FALSE(r.log.sa_gradient);
    CHECK(r.grads.grad_sa.size() == 0);
    CHECK(r.log.g_sa > 0.0);
    CHECK(r.grads.grad_sl.size() == z.size());
  }

  TEST_CASE("loss log is one JSON object") {
    StepLog log;
    log.k = 3;
    log.t = 899;
    log.g_sa = 1.5;
    log.g_sl = 0.25;
    const auto j = nlohmann::json::parse(format_step_log(log));
    CHECK(j["step"] == 3);
    CHECK(j["t"] == 899);
    CHECK(j["g_sa"] == 1.5);
    CHECK(j["g_sl"] == 0.25);
    CHECK(format_step_log(log).find('\n') == std::string::npos);
  }

  TEST_CASE("one guided step decreases the energies on the toy backend") {
    ToyUNet net(ToyUNetConfig{});
    net.initialize(17);
    const ToyBackend be(std::move(net), NoiseSchedule(1000, 1), Precision::Float64);
    const auto f = make_fixture(be, 10, 8);
    const auto state = make_guidance_state(f.store, f.sample.layout, be.capabilities(), 0.3, MaskSource::Updated,
                                           true, true, false);
    const NoiseSchedule s = be.schedule().with_ddim_steps(10);
    const Condition cond = cond_of(f.store);
    std::mt19937_64 rng(5);
    int better = 0;
    const int probes = 50;
    for (int i = 0; i < probes; ++i) {
      const int k = 1 + static_cast<int>(rng() % f.store.n_p);
      const int j = latent_index_for_step(k, 10);
      const int t = s.timestep(j);
      Tensor3 z = f.store.latents.at(j);
      const Tensor3 noise = oracle::random_tensor(3, 32, 64, 1000 + i, 0.3);
      for (std::size_t p = 0; p < z.size(); ++p) z.data[p] += noise.data[p];

      GuidanceConfig cfg = f.config.guidance;
      const auto here = assemble_step_guidance(z, k, t, state, be, cond, cfg);
      // weights sized so the guided displacement is small against the latent
      const double b = std::abs(reverse_coefficients(j, s).b);
      const double gn = std::max(here.log.grad_sa_norm + here.log.grad_sl_norm, 1e-12);
      cfg.w_sa = cfg.w_sl = 1e-3 * l2_norm(z.data) / (b * gn);
      const Tensor3 plain = guided_epsilon(be, z, t, cond, {}, {}, cfg);
      const Tensor3 guided = guided_epsilon(be, z, t, cond, here.grads.grad_sa, here.grads.grad_sl, cfg);
      const Tensor3 zu = ddim_step(z, plain, j, s, Direction::Reverse);
      const Tensor3 zg = ddim_step(z, guided, j, s, Direction::Reverse);
      const auto eu = assemble_step_guidance(zu, k, t, state, be, cond, cfg).log;
      const auto eg = assemble_step_guidance(zg, k, t, state, be, cond, cfg).log;
      better += (eg.g_sa + eg.g_sl) < (eu.g_sa + eu.g_sl);
    }
    INFO(better << " of " << probes << " probes decreased");
    CHECK(better >= 45);
  }
}
