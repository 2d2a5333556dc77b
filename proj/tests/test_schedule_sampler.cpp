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

#include "backends/analytic_backend.hpp"
#include "common/image_io.hpp"
#include "backends/corpus.hpp"
#include "oracles.hpp"
#include "schedule/sampler.hpp"
#include "schedule/schedule.hpp"

using namespace pg;

namespace {

AnalyticBackend analytic() { return AnalyticBackend(AnalyticConfig{}, NoiseSchedule(1000, 1)); }

Tensor3 corpus_latent(int index) {
  const auto samples = generate_toy_corpus(ToyCorpusSpec{}, index + 1, 11);
  return to_latent(samples[index].image);
}

double variance(const Tensor3& t) {
  double m = 0.0;
  for (double v : t.data) m += v;
  m /= t.size();
  double s = 0.0;
  for (double v : t.data) s += (v - m) * (v - m);
  return s / t.size();
}

GuidanceConfig plain(int n_t) {
  GuidanceConfig c;
  c.n_t = n_t;
  c.guidance = false;
  return c;
}

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("schedule invariants") {
    const NoiseSchedule s(1000, 200);
    const auto& ab = s.alpha_bar();
    REQUIRE(ab.size() == 1000);
    CHECK(ab.front() >= 0.99);
    CHECK(ab.back() < 0.05);
    for (std::size_t i = 1; i < ab.size(); ++i) CHECK(ab[i] < ab[i - 1]);
    CHECK(s.alpha(0) == 1.0);
  }

  TEST_CASE("step index maps") {
    const NoiseSchedule full(1000, 1000);
    for (int k = 1; k <= 1000; ++k) CHECK(full.timestep(k) == k - 1);

    const NoiseSchedule s200(1000, 200);
    const auto& idx = s200.step_index();
    REQUIRE(idx.size() == 200);
    CHECK(idx.back() == 999);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] - idx[i - 1] == 5);

    const NoiseSchedule s50(1000, 50);
    CHECK(s50.ddim_steps() == 50);
    CHECK(s50.step_index().back() == 999);
    for (std::size_t i = 1; i < s50.step_index().size(); ++i)
      CHECK(s50.step_index()[i] > s50.step_index()[i - 1]);
  }

  TEST_CASE("schedule rejects more DDIM steps than train steps") {
    CHECK_THROWS_AS(NoiseSchedule(100, 101), Error);
    try {
      NoiseSchedule(100, 101);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parameter);
    }
    CHECK_THROWS_AS(NoiseSchedule(100, 0), Error);
  }

  TEST_CASE("equal alpha step is a fixed point in both directions") {
    const auto s = NoiseSchedule::from_alpha_bar({0.9, 0.9, 0.5}, 3);
    const Tensor3 z = oracle::random_tensor(2, 3, 4, 1);
    const Tensor3 eps = oracle::random_tensor(2, 3, 4, 2);
    // latent 1 and 2 both carry alpha 0.9
    REQUIRE(s.alpha(1) == s.alpha(2));
    const Tensor3 r = ddim_step(z, eps, 2, s, Direction::Reverse);
    const Tensor3 f = ddim_step(z, eps, 2, s, Direction::Forward);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(r.data[i] == doctest::Approx(z.data[i]).epsilon(1e-14));
      CHECK(f.data[i] == doctest::Approx(z.data[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("zero noise into the clean step rescales") {
    const NoiseSchedule s(1000, 10);
    const Tensor3 z = oracle::random_tensor(3, 2, 2, 3);
    const Tensor3 out = ddim_step(z, Tensor3(3, 2, 2), 1, s, Direction::Reverse);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(z.data[i] / std::sqrt(s.alpha(1))).epsilon(1e-14));
  }

  TEST_CASE("ddim step rejects out-of-range steps and shape mismatch") {
    const NoiseSchedule s(1000, 10);
    const Tensor3 z(1, 2, 2);
    for (int k : {0, 11, -1}) {
      try {
        ddim_step(z, z, k, s, Direction::Reverse);
        FAIL("expected a step error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Step);
      }
    }
    CHECK_THROWS_AS(ddim_step(z, Tensor3(1, 2, 3), 1, s, Direction::Reverse), Error);
  }
}

TEST_SUITE("guided epsilon") {
  TEST_CASE("classifier-free arithmetic") {
    const Tensor3 c(3, 2, 2, 1.0), u(3, 2, 2, 0.5), none;
    const Tensor3 out = combine_guidance(c, u, none, none, 7.5, 1.0, 1.0);
    for (double v : out.data) CHECK(v == 4.75);

    const Tensor3 id = combine_guidance(c, u, none, none, 0.0, 1.0, 1.0);
    for (double v : id.data) CHECK(v == 1.0);
  }

  TEST_CASE("equal predictions cancel the guidance strength") {
    const Tensor3 v = oracle::random_tensor(3, 4, 4, 5);
    const Tensor3 a = oracle::random_tensor(3, 4, 4, 6);
    const Tensor3 b = oracle::random_tensor(3, 4, 4, 7);
    for (double s : {0.0, 1.0, 7.5, 20.0}) {
      const Tensor3 out = combine_guidance(v, v, a, b, s, 1.0, 1.0);
      for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(v.data[i] + a.data[i] + b.data[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("shape mismatch is a contract error") {
    const Tensor3 a(3, 2, 2), b(3, 2, 3), none;
    try {
      combine_guidance(a, b, none, none, 1.0, 1.0, 1.0);
      FAIL("expected contract error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Contract);
    }
    CHECK_THROWS_AS(combine_guidance(a, a, b, none, 1.0, 1.0, 1.0), Error);
  }

  TEST_CASE("guided epsilon with s = 0 is the conditional prediction") {
    const auto be = analytic();
    const Tensor3 z = oracle::random_tensor(3, 32, 64, 9);
    GuidanceConfig cfg;
    cfg.s = 0.0;
    const Tensor3 out = guided_epsilon(be, z, 500, Condition{}, {}, {}, cfg);
    const Tensor3 ref = be.predict_noise(z, 500, Condition{});
    CHECK(out.data == ref.data);
  }

  TEST_CASE("config validation") {
    GuidanceConfig c;
    CHECK(c.guided_steps() == 120);
    c.n_t = 50;
    CHECK(c.guided_steps() == 30);
    c.n_t = 10;
    CHECK(c.guided_steps() == 6);
    c.n_p = 11;
    CHECK_THROWS_AS(c.validate(), Error);
    c.n_p = 3;
    c.sigma = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.sigma = 0.1;
    c.tau = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.tau = 0.3;
    c.s = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.s = 7.5;
    CHECK_NOTHROW(c.validate());
  }
}

TEST_SUITE("inversion and sampling") {
  TEST_CASE("trajectory length and zero image") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 10);
    const auto traj = invert(Tensor3(3, 32, 64), Condition{}, s, be);
    CHECK(traj.latents.size() == 11);
    CHECK(traj.steps() == 10);
    for (const auto& z : traj.latents)
      for (double v : z.data) CHECK(v == 0.0);
  }

  TEST_CASE("analytic roundtrip at 10, 50 and 200 steps") {
    const auto be = analytic();
    for (int idx : {0, 3}) {
      const Tensor3 x = corpus_latent(idx);
      for (int n : {10, 50, 200}) {
        const NoiseSchedule s(1000, n);
        const auto traj = invert(x, Condition{}, s, be);
        const auto out = sample(traj.latents.back(), Condition{}, s, be, {}, plain(n));
        const double err = relative_l2(out.final_latent.data, x.data);
        INFO("steps " << n << " image " << idx << " error " << err);
        CHECK(err < 1e-3);
        // every intermediate latent is retraced too
        for (int j = 0; j <= n; ++j) CHECK(relative_l2(out.trajectory[j].data, traj.latents[j].data) < 1e-3);
      }
    }
  }

  TEST_CASE("monotone noising along inversion") {
    const auto be = analytic();
    const Tensor3 x = corpus_latent(1);
    const NoiseSchedule s(1000, 50);
    const auto traj = invert(x, Condition{}, s, be);
    for (std::size_t j = 1; j < traj.latents.size(); ++j)
      CHECK(variance(traj.latents[j]) >= variance(traj.latents[j - 1]) - 1e-6);
  }

  TEST_CASE("feature capture covers the first guided steps") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 10);
    InversionOptions opt;
    opt.capture_steps = 3;
    const auto traj = invert(corpus_latent(0), Condition{false, {"car"}, ""}, s, be, opt);
    REQUIRE(traj.features.size() == 3);
    for (int k = 1; k <= 3; ++k) {
      REQUIRE(traj.features.count(k));
      const auto direct = be.capture_features(traj.latents[latent_index_for_step(k, 10)], s.timestep(10 - k + 1),
                                              Condition{false, {"car"}, ""});
      CHECK(direct.self_keys.data == traj.features.at(k).self_keys.data);
    }
  }

  TEST_CASE("sampling is bitwise deterministic") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 20);
    GuidanceConfig cfg = plain(20);
    cfg.seed = 42;
    const auto a = sample({}, Condition{}, s, be, {}, cfg);
    const auto b = sample({}, Condition{}, s, be, {}, cfg);
    CHECK(a.final_latent.data == b.final_latent.data);
    cfg.seed = 43;
    const auto c = sample({}, Condition{}, s, be, {}, cfg);
    CHECK(c.final_latent.data != a.final_latent.data);
  }

  TEST_CASE("zero guided steps match guidance off") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 20);
    const Tensor3 init = gaussian_latent(3, 32, 64, 5);
    int calls = 0;
    GuidanceHook hook = [&](const Tensor3& z, int, int) {
      ++calls;
      return StepGuidance{Tensor3(z.channels, z.height, z.width, 1.0), {}};
    };
    GuidanceConfig on;
    on.n_t = 20;
    on.n_p = 0;
    const auto a = sample(init, Condition{}, s, be, hook, on);
    const auto b = sample(init, Condition{}, s, be, {}, plain(20));
    CHECK(calls == 0);
    for (std::size_t j = 0; j < a.trajectory.size(); ++j) CHECK(a.trajectory[j].data == b.trajectory[j].data);
  }

  TEST_CASE("hook fires exactly on the first N_p steps") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 10);
    std::vector<int> seen;
    GuidanceHook hook = [&](const Tensor3&, int k, int t) {
      seen.push_back(k);
      CHECK(t == s.timestep(latent_index_for_step(k, 10)));
      return StepGuidance{};
    };
    GuidanceConfig cfg;
    cfg.n_t = 10;
    sample(gaussian_latent(3, 32, 64, 1), Condition{}, s, be, hook, cfg);
    CHECK(seen == std::vector<int>{1, 2, 3, 4, 5, 6});
  }

  TEST_CASE("guided sampling without a hook is a configuration error") {
    const auto be = analytic();
    const NoiseSchedule s(1000, 10);
    GuidanceConfig cfg;
    cfg.n_t = 10;
    try {
      sample(gaussian_latent(3, 32, 64, 1), Condition{}, s, be, {}, cfg);
      FAIL("expected configuration error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Configuration);
    }
  }
}
