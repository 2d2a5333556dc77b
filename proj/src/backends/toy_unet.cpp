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

#include "backends/toy_unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <random>

#include "common/error.hpp"

namespace pg {

using nlohmann::json;

json ToyUNetConfig::to_json() const {
  return json{{"image_channels", image_channels}, {"image_height", image_height},
              {"image_width", image_width},       {"width0", width0},
              {"width1", width1},                 {"width2", width2},
              {"attn_dim", attn_dim},             {"context_dim", context_dim},
              {"time_dim", time_dim},             {"groups", groups},
              {"max_concepts", max_concepts},     {"concepts", concepts},
              {"scenarios", scenarios}};
}

ToyUNetConfig ToyUNetConfig::from_json(const json& j) {
  ToyUNetConfig c;
  c.image_channels = j.at("image_channels").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.image_width = j.at("image_width").get<int>();
  c.width0 = j.at("width0").get<int>();
  c.width1 = j.at("width1").get<int>();
  c.width2 = j.at("width2").get<int>();
  c.attn_dim = j.at("attn_dim").get<int>();
  c.context_dim = j.at("context_dim").get<int>();
  c.time_dim = j.at("time_dim").get<int>();
  c.groups = j.at("groups").get<int>();
  c.max_concepts = j.at("max_concepts").get<int>();
  c.concepts = j.at("concepts").get<std::vector<std::string>>();
  c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
  return c;
}

std::string ToyUNetConfig::architecture_hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t ToyUNet::add_slot(const std::string& name, ad::Shape shape) {
  ParamSlot s{name, std::move(shape), params_.size()};
  params_.resize(params_.size() + ad::numel(s.shape), 0.0f);
  slot_lookup_[name] = static_cast<int>(slots_.size());
  slots_.push_back(std::move(s));
  return slots_.size() - 1;
}

const ParamSlot& ToyUNet::slot(const std::string& name) const { return slots_[slot_index(name)]; }

int ToyUNet::slot_index(const std::string& name) const {
  auto it = slot_lookup_.find(name);
  require(it != slot_lookup_.end(), ErrorKind::Contract, "toy unet: no parameter " + name);
  return it->second;
}

ToyUNet::ToyUNet(ToyUNetConfig config) : config_(std::move(config)) {
  const auto& c = config_;
  require(c.image_height % 4 == 0 && c.image_width % 4 == 0, ErrorKind::Parameter,
          "toy unet image size must be divisible by 4");
  require(!c.scenarios.empty() && c.scenarios.front() == "clean", ErrorKind::Parameter,
          "toy unet scenario vocabulary must start with 'clean'");
  const int td = c.time_dim;
  add_slot("time.w1", {td, td});
  add_slot("time.b1", {td});
  add_slot("time.w2", {td, td});
  add_slot("time.b2", {td});
  add_slot("scenario.table", {static_cast<int>(c.scenarios.size()) + 1, td});
  add_slot("concept.table", {static_cast<int>(c.concepts.size()) + 1, c.context_dim});
  add_slot("conv_in.w", {c.width0, c.image_channels, 3, 3});
  add_slot("conv_in.b", {c.width0});
  auto res = [&](const std::string& n, int cin, int cout) {
    add_slot(n + ".gn1.g", {cin});
    add_slot(n + ".gn1.b", {cin});
    add_slot(n + ".conv1.w", {cout, cin, 3, 3});
    add_slot(n + ".conv1.b", {cout});
    add_slot(n + ".temb.w", {td, cout});
    add_slot(n + ".temb.b", {cout});
    add_slot(n + ".gn2.g", {cout});
    add_slot(n + ".gn2.b", {cout});
    add_slot(n + ".conv2.w", {cout, cout, 3, 3});
    add_slot(n + ".conv2.b", {cout});
    if (cin != cout) {
      add_slot(n + ".skip.w", {cout, cin, 1, 1});
      add_slot(n + ".skip.b", {cout});
    }
  };
  auto attn = [&](const std::string& n, int ch, int kv_in) {
    add_slot(n + ".gn.g", {ch});
    add_slot(n + ".gn.b", {ch});
    add_slot(n + ".q.w", {ch, c.attn_dim});
    add_slot(n + ".q.b", {c.attn_dim});
    add_slot(n + ".k.w", {kv_in, c.attn_dim});
    add_slot(n + ".k.b", {c.attn_dim});
    add_slot(n + ".v.w", {kv_in, c.attn_dim});
    add_slot(n + ".v.b", {c.attn_dim});
    add_slot(n + ".o.w", {c.attn_dim, ch});
    add_slot(n + ".o.b", {ch});
  };
  res("enc1", c.width0, c.width1);
  res("mid", c.width1, c.width2);
  res("dec2", c.width2, c.width2);
  attn("self", c.width2, c.width2);
  attn("cross", c.width2, c.context_dim);
  res("dec1", c.width2 + c.width1, c.width1);
  res("dec0", c.width1 + c.width0, c.width0);
  add_slot("out.gn.g", {c.width0});
  add_slot("out.gn.b", {c.width0});
  add_slot("conv_out.w", {c.image_channels, c.width0, 3, 3});
  add_slot("conv_out.b", {c.image_channels});
  initialize(0);
}

void ToyUNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (const auto& s : slots_) {
    float* p = params_.data() + s.offset;
    const std::size_t n = ad::numel(s.shape);
    if (ends_with(s.name, ".table")) {
      std::normal_distribution<float> d(0.0f, 1.0f);
      for (std::size_t i = 0; i < n; ++i) p[i] = d(rng);
    } else if (ends_with(s.name, ".g")) {
      std::fill(p, p + n, 1.0f);
    } else if (ends_with(s.name, ".w")) {
      // Linear weights are [in, out]; conv weights [out, in, k, k].
      const std::size_t fan_in = s.shape.size() == 2 ? s.shape[0] : n / s.shape[0];
      float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
      if (ends_with(s.name, "conv2.w") || ends_with(s.name, ".o.w")) bound *= 0.2f;
      if (s.name == "conv_out.w") bound *= 0.1f;
      std::uniform_real_distribution<float> d(-bound, bound);
      for (std::size_t i = 0; i < n; ++i) p[i] = d(rng);
    } else {
      std::fill(p, p + n, 0.0f);
    }
  }
}

EncodedCondition ToyUNet::encode(bool null, std::span<const std::string> concepts,
                                 const std::string& scenario) const {
  const auto& c = config_;
  EncodedCondition e;
  const int null_concept = static_cast<int>(c.concepts.size());
  e.context_rows.assign(context_length(), null_concept);
  e.context_valid.assign(context_length(), 0);
  e.context_valid[0] = 1;
  if (null) {
    e.scenario_row = static_cast<int>(c.scenarios.size());
    return e;
  }
  const std::string sc = scenario.empty() ? "clean" : scenario;
  auto sit = std::find(c.scenarios.begin(), c.scenarios.end(), sc);
  require(sit != c.scenarios.end(), ErrorKind::Vocabulary, "toy backend: unknown scenario word '" + sc + "'");
  e.scenario_row = static_cast<int>(sit - c.scenarios.begin());
  // Layouts with more objects than context slots keep the first max_concepts words.
  const int n = std::min<int>(static_cast<int>(concepts.size()), c.max_concepts);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    auto it = std::find(c.concepts.begin(), c.concepts.end(), concepts[i]);
    require(it != c.concepts.end(), ErrorKind::Vocabulary,
            "toy backend: unknown concept word '" + concepts[i] + "'");
    if (static_cast<int>(i) < n) {
      e.context_rows[1 + i] = static_cast<int>(it - c.concepts.begin());
      e.context_valid[1 + i] = 1;
    }
  }
  e.n_concepts = n;
  return e;
}

template <typename T>
std::vector<ad::Var> ToyUNet::bind(ad::Tape<T>& tape, bool requires_grad) const {
  std::vector<ad::Var> vars;
  vars.reserve(slots_.size());
  for (const auto& s : slots_) {
    const float* p = params_.data() + s.offset;
    vars.push_back(tape.leaf(s.shape, std::vector<T>(p, p + ad::numel(s.shape)), requires_grad));
  }
  return vars;
}

template <typename T>
UNetOutputs ToyUNet::forward(ad::Tape<T>& tape, const std::vector<ad::Var>& params, ad::Var x,
                             std::span<const int> timesteps, std::span<const EncodedCondition> conds,
                             ForwardUntil until) const {
  const auto& c = config_;
  const ad::Shape xs = tape.shape(x);
  require(xs.size() == 4 && xs[1] == c.image_channels && xs[2] == c.image_height && xs[3] == c.image_width,
          ErrorKind::Contract, "toy unet: input shape " + ad::shape_string(xs));
  const int N = xs[0];
  require(static_cast<int>(timesteps.size()) == N && static_cast<int>(conds.size()) == N, ErrorKind::Contract,
          "toy unet: batch size mismatch");
  auto P = [&](const std::string& name) { return params[slot_index(name)]; };

  // Timestep embedding with the scenario folded in.
  const int td = c.time_dim, half = td / 2;
  std::vector<T> sinus(static_cast<std::size_t>(N) * td);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      sinus[static_cast<std::size_t>(n) * td + i] = static_cast<T>(std::sin(timesteps[n] * freq));
      sinus[static_cast<std::size_t>(n) * td + half + i] = static_cast<T>(std::cos(timesteps[n] * freq));
    }
  std::vector<int> scen_rows(N);
  for (int n = 0; n < N; ++n) scen_rows[n] = conds[n].scenario_row;
  ad::Var temb = tape.linear(tape.constant({N, td}, std::move(sinus)), P("time.w1"), P("time.b1"));
  temb = tape.add(temb, tape.gather_rows(P("scenario.table"), scen_rows));
  temb = tape.linear(tape.silu(temb), P("time.w2"), P("time.b2"));
  ad::Var temb_act = tape.silu(temb);

  auto resblock = [&](const std::string& n, ad::Var in) {
    const int cin = tape.shape(in)[1];
    ad::Var h = tape.silu(tape.group_norm(in, P(n + ".gn1.g"), P(n + ".gn1.b"), c.groups));
    h = tape.conv2d(h, P(n + ".conv1.w"), P(n + ".conv1.b"), 1, 1);
    h = tape.add_channel_bias(h, tape.linear(temb_act, P(n + ".temb.w"), P(n + ".temb.b")));
    h = tape.silu(tape.group_norm(h, P(n + ".gn2.g"), P(n + ".gn2.b"), c.groups));
    h = tape.conv2d(h, P(n + ".conv2.w"), P(n + ".conv2.b"), 1, 1);
    const int cout = tape.shape(h)[1];
    ad::Var skip = cin == cout ? in : tape.conv2d(in, P(n + ".skip.w"), P(n + ".skip.b"), 1, 0);
    return tape.add(h, skip);
  };

  UNetOutputs out;
  ad::Var h0 = tape.conv2d(x, P("conv_in.w"), P("conv_in.b"), 1, 1);
  ad::Var e1 = resblock("enc1", tape.avg_pool2(h0));
  ad::Var m = resblock("mid", tape.avg_pool2(e1));
  ad::Var u = resblock("dec2", m);
  const int hf = tape.shape(u)[2], wf = tape.shape(u)[3];
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c.attn_dim)));

  {
    ad::Var tok = tape.to_tokens(tape.group_norm(u, P("self.gn.g"), P("self.gn.b"), c.groups));
    ad::Var q = tape.linear(tok, P("self.q.w"), P("self.q.b"));
    ad::Var k = tape.linear(tok, P("self.k.w"), P("self.k.b"));
    ad::Var v = tape.linear(tok, P("self.v.w"), P("self.v.b"));
    out.keys = k;
    ad::Var a = tape.softmax(tape.bmm_nt(q, k, inv_sqrt_d));
    ad::Var o = tape.linear(tape.bmm(a, v), P("self.o.w"), P("self.o.b"));
    u = tape.add(u, tape.from_tokens(o, hf, wf));
  }
  {
    const int S = context_length();
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(N) * S);
    for (int n = 0; n < N; ++n) rows.insert(rows.end(), conds[n].context_rows.begin(), conds[n].context_rows.end());
    ad::Var ctx = tape.reshape(tape.gather_rows(P("concept.table"), rows), {N, S, c.context_dim});
    const int L = hf * wf;
    std::vector<T> mask(static_cast<std::size_t>(N) * L * S, T(0));
    for (int n = 0; n < N; ++n)
      for (int l = 0; l < L; ++l)
        for (int s = 0; s < S; ++s)
          if (!conds[n].context_valid[s]) mask[(static_cast<std::size_t>(n) * L + l) * S + s] = T(-1e9);
    ad::Var tok = tape.to_tokens(tape.group_norm(u, P("cross.gn.g"), P("cross.gn.b"), c.groups));
    ad::Var q = tape.linear(tok, P("cross.q.w"), P("cross.q.b"));
    ad::Var k = tape.linear(ctx, P("cross.k.w"), P("cross.k.b"));
    ad::Var v = tape.linear(ctx, P("cross.v.w"), P("cross.v.b"));
    ad::Var a = tape.softmax(tape.bmm_nt(q, k, inv_sqrt_d), mask);
    out.cross_probs = a;
    if (until == ForwardUntil::Attention) return out;
    ad::Var o = tape.linear(tape.bmm(a, v), P("cross.o.w"), P("cross.o.b"));
    u = tape.add(u, tape.from_tokens(o, hf, wf));
  }

  ad::Var d1 = resblock("dec1", tape.concat_channels(tape.upsample2(u), e1));
  ad::Var d0 = resblock("dec0", tape.concat_channels(tape.upsample2(d1), h0));
  ad::Var hout = tape.silu(tape.group_norm(d0, P("out.gn.g"), P("out.gn.b"), c.groups));
  out.eps = tape.conv2d(hout, P("conv_out.w"), P("conv_out.b"), 1, 1);
  return out;
}

template std::vector<ad::Var> ToyUNet::bind<float>(ad::Tape<float>&, bool) const;
template std::vector<ad::Var> ToyUNet::bind<double>(ad::Tape<double>&, bool) const;
template UNetOutputs ToyUNet::forward<float>(ad::Tape<float>&, const std::vector<ad::Var>&, ad::Var,
                                             std::span<const int>, std::span<const EncodedCondition>,
                                             ForwardUntil) const;
template UNetOutputs ToyUNet::forward<double>(ad::Tape<double>&, const std::vector<ad::Var>&, ad::Var,
                                              std::span<const int>, std::span<const EncodedCondition>,
                                              ForwardUntil) const;

}  // namespace pg
