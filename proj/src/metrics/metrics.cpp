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

#include "metrics/metrics.hpp"

#include <cmath>
#include <map>

namespace pg {

namespace {

std::size_t count_region(const GridMask& region) {
  std::size_t n = 0;
  for (auto v : region.data) n += v != 0;
  return n;
}

Tensor3 gray(const Tensor3& a) {
  Tensor3 g(1, a.height, a.width);
  const std::size_t P = a.plane();
  for (std::size_t p = 0; p < P; ++p) {
    double s = 0.0;
    for (int c = 0; c < a.channels; ++c) s += a.data[c * P + p];
    g.data[p] = s / a.channels;
  }
  return g;
}

GridMask complement(const GridMask& m) {
  GridMask out(m.height, m.width);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = m.data[i] ? 0 : 1;
  return out;
}

}  // namespace

Psnr region_psnr(const Tensor3& a, const Tensor3& b, const GridMask& region, double max_value) {
  require_same_shape(a, b, "region PSNR");
  require(region.same_shape(a.height, a.width), ErrorKind::Contract, "region PSNR: region shape differs from image");
  const std::size_t n = count_region(region);
  require(n > 0, ErrorKind::Region, "region PSNR: empty region");
  const std::size_t P = a.plane();
  double se = 0.0;
  for (int c = 0; c < a.channels; ++c)
    for (std::size_t p = 0; p < P; ++p) {
      if (!region.data[p]) continue;
      const double d = a.data[c * P + p] - b.data[c * P + p];
      se += d * d;
    }
  if (se == 0.0) return Psnr::inf();
  const double mse = se / (static_cast<double>(n) * a.channels);
  return {10.0 * std::log10(max_value * max_value / mse), false};
}

double region_ssim(const Tensor3& a, const Tensor3& b, const GridMask& region, double max_value,
                   const SsimWindow& window) {
  require_same_shape(a, b, "region SSIM");
  require(region.same_shape(a.height, a.width), ErrorKind::Contract, "region SSIM: region shape differs from image");
  require(window.size >= 2, ErrorKind::Parameter, "region SSIM: window must be at least 2 pixels");
  int x0 = a.width, x1 = -1, y0 = a.height, y1 = -1;
  for (int y = 0; y < region.height; ++y)
    for (int x = 0; x < region.width; ++x)
      if (region.at(y, x)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  require(x1 >= 0, ErrorKind::Region, "region SSIM: empty region");
  require(x1 - x0 + 1 >= window.size && y1 - y0 + 1 >= window.size, ErrorKind::Region,
          "region SSIM: region smaller than the " + std::to_string(window.size) + "x" +
              std::to_string(window.size) + " window");

  const Tensor3 ga = gray(a), gb = gray(b);
  const double c1 = (window.k1 * max_value) * (window.k1 * max_value);
  const double c2 = (window.k2 * max_value) * (window.k2 * max_value);
  const int w = window.size;
  const int before = (w - 1) / 2;  // window spans [center - before, center - before + w)
  const double n = static_cast<double>(w) * w;

  // Summed-area tables for the five window moments.
  const int H = a.height, W = a.width;
  const int S = W + 1;
  std::vector<double> sa((H + 1) * S), sb(sa.size()), saa(sa.size()), sbb(sa.size()), sab(sa.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double u = ga.data[y * W + x], v = gb.data[y * W + x];
      const int i = (y + 1) * S + x + 1;
      const int up = y * S + x + 1, left = (y + 1) * S + x, diag = y * S + x;
      sa[i] = u + sa[up] + sa[left] - sa[diag];
      sb[i] = v + sb[up] + sb[left] - sb[diag];
      saa[i] = u * u + saa[up] + saa[left] - saa[diag];
      sbb[i] = v * v + sbb[up] + sbb[left] - sbb[diag];
      sab[i] = u * v + sab[up] + sab[left] - sab[diag];
    }
  auto box = [&](const std::vector<double>& t, int yt, int xl) {
    return t[(yt + w) * S + xl + w] - t[yt * S + xl + w] - t[(yt + w) * S + xl] + t[yt * S + xl];
  };

  double total = 0.0;
  std::size_t count = 0;
  for (int cy = 0; cy < H; ++cy) {
    const int yt = cy - before;
    if (yt < 0 || yt + w > H) continue;
    for (int cx = 0; cx < W; ++cx) {
      const int xl = cx - before;
      if (xl < 0 || xl + w > W || !region.at(cy, cx)) continue;
      const double ma = box(sa, yt, xl) / n, mb = box(sb, yt, xl) / n;
      const double va = std::max(0.0, (box(saa, yt, xl) - n * ma * ma) / (n - 1));
      const double vb = std::max(0.0, (box(sbb, yt, xl) - n * mb * mb) / (n - 1));
      const double cov = (box(sab, yt, xl) - n * ma * mb) / (n - 1);
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  require(count > 0, ErrorKind::Region, "region SSIM: no window centered in the region fits in the image");
  return total / static_cast<double>(count);
}

GridMask layout_region(const Layout& layout, int width, int height) {
  GridMask m(height, width, 0);
  for (const auto& b : layout.boxes) {
    const int l = std::max(0, static_cast<int>(std::floor(b.left)));
    const int t = std::max(0, static_cast<int>(std::floor(b.top)));
    const int r = std::min(width, static_cast<int>(std::ceil(b.right)));
    const int bt = std::min(height, static_cast<int>(std::ceil(b.bottom)));
    for (int y = t; y < bt; ++y)
      for (int x = l; x < r; ++x) m.at(y, x) = 1;
  }
  return m;
}

RegionReport evaluate_pair(const RgbImage& original, const RgbImage& generated, const Layout& layout) {
  require(original.width == generated.width && original.height == generated.height, ErrorKind::Contract,
          "evaluation: image sizes differ");
  const Tensor3 a = to_pixels(original), b = to_pixels(generated);
  const GridMask obj = layout_region(layout, a.width, a.height);
  const GridMask bg = complement(obj);
  RegionReport r;
  r.object_pixels = count_region(obj);
  r.background_pixels = count_region(bg);
  auto fill = [&](const GridMask& m, std::size_t n, std::optional<Psnr>& psnr, std::optional<double>& ssim) {
    if (n == 0) return;
    psnr = region_psnr(a, b, m, 255.0);
    try {
      ssim = region_ssim(a, b, m, 255.0);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Region) throw;
    }
  };
  fill(obj, r.object_pixels, r.psnr_object, r.ssim_object);
  fill(bg, r.background_pixels, r.psnr_background, r.ssim_background);
  return r;
}

nlohmann::json to_json(const Psnr& p) {
  if (p.infinite) return "inf";
  return p.db;
}

nlohmann::json to_json(const RegionReport& r) {
  nlohmann::json j;
  j["psnr_object"] = r.psnr_object ? to_json(*r.psnr_object) : nlohmann::json(nullptr);
  j["ssim_object"] = r.ssim_object ? nlohmann::json(*r.ssim_object) : nlohmann::json(nullptr);
  j["psnr_background"] = r.psnr_background ? to_json(*r.psnr_background) : nlohmann::json(nullptr);
  j["ssim_background"] = r.ssim_background ? nlohmann::json(*r.ssim_background) : nlohmann::json(nullptr);
  j["object_pixels"] = r.object_pixels;
  j["background_pixels"] = r.background_pixels;
  return j;
}

std::optional<double> mean_finite_psnr(const std::vector<std::optional<Psnr>>& values) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& v : values)
    if (v && !v->infinite) {
      s += v->db;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

nlohmann::json summarize_reports(const std::vector<ReportRow>& rows) {
  struct Acc {
    std::vector<std::optional<Psnr>> po, pb;
    double so = 0, sb = 0;
    std::size_t nso = 0, nsb = 0, images = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : rows) {
    Acc& a = groups[{r.method, r.scenario}];
    ++a.images;
    a.po.push_back(r.report.psnr_object);
    a.pb.push_back(r.report.psnr_background);
    if (r.report.ssim_object) {
      a.so += *r.report.ssim_object;
      ++a.nso;
    }
    if (r.report.ssim_background) {
      a.sb += *r.report.ssim_background;
      ++a.nsb;
    }
  }
  auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  auto infs = [](const std::vector<std::optional<Psnr>>& v) {
    std::size_t n = 0;
    for (const auto& p : v) n += p && p->infinite;
    return n;
  };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, a] : groups) {
    out.push_back({{"method", key.first},
                   {"scenario", key.second},
                   {"images", a.images},
                   {"psnr_object", opt(mean_finite_psnr(a.po))},
                   {"psnr_object_infinite", infs(a.po)},
                   {"ssim_object", a.nso ? nlohmann::json(a.so / a.nso) : nlohmann::json(nullptr)},
                   {"psnr_background", opt(mean_finite_psnr(a.pb))},
                   {"psnr_background_infinite", infs(a.pb)},
                   {"ssim_background", a.nsb ? nlohmann::json(a.sb / a.nsb) : nlohmann::json(nullptr)}});
  }
  return out;
}

}  // namespace pg
