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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common/image_io.hpp"
#include "common/tensor.hpp"
#include "layout/kitti.hpp"

namespace pg {

// PSNR in dB; identical regions give the infinite sentinel instead of a number.
struct Psnr {
  double db = 0.0;
  bool infinite = false;
  static Psnr inf() { return {0.0, true}; }
};

// Images are [C,H,W] on a 0..max_value scale; region is [H,W].
Psnr region_psnr(const Tensor3& a, const Tensor3& b, const GridMask& region, double max_value);

struct SsimWindow {
  int size = 7;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean local SSIM of the channel-mean grayscale over windows that fit in the
// image and whose center lies in the region. Throws Region when the region's
// bounding box is smaller than the window or no window qualifies.
double region_ssim(const Tensor3& a, const Tensor3& b, const GridMask& region, double max_value,
                   const SsimWindow& window = {});

// Union of the layout boxes at pixel resolution.
GridMask layout_region(const Layout& layout, int width, int height);

struct RegionReport {
  std::optional<Psnr> psnr_object;
  std::optional<double> ssim_object;
  std::optional<Psnr> psnr_background;
  std::optional<double> ssim_background;
  std::size_t object_pixels = 0;
  std::size_t background_pixels = 0;
};

RegionReport evaluate_pair(const RgbImage& original, const RgbImage& generated, const Layout& layout);

nlohmann::json to_json(const Psnr& p);
nlohmann::json to_json(const RegionReport& r);

struct ReportRow {
  std::string stem;
  std::string method;
  std::string scenario;
  RegionReport report;
};

// Mean of each metric per (method, scenario); infinite PSNRs are counted
// separately and left out of the mean.
nlohmann::json summarize_reports(const std::vector<ReportRow>& rows);

// Mean of the finite values; nullopt when there are none.
std::optional<double> mean_finite_psnr(const std::vector<std::optional<Psnr>>& values);

}  // namespace pg
