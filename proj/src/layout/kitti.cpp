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

#include "layout/kitti.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "common/config.hpp"
#include "common/error.hpp"

namespace pg {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool Vocabulary::has_class(std::string_view word) const {
  const std::string w = lowercase(word);
  return std::find(classes.begin(), classes.end(), w) != classes.end();
}

Vocabulary Vocabulary::from_file(const std::string& path) {
  const KeyValueConfig kv = KeyValueConfig::load(path);
  Vocabulary v;
  if (auto classes = kv.get("vocabulary")) {
    v.classes.clear();
    for (auto& w : split_list(*classes)) v.classes.push_back(lowercase(w));
  }
  bool replaced = false;
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("scenario.", 0) == 0) {
      if (!replaced) {
        v.scenario_suffix.clear();
        replaced = true;
      }
      v.scenario_suffix[lowercase(key.substr(9))] = value;
    }
  }
  return v;
}

namespace {

double parse_number(const std::string& tok, std::size_t line_no, const char* field) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": non-numeric " + field + " '" + tok + "'");
  }
  return v;
}

std::string format2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

Layout parse_kitti_labels(std::string_view text, int image_width, int image_height, const Vocabulary& vocab) {
  require(image_width > 0 && image_height > 0, ErrorKind::Parameter, "image size must be positive");
  Layout layout;
  layout.image_width = image_width;
  layout.image_height = image_height;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() < 15 || tok.size() > 16) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 15 or 16 fields, got " +
                                 std::to_string(tok.size()));
    }
    LayoutBox box;
    box.type = tok[0];
    box.word = lowercase(tok[0]);
    box.left = parse_number(tok[4], line_no, "left");
    box.top = parse_number(tok[5], line_no, "top");
    box.right = parse_number(tok[6], line_no, "right");
    box.bottom = parse_number(tok[7], line_no, "bottom");
    if (box.word == "dontcare" || !vocab.has_class(box.word)) continue;
    if (!(box.left < box.right) || !(box.top < box.bottom)) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": inverted bounding box");
    }
    box.left = std::clamp(box.left, 0.0, static_cast<double>(image_width));
    box.right = std::clamp(box.right, 0.0, static_cast<double>(image_width));
    box.top = std::clamp(box.top, 0.0, static_cast<double>(image_height));
    box.bottom = std::clamp(box.bottom, 0.0, static_cast<double>(image_height));
    if (!(box.left < box.right) || !(box.top < box.bottom)) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bounding box lies outside the image");
    }
    box.head = {tok[1], tok[2], tok[3]};
    box.tail.assign(tok.begin() + 8, tok.end());
    layout.boxes.push_back(std::move(box));
  }
  return layout;
}

std::string serialize_kitti_labels(const Layout& layout) {
  std::string out;
  for (const auto& b : layout.boxes) {
    out += b.type.empty() ? b.word : b.type;
    for (const auto& h : b.head) out += " " + h;
    out += " " + format2(b.left) + " " + format2(b.top) + " " + format2(b.right) + " " + format2(b.bottom);
    for (const auto& t : b.tail) out += " " + t;
    out += "\n";
  }
  return out;
}

Layout load_kitti_labels(const std::string& path, int image_width, int image_height, const Vocabulary& vocab) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open label file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    Layout l = parse_kitti_labels(ss.str(), image_width, image_height, vocab);
    l.source = path;
    return l;
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

}  // namespace pg
