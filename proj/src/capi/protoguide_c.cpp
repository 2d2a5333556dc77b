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

#include "protoguide/protoguide.h"

#include <algorithm>
#include <cstring>
#include <string>

#include "common/config.hpp"
#include "common/image_io.hpp"
#include "layout/prompt.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/pipeline.hpp"
#include "prototypes/prototypes.hpp"

struct pg_session {
  pg::KeyValueConfig config;
  std::string last_error;
  pg::RunSummary summary;
  std::string details;
};

namespace {

pg_status status_of(pg::ErrorKind k) { return static_cast<pg_status>(static_cast<int>(k)); }

// Runs fn and converts exceptions to a status, recording the message.
template <typename F>
pg_status guarded(std::string* error, F&& fn) {
  try {
    return fn();
  } catch (const pg::Error& e) {
    if (error) *error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return PG_ERR_INTERNAL;
  }
}

std::string normalize_key(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(0, 1);
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

pg_status copy_out(const std::string& s, char* buf, size_t buf_size, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf_size == 0) return PG_OK;
  if (!buf || buf_size < s.size() + 1) return PG_ERR_PARAMETER;
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return PG_OK;
}

}  // namespace

extern "C" {

const char* pg_version(void) { return "0.1.0"; }

const char* pg_status_string(pg_status status) {
  switch (status) {
    case PG_OK: return "ok";
    case PG_PARTIAL: return "partial failure";
    case PG_ERR_INTERNAL: return "internal error";
    default: break;
  }
  const int v = static_cast<int>(status);
  if (v >= 1 && v <= 12) {
    static const char* names[] = {"parameter error",     "step error",     "contract error",
                                  "configuration error", "capability error", "parse error",
                                  "vocabulary error",    "region error",   "io error",
                                  "training error",      "store error",    "backend error"};
    return names[v - 1];
  }
  return "unknown status";
}

pg_status pg_session_create(pg_session** out) {
  if (!out) return PG_ERR_PARAMETER;
  *out = new (std::nothrow) pg_session();
  return *out ? PG_OK : PG_ERR_INTERNAL;
}

void pg_session_destroy(pg_session* session) { delete session; }

const char* pg_session_last_error(const pg_session* session) { return session ? session->last_error.c_str() : ""; }

pg_status pg_config_set(pg_session* session, const char* key, const char* value) {
  if (!session || !key || !value) return PG_ERR_PARAMETER;
  session->config.set(normalize_key(key), value);
  return PG_OK;
}

pg_status pg_config_load(pg_session* session, const char* path) {
  if (!session || !path) return PG_ERR_PARAMETER;
  return guarded(&session->last_error, [&] {
    const auto file = pg::KeyValueConfig::load(path);
    for (const auto& [k, v] : file.entries()) session->config.set(normalize_key(k), v);
    return PG_OK;
  });
}

pg_status pg_run(pg_session* session, const char* verb) {
  if (!session || !verb) return PG_ERR_PARAMETER;
  session->last_error.clear();
  session->summary = {};
  session->details = "{}";
  return guarded(&session->last_error, [&] {
    const std::string v = verb;
    const auto& vs = pg::verbs();
    if (std::find(vs.begin(), vs.end(), v) == vs.end())
      pg::fail(pg::ErrorKind::Configuration, "unknown verb '" + v + "'");
    const pg::RunConfig config = pg::resolve_run_config(session->config);
    session->summary = pg::run_verb(v, config);
    session->details = session->summary.details.dump();
    if (session->summary.partial()) {
      session->last_error = std::to_string(session->summary.failed) + " failed, " +
                            std::to_string(session->summary.skipped) + " skipped";
      return PG_PARTIAL;
    }
    return PG_OK;
  });
}

pg_status pg_run_counts(const pg_session* session, int* processed, int* failed, int* skipped) {
  if (!session) return PG_ERR_PARAMETER;
  if (processed) *processed = session->summary.processed;
  if (failed) *failed = session->summary.failed;
  if (skipped) *skipped = session->summary.skipped;
  return PG_OK;
}

const char* pg_run_details(const pg_session* session) { return session ? session->details.c_str() : "{}"; }

pg_status pg_build_prompt(const char* labels_text, int image_width, int image_height, const char* scenario,
                          char* buf, size_t buf_size, size_t* needed) {
  if (!labels_text) return PG_ERR_PARAMETER;
  return guarded(nullptr, [&] {
    const pg::Layout layout = pg::parse_kitti_labels(labels_text, image_width, image_height);
    pg::Prompt p = pg::build_prompt(layout);
    if (scenario && *scenario) p = pg::apply_scenario(p, scenario);
    return copy_out(p.text, buf, buf_size, needed);
  });
}

pg_status pg_normalize_labels(const char* labels_text, int image_width, int image_height, char* buf,
                              size_t buf_size, size_t* needed) {
  if (!labels_text) return PG_ERR_PARAMETER;
  return guarded(nullptr, [&] {
    const pg::Layout layout = pg::parse_kitti_labels(labels_text, image_width, image_height);
    return copy_out(pg::serialize_kitti_labels(layout), buf, buf_size, needed);
  });
}

double pg_peak_weight(double p, double q, double center_p, double center_q, double sigma) {
  return pg::peak_weight(p, q, center_p, center_q, sigma);
}

pg_status pg_region_psnr(const uint8_t* a, const uint8_t* b, const uint8_t* region, int width, int height,
                         double* db, int* infinite) {
  if (!a || !b || !region || !db || !infinite || width <= 0 || height <= 0) return PG_ERR_PARAMETER;
  return guarded(nullptr, [&] {
    pg::RgbImage ia(width, height), ib(width, height);
    std::copy(a, a + ia.pixels.size(), ia.pixels.begin());
    std::copy(b, b + ib.pixels.size(), ib.pixels.begin());
    pg::GridMask m(height, width);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = region[i] ? 1 : 0;
    const pg::Psnr r = pg::region_psnr(pg::to_pixels(ia), pg::to_pixels(ib), m, 255.0);
    *db = r.db;
    *infinite = r.infinite ? 1 : 0;
    return PG_OK;
  });
}

}  // extern "C"
