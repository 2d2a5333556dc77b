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

#ifndef PROTOGUIDE_PROTOGUIDE_H
#define PROTOGUIDE_PROTOGUIDE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(PROTOGUIDE_BUILDING_LIBRARY)
#    define PG_API __declspec(dllexport)
#  else
#    define PG_API __declspec(dllimport)
#  endif
#else
#  define PG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pg_status {
  PG_OK = 0,
  PG_ERR_PARAMETER = 1,
  PG_ERR_STEP = 2,
  PG_ERR_CONTRACT = 3,
  PG_ERR_CONFIGURATION = 4,
  PG_ERR_CAPABILITY = 5,
  PG_ERR_PARSE = 6,
  PG_ERR_VOCABULARY = 7,
  PG_ERR_REGION = 8,
  PG_ERR_IO = 9,
  PG_ERR_TRAINING = 10,
  PG_ERR_STORE = 11,
  PG_ERR_BACKEND = 12,
  PG_ERR_INTERNAL = 99,
  /* A batch verb finished but some images failed or were skipped. */
  PG_PARTIAL = 100
} pg_status;

typedef struct pg_session pg_session;

PG_API const char* pg_version(void);
PG_API const char* pg_status_string(pg_status status);

PG_API pg_status pg_session_create(pg_session** out);
PG_API void pg_session_destroy(pg_session* session);

/* Message of the last failing call on this session; empty when none. */
PG_API const char* pg_session_last_error(const pg_session* session);

/* Configuration keys are the long CLI flag names ("tau-sweep" and
   "tau_sweep" are equivalent). Values set later override earlier ones,
   so load a file first and apply flags after it. */
PG_API pg_status pg_config_set(pg_session* session, const char* key, const char* value);
PG_API pg_status pg_config_load(pg_session* session, const char* path);

/* Runs one of gen-corpus, train-toy, stage1, stage2, ablate, evaluate.
   Returns PG_PARTIAL when the batch completed with per-image failures. */
PG_API pg_status pg_run(pg_session* session, const char* verb);

/* Counters and JSON details of the last pg_run. The JSON pointer stays valid
   until the next pg_run or pg_session_destroy. */
PG_API pg_status pg_run_counts(const pg_session* session, int* processed, int* failed, int* skipped);
PG_API const char* pg_run_details(const pg_session* session);

/* Stateless helpers. Strings are written NUL-terminated into buf; *needed
   receives the full length including the terminator, so a call with
   buf_size 0 sizes the buffer. */
PG_API pg_status pg_build_prompt(const char* labels_text, int image_width, int image_height, const char* scenario,
                                 char* buf, size_t buf_size, size_t* needed);
PG_API pg_status pg_normalize_labels(const char* labels_text, int image_width, int image_height, char* buf,
                                     size_t buf_size, size_t* needed);
PG_API double pg_peak_weight(double p, double q, double center_p, double center_q, double sigma);

/* Region PSNR over interleaved 8-bit RGB buffers; region is width*height
   bytes, nonzero inside. *infinite is set for identical regions. */
PG_API pg_status pg_region_psnr(const uint8_t* a, const uint8_t* b, const uint8_t* region, int width, int height,
                                double* db, int* infinite);

#ifdef __cplusplus
}
#endif

#endif
