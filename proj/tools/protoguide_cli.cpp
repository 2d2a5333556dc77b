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

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protoguide/protoguide.h"

namespace {

// Exit codes: 0 clean, 1 partial or runtime failure, 2 configuration error.
int exit_code(pg_status s) {
  switch (s) {
    case PG_OK: return 0;
    case PG_ERR_CONFIGURATION:
    case PG_ERR_PARAMETER:
    case PG_ERR_VOCABULARY:
    case PG_ERR_CAPABILITY:
      return 2;
    default: return 1;
  }
}

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

const Flag kFlags[] = {
    {"--backend", "backend", "'analytic' or a toy checkpoint path"},
    {"--images", "images", "input image directory (PNG)"},
    {"--labels", "labels", "KITTI label directory"},
    {"--scenario", "scenario", "target scenario word, e.g. snow"},
    {"--out", "out", "output directory"},
    {"--steps", "steps", "DDIM steps N_t"},
    {"--np", "np", "guided steps N_p (default ceil(0.6 N_t))"},
    {"--s", "s", "classifier-free guidance strength"},
    {"--sigma", "sigma", "peak width in normalized grid units"},
    {"--tau", "tau", "mask threshold"},
    {"--wsa", "wsa", "semantic alignment weight"},
    {"--wsl", "wsl", "shallow alignment weight"},
    {"--tau-sweep", "tau_sweep", "comma-separated thresholds; stage2 runs once per value"},
    {"--seed", "seed", "random seed"},
    {"--workers", "workers", "parallel images (needs a concurrent-safe backend)"},
    {"--mode", "mode", "full, prompt-only, off, sa-only, sa-raw, sl-only"},
    {"--stores", "stores", "prototype store directory (stage2, ablate)"},
    {"--generated", "generated", "generated image directory (evaluate)"},
    {"--corpus", "corpus", "corpus directory (train-toy)"},
    {"--vocabulary", "vocabulary", "key=value vocabulary file"},
    {"--nb", "nb", "principal components N_b"},
    {"--variants", "variants", "ablation variants, comma-separated"},
    {"--refit-pca", "refit_pca", "refit PCA on sampling-time keys (ablation)"},
    {"--refine", "refine", "fixed-point refinement iterations per inversion step"},
    {"--count", "count", "images to generate (gen-corpus)"},
    {"--max-objects", "max_objects", "object cap per image (gen-corpus)"},
    {"--iterations", "iterations", "training iterations"},
    {"--batch", "batch", "training batch size"},
    {"--lr", "lr", "training learning rate"},
    {"--holdout", "holdout", "validation fraction of the corpus (train-toy)"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layout-preserving guided diffusion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pg_version());
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file; flags override it");
  std::map<std::string, std::string> values;
  for (const auto& f : kFlags) app.add_option(f.name, values[f.key], f.help);

  const char* verbs[][2] = {{"gen-corpus", "render a synthetic corpus with exact layouts"},
                            {"train-toy", "train the toy denoiser on a corpus"},
                            {"stage1", "extract prototypes for every image"},
                            {"stage2", "generate scenario images with prototype guidance"},
                            {"ablate", "run stage 2 once per guidance variant"},
                            {"evaluate", "region PSNR/SSIM of generated against original images"}};
  for (const auto& v : verbs) app.add_subcommand(v[0], v[1])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  pg_session* session = nullptr;
  if (pg_session_create(&session) != PG_OK) {
    std::fprintf(stderr, "error: cannot create session\n");
    return 1;
  }
  pg_status st = PG_OK;
  if (!config_path.empty()) st = pg_config_load(session, config_path.c_str());
  for (const auto& f : kFlags) {
    if (st != PG_OK) break;
    if (app.count(f.name) > 0) st = pg_config_set(session, f.key, values[f.key].c_str());
  }
  if (st == PG_OK) st = pg_run(session, app.get_subcommands().front()->get_name().c_str());

  int processed = 0, failed = 0, skipped = 0;
  pg_run_counts(session, &processed, &failed, &skipped);
  if (st == PG_OK || st == PG_PARTIAL) {
    std::fprintf(stderr, "%d processed, %d failed, %d skipped\n", processed, failed, skipped);
  } else {
    std::fprintf(stderr, "error (%s): %s\n", pg_status_string(st), pg_session_last_error(session));
  }
  pg_session_destroy(session);
  return exit_code(st);
}
