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

#include "pipeline/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "backends/analytic_backend.hpp"
#include "backends/checkpoint.hpp"
#include "backends/corpus.hpp"
#include "backends/trainer.hpp"
#include "layout/prompt.hpp"
#include "prototypes/prototypes.hpp"

namespace fs = std::filesystem;

namespace pg {

namespace {

constexpr int kAnalyticRefine = 100;
constexpr double kAnalyticRefineTol = 1e-12;
constexpr int kToyRefine = 2;

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void require_dir(const std::string& dir, const std::string& what) {
  require(!dir.empty(), ErrorKind::Configuration, what + " directory not set");
  require(fs::is_directory(dir), ErrorKind::Configuration, what + " directory " + dir + " does not exist");
}

fs::path prepare_out(const RunConfig& config) {
  require(!config.out.empty(), ErrorKind::Configuration, "output directory not set (--out)");
  fs::create_directories(config.out);
  return fs::path(config.out);
}

void write_provenance(const fs::path& out, const RunConfig& config, const std::string& verb) {
  nlohmann::json j = config.to_json();
  j["verb"] = verb;
  j["config_hash"] = config.hash();
  write_json(out / "run_config.json", j);
}

// Runs fn(i) for i in [0, n); one thread per worker, index order preserved in
// results by the caller.
void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

int effective_workers(const RunConfig& config, const DenoiserBackend& backend) {
  if (config.workers > 1 && !backend.capabilities().concurrent_inference) {
    spdlog::warn("backend {} is not safe for concurrent inference; running with one worker", backend.name());
    return 1;
  }
  return config.workers;
}

struct Loaded {
  RgbImage image;
  Layout layout;
};

Loaded load_input(const ImageInput& in, const Vocabulary& vocab) {
  Loaded l;
  l.image = read_png(in.image_path);
  l.layout = parse_kitti_labels(read_text(in.label_path), l.image.width, l.image.height, vocab);
  l.layout.source = in.label_path;
  return l;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// Records a per-image failure without aborting the batch.
struct FailureLog {
  std::mutex mu;
  nlohmann::json entries = nlohmann::json::array();
  void add(const std::string& stem, const std::exception& e) {
    std::lock_guard<std::mutex> lock(mu);
    const auto* pe = dynamic_cast<const Error*>(&e);
    entries.push_back({{"stem", stem}, {"kind", pe ? to_string(pe->kind()) : "internal"}, {"error", e.what()}});
    spdlog::error("{}: {}", stem, e.what());
  }
};

int first_image_size(const std::vector<ImageInput>& inputs, int& w, int& h) {
  for (const auto& in : inputs) {
    try {
      const RgbImage img = read_png(in.image_path);
      w = img.width;
      h = img.height;
      return 1;
    } catch (const Error&) {
    }
  }
  return 0;
}

}  // namespace

std::uint64_t image_seed(std::uint64_t seed, const std::string& stem) {
  return fnv1a_bytes(stem.data(), stem.size(), 1469598103934665603ull ^ (seed * 0x9e3779b97f4a7c15ull));
}

std::vector<ImageInput> pair_inputs(const std::string& images, const std::string& labels, RunSummary& summary) {
  require_dir(images, "image");
  require_dir(labels, "label");
  std::map<std::string, std::string> imgs, labs;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".png") imgs[e.path().stem().string()] = e.path().string();
  for (const auto& e : fs::directory_iterator(labels))
    if (e.is_regular_file() && e.path().extension() == ".txt") labs[e.path().stem().string()] = e.path().string();
  std::vector<ImageInput> out;
  nlohmann::json unpaired = nlohmann::json::array();
  for (const auto& [stem, path] : imgs) {
    auto it = labs.find(stem);
    if (it == labs.end()) {
      spdlog::warn("{}: image has no label file; skipped", stem);
      unpaired.push_back(path);
      ++summary.skipped;
      continue;
    }
    out.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : labs)
    if (!imgs.count(stem)) {
      spdlog::warn("{}: label file has no image; skipped", stem);
      unpaired.push_back(path);
      ++summary.skipped;
    }
  if (!unpaired.empty()) summary.details["unpaired"] = unpaired;
  return out;
}

Vocabulary load_vocabulary(const RunConfig& config) {
  if (config.vocabulary.empty()) return Vocabulary{};
  return Vocabulary::from_file(config.vocabulary);
}

std::unique_ptr<DenoiserBackend> make_backend(const RunConfig& config, int image_width, int image_height) {
  if (config.backend == "analytic") {
    AnalyticConfig ac;
    ac.width = image_width;
    ac.height = image_height;
    return std::make_unique<AnalyticBackend>(ac, NoiseSchedule(1000, 1));
  }
  require(fs::is_regular_file(config.backend), ErrorKind::Configuration,
          "backend must be 'analytic' or a toy checkpoint path; " + config.backend + " not found");
  return load_checkpoint(config.backend);
}

PrototypeStore extract_image(const std::string& stem, const RgbImage& image, const Layout& layout,
                             const DenoiserBackend& backend, const RunConfig& config, const Vocabulary& vocab) {
  const auto& caps = backend.capabilities();
  require(image.width == caps.image_width && image.height == caps.image_height, ErrorKind::Parameter,
          stem + ": image is " + std::to_string(image.width) + "x" + std::to_string(image.height) + ", backend expects " +
              std::to_string(caps.image_width) + "x" + std::to_string(caps.image_height));
  const GuidanceConfig& g = config.guidance;
  const NoiseSchedule schedule = backend.schedule().with_ddim_steps(g.n_t);
  const int np = g.guided_steps();
  const Prompt prompt = build_prompt(layout, vocab);
  Condition cond;
  cond.concepts = prompt.concepts;

  InversionOptions opt;
  opt.capture_steps = np;
  const bool analytic = backend.name() == "analytic";
  opt.refine_iterations = config.refine_iterations >= 0 ? config.refine_iterations
                                                        : (analytic ? kAnalyticRefine : kToyRefine);
  opt.refine_tolerance = analytic ? kAnalyticRefineTol : 1e-6;
  const LatentTrajectory traj = invert(to_latent(image), cond, schedule, backend, opt);

  PrototypeStore s;
  s.stem = stem;
  s.prompt = prompt.text;
  s.concepts = prompt.concepts;
  s.labels = serialize_kitti_labels(layout);
  s.image_width = image.width;
  s.image_height = image.height;
  s.downsample = caps.downsample;
  s.n_t = g.n_t;
  s.n_p = np;
  s.n_b = config.n_b;
  s.grid_height = caps.feature_height;
  s.grid_width = caps.feature_width;
  s.tau = g.tau;
  s.sigma = g.sigma;
  s.config = config.to_json();
  // The output location is not part of what the store depends on.
  s.config.erase("out");
  s.config_hash = config.hash();

  // One concept mask for all guided steps: each word's cross map averaged
  // over the captured steps.
  const std::size_t n_maps = traj.features.empty() ? 0 : traj.features.begin()->second.cross_maps.size();
  std::vector<GridMap> avg(n_maps, GridMap(s.grid_height, s.grid_width, 0.0));
  std::map<int, PrincipalComponents> comps;
  for (const auto& [k, rec] : traj.features) {
    PrincipalComponents pc = fit_pca(rec.self_keys, config.n_b);
    pc.step = k;
    comps[k] = std::move(pc);
    for (std::size_t c = 0; c < n_maps; ++c)
      for (std::size_t i = 0; i < avg[c].size(); ++i) avg[c].data[i] += rec.cross_maps[c].data[i] / traj.features.size();
  }
  if (n_maps > 0) {
    ConceptMask cm = concept_mask(avg);
    s.raw_mask = cm.values;
    s.mask_constant = cm.any_constant();
    if (s.mask_constant) spdlog::warn("{}: a concept cross-attention map is constant", stem);
  } else {
    s.raw_mask = GridMap(s.grid_height, s.grid_width, 0.0);
  }
  const GridLayout grid = to_grid(layout, image.width, image.height, caps.downsample);
  s.updated_mask = update_mask(s.raw_mask, grid, g.sigma);
  s.entries = extract_prototypes(comps, s.updated_mask, g.tau, np);
  for (int j = g.n_t - np + 1; j <= g.n_t; ++j) s.latents[j] = traj.latents[j];
  s.latents[g.n_t] = traj.latents[g.n_t];
  return s;
}

Generation generate_image(const std::string& stem, const RgbImage& original, const Layout& layout,
                          const PrototypeStore* store, const DenoiserBackend& backend, const RunConfig& config,
                          Mode mode, const Vocabulary& vocab) {
  const auto& caps = backend.capabilities();
  require(original.width == caps.image_width && original.height == caps.image_height, ErrorKind::Parameter,
          stem + ": image size does not match the backend");
  GuidanceConfig g = config.guidance;
  Prompt prompt = build_prompt(layout, vocab);
  if (!config.scenario.empty() && config.scenario != "clean") prompt = apply_scenario(prompt, config.scenario, vocab);
  Condition cond;
  cond.concepts = prompt.concepts;
  if (prompt.scenario) cond.scenario = *prompt.scenario;

  Generation out;
  out.prompt = prompt.text;
  Tensor3 initial;
  GuidanceState state;
  GuidanceHook hook;
  if (mode == Mode::PromptOnly) {
    g.guidance = false;
    const auto& c = backend.capabilities();
    initial = gaussian_latent(c.channels, c.height, c.width, image_seed(g.seed, stem));
  } else {
    require(store != nullptr, ErrorKind::Configuration, stem + ": guided mode needs a prototype store");
    require(store->n_t == g.n_t, ErrorKind::Store,
            stem + ": store was built with " + std::to_string(store->n_t) + " steps, run uses " + std::to_string(g.n_t));
    if (g.guided_steps() > store->n_p)
      spdlog::warn("{}: store holds {} guided steps, fewer than the {} requested", stem, store->n_p, g.guided_steps());
    g.n_p = std::min(g.guided_steps(), store->n_p);
    initial = store->latents.at(store->n_t);
    if (mode == Mode::Off) {
      g.guidance = false;
    } else {
      const bool sa = mode == Mode::Full || mode == Mode::SaOnly || mode == Mode::SaRaw;
      const bool sl = mode == Mode::Full || mode == Mode::SlOnly;
      state = make_guidance_state(*store, layout, caps, g.tau, mode == Mode::SaRaw ? MaskSource::Raw : MaskSource::Updated,
                                  sa, sl, config.refit_pca);
      hook = [&](const Tensor3& z, int k, int t) {
        StepGuidanceResult r = assemble_step_guidance(z, k, t, state, backend, cond, g);
        out.steps.push_back(r.log);
        return std::move(r.grads);
      };
    }
  }
  const NoiseSchedule schedule = backend.schedule().with_ddim_steps(g.n_t);
  const SampleResult res = sample(initial, cond, schedule, backend, hook, g);
  out.image = to_rgb(res.final_latent);
  out.report = evaluate_pair(original, out.image, layout);
  return out;
}

RunSummary run_gen_corpus(const RunConfig& config) {
  const fs::path out = prepare_out(config);
  std::optional<std::string> scenario;
  if (!config.scenario.empty()) scenario = config.scenario;
  const ToyCorpusSpec spec;
  if (scenario)
    require(std::find(spec.scenarios.begin(), spec.scenarios.end(), *scenario) != spec.scenarios.end(),
            ErrorKind::Configuration, "corpus scenario must be one of clean, snow, fog, night, defocus");
  const auto samples = generate_toy_corpus(spec, config.count, config.guidance.seed, scenario, config.max_objects);
  write_corpus(out.string(), samples, config.guidance.seed);
  write_provenance(out, config, "gen-corpus");
  RunSummary s;
  s.processed = static_cast<int>(samples.size());
  spdlog::info("wrote {} samples to {}", samples.size(), out.string());
  return s;
}

RunSummary run_train_toy(const RunConfig& config) {
  std::string dir = config.corpus;
  if (dir.empty() && !config.images.empty()) {
    const fs::path p(config.images);
    dir = fs::exists(p / "manifest.json") ? p.string() : p.parent_path().string();
  }
  require(!dir.empty() && fs::exists(fs::path(dir) / "manifest.json"), ErrorKind::Configuration,
          "train-toy needs a corpus directory with manifest.json (--corpus)");
  const fs::path out = prepare_out(config);
  auto data = load_corpus(dir);
  require(!data.empty(), ErrorKind::Configuration, "corpus " + dir + " is empty");
  const std::size_t n_val = static_cast<std::size_t>(std::floor(config.holdout * data.size()));
  std::vector<ToySample> val(data.end() - static_cast<std::ptrdiff_t>(n_val), data.end());
  data.resize(data.size() - n_val);

  ToyUNetConfig arch;
  arch.image_width = data.front().image.width;
  arch.image_height = data.front().image.height;
  const NoiseSchedule schedule(1000, 1);
  TrainSpec spec;
  spec.iterations = config.iterations;
  spec.batch = config.batch;
  spec.learning_rate = config.learning_rate;
  spec.seed = config.guidance.seed + 1;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train_toy_denoiser(data, arch, schedule, spec, config.guidance.seed, [&](int it, double loss) {
    if (it % 250 == 0)
      spdlog::info("iteration {} smoothed loss {:.4f} ({:.0f}s)", it, loss,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.log.write_csv((out / "training_log.csv").string());
  nlohmann::json extra{{"iterations", spec.iterations}, {"batch", spec.batch}, {"lr", spec.learning_rate},
                       {"corpus", dir}, {"train_samples", data.size()}, {"seconds", seconds}};
  save_checkpoint((out / "toy.pgck").string(), r.net, schedule, extra);
  RunSummary s;
  s.processed = static_cast<int>(data.size());
  if (!val.empty()) {
    ToyBackend backend(r.net, schedule);
    const EpsilonEval e = evaluate_epsilon_mse(backend, val, 4, config.guidance.seed + 2);
    s.details["validation"] = {{"images", val.size()}, {"eps_mse", e.model_mse}, {"zero_mse", e.zero_mse},
                               {"ratio", e.ratio()}};
    spdlog::info("validation eps-MSE {:.4f} (zero predictor {:.4f}, ratio {:.3f})", e.model_mse, e.zero_mse, e.ratio());
  }
  s.details["seconds"] = seconds;
  write_json(out / "training_summary.json", s.details);
  write_provenance(out, config, "train-toy");
  return s;
}

RunSummary run_stage1(const RunConfig& config) {
  RunSummary s;
  const auto inputs = pair_inputs(config.images, config.labels, s);
  const fs::path out = prepare_out(config);
  fs::create_directories(out / "stores");
  fs::create_directories(out / "masks");
  write_provenance(out, config, "stage1");
  const Vocabulary vocab = load_vocabulary(config);
  int w = 0, h = 0;
  if (!first_image_size(inputs, w, h)) {
    s.failed = static_cast<int>(inputs.size());
    return s;
  }
  const auto backend = make_backend(config, w, h);
  FailureLog failures;
  std::vector<nlohmann::json> timing(inputs.size());
  std::atomic<int> done{0};
  parallel_for(static_cast<int>(inputs.size()), effective_workers(config, *backend), [&](int i) {
    const auto& in = inputs[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Loaded l = load_input(in, vocab);
      const PrototypeStore store = extract_image(in.stem, l.image, l.layout, *backend, config, vocab);
      save_prototype_store((out / "stores" / (in.stem + ".pgps")).string(), store);
      write_mask_pgm((out / "masks" / (in.stem + "_raw.pgm")).string(), store.raw_mask, 0.0, 1.0);
      write_mask_pgm((out / "masks" / (in.stem + "_updated.pgm")).string(), store.updated_mask, 0.0, 2.0);
      write_mask_pgm((out / "masks" / (in.stem + "_selected.pgm")).string(), binarize(store.updated_mask, store.tau));
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      timing[i] = {{"stem", in.stem}, {"seconds", sec}, {"objects", l.layout.boxes.size()}};
      spdlog::info("stage1 {} ({}/{}) {:.2f}s", in.stem, ++done, inputs.size(), sec);
    } catch (const std::exception& e) {
      failures.add(in.stem, e);
    }
  });
  s.failed = static_cast<int>(failures.entries.size());
  s.processed = static_cast<int>(inputs.size()) - s.failed;
  nlohmann::json t = nlohmann::json::array();
  for (auto& j : timing)
    if (!j.is_null()) t.push_back(j);
  s.details["images"] = t;
  s.details["failures"] = failures.entries;
  write_json(out / "stage1_summary.json", s.details);
  return s;
}

namespace {

struct Stage2Result {
  RunSummary summary;
  std::vector<ReportRow> rows;
  double mean_selected_cells = 0.0;
};

Stage2Result stage2_once(const RunConfig& config, const fs::path& out, const std::vector<ImageInput>& inputs,
                         const DenoiserBackend& backend, Mode mode, const Vocabulary& vocab) {
  Stage2Result res;
  fs::create_directories(out / "images");
  fs::create_directories(out / "logs");
  write_provenance(out, config, "stage2");
  if (mode != Mode::PromptOnly) require_dir(config.stores, "prototype store");
  FailureLog failures;
  std::vector<std::optional<ReportRow>> rows(inputs.size());
  std::vector<double> cells(inputs.size(), -1.0);
  std::atomic<int> done{0};
  const std::string method = variant_name(mode);
  parallel_for(static_cast<int>(inputs.size()), effective_workers(config, backend), [&](int i) {
    const auto& in = inputs[i];
    try {
      const Loaded l = load_input(in, vocab);
      std::optional<PrototypeStore> store;
      if (mode != Mode::PromptOnly) {
        store = load_prototype_store((fs::path(config.stores) / (in.stem + ".pgps")).string());
        GridMask sel = binarize(mode == Mode::SaRaw ? store->raw_mask : store->updated_mask, config.guidance.tau);
        double n = 0;
        for (auto v : sel.data) n += v;
        cells[i] = n;
      }
      const auto t0 = std::chrono::steady_clock::now();
      Generation gen = generate_image(in.stem, l.image, l.layout, store ? &*store : nullptr, backend, config, mode, vocab);
      write_png((out / "images" / (in.stem + ".png")).string(), gen.image);
      std::string log;
      for (const auto& st : gen.steps) log += format_step_log(st) + "\n";
      write_text(out / "logs" / (in.stem + ".jsonl"), log);
      rows[i] = ReportRow{in.stem, method, config.scenario.empty() ? "clean" : config.scenario, gen.report};
      spdlog::info("stage2[{}] {} ({}/{}) {:.2f}s", method, in.stem, ++done, inputs.size(),
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } catch (const std::exception& e) {
      failures.add(in.stem, e);
    }
  });
  std::string metrics, merged;
  double cell_sum = 0.0;
  int cell_n = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (cells[i] >= 0) {
      cell_sum += cells[i];
      ++cell_n;
    }
    if (!rows[i]) continue;
    nlohmann::json j = to_json(rows[i]->report);
    j["stem"] = rows[i]->stem;
    j["method"] = rows[i]->method;
    j["scenario"] = rows[i]->scenario;
    metrics += j.dump() + "\n";
    const fs::path lp = out / "logs" / (inputs[i].stem + ".jsonl");
    for (const auto& line : split_list(read_text(lp.string()), '\n'))
      merged += nlohmann::json{{"stem", inputs[i].stem}, {"record", nlohmann::json::parse(line)}}.dump() + "\n";
    res.rows.push_back(*rows[i]);
  }
  write_text(out / "metrics.jsonl", metrics);
  write_text(out / "guidance_log.jsonl", merged);
  res.summary.failed = static_cast<int>(failures.entries.size());
  res.summary.processed = static_cast<int>(res.rows.size());
  res.summary.details["summary"] = summarize_reports(res.rows);
  res.summary.details["failures"] = failures.entries;
  res.mean_selected_cells = cell_n ? cell_sum / cell_n : 0.0;
  if (cell_n) res.summary.details["mean_selected_cells"] = res.mean_selected_cells;
  write_json(out / "summary.json", res.summary.details);
  return res;
}

struct Stage2Setup {
  std::vector<ImageInput> inputs;
  std::unique_ptr<DenoiserBackend> backend;
  Vocabulary vocab;
};

Stage2Setup stage2_setup(const RunConfig& config, RunSummary& s) {
  Stage2Setup st;
  st.inputs = pair_inputs(config.images, config.labels, s);
  st.vocab = load_vocabulary(config);
  if (!config.scenario.empty() && config.scenario != "clean")
    require(st.vocab.has_scenario(config.scenario), ErrorKind::Configuration,
            "scenario '" + config.scenario + "' is not in the vocabulary");
  int w = 0, h = 0;
  if (first_image_size(st.inputs, w, h)) st.backend = make_backend(config, w, h);
  return st;
}

std::string dir_name(Mode m) {
  switch (m) {
    case Mode::PromptOnly: return "prompt-only";
    case Mode::SaRaw: return "g_sa";
    case Mode::SaOnly: return "g_sa_prototypes";
    case Mode::Full: return "full";
    default: return mode_name(m);
  }
}

void merge(RunSummary& into, const RunSummary& from) {
  into.processed += from.processed;
  into.failed += from.failed;
}

}  // namespace

RunSummary run_stage2(const RunConfig& config) {
  RunSummary s;
  const fs::path out = prepare_out(config);
  Stage2Setup st = stage2_setup(config, s);
  if (!st.backend) {
    s.failed = static_cast<int>(st.inputs.size());
    return s;
  }
  if (config.tau_sweep.empty()) {
    Stage2Result r = stage2_once(config, out, st.inputs, *st.backend, config.mode, st.vocab);
    merge(s, r.summary);
    s.details = r.summary.details;
    return s;
  }
  nlohmann::json sweep = nlohmann::json::array();
  for (double tau : config.tau_sweep) {
    RunConfig c = config;
    c.guidance.tau = tau;
    Stage2Result r = stage2_once(c, out / ("tau_" + format_double(tau)), st.inputs, *st.backend, config.mode, st.vocab);
    merge(s, r.summary);
    std::vector<std::optional<Psnr>> po;
    for (const auto& row : r.rows) po.push_back(row.report.psnr_object);
    const auto mean = mean_finite_psnr(po);
    sweep.push_back({{"tau", tau}, {"mean_selected_cells", r.mean_selected_cells},
                     {"psnr_object", mean ? nlohmann::json(*mean) : nlohmann::json(nullptr)}});
  }
  s.details["tau_sweep"] = sweep;
  write_json(out / "tau_sweep.json", sweep);
  write_provenance(out, config, "stage2");
  return s;
}

RunSummary run_ablation(const RunConfig& config) {
  RunSummary s;
  const fs::path out = prepare_out(config);
  Stage2Setup st = stage2_setup(config, s);
  if (!st.backend) {
    s.failed = static_cast<int>(st.inputs.size());
    return s;
  }
  // Table rows follow the canonical variant order regardless of request order.
  const std::vector<Mode> order{Mode::PromptOnly, Mode::SaRaw, Mode::SaOnly, Mode::Full, Mode::Off, Mode::SlOnly};
  std::vector<Mode> variants;
  for (Mode m : order)
    if (std::find(config.variants.begin(), config.variants.end(), m) != config.variants.end()) variants.push_back(m);
  nlohmann::json table = nlohmann::json::array();
  std::string csv = "variant,images,psnr_object,ssim_object,psnr_background,ssim_background\n";
  auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string("") : v.dump(); };
  for (Mode m : variants) {
    Stage2Result r = stage2_once(config, out / dir_name(m), st.inputs, *st.backend, m, st.vocab);
    merge(s, r.summary);
    const auto summary = summarize_reports(r.rows);
    nlohmann::json row{{"variant", variant_name(m)}};
    if (!summary.empty()) {
      for (const char* k : {"images", "psnr_object", "ssim_object", "psnr_background", "ssim_background"})
        row[k] = summary[0][k];
    }
    csv += variant_name(m) + "," + cell(row.value("images", nlohmann::json())) + "," +
           cell(row.value("psnr_object", nlohmann::json())) + "," + cell(row.value("ssim_object", nlohmann::json())) +
           "," + cell(row.value("psnr_background", nlohmann::json())) + "," +
           cell(row.value("ssim_background", nlohmann::json())) + "\n";
    table.push_back(row);
  }
  s.details["ablation"] = table;
  write_json(out / "ablation.json", table);
  write_text(out / "ablation.csv", csv);
  write_provenance(out, config, "ablate");
  return s;
}

RunSummary run_evaluate(const RunConfig& config) {
  RunSummary s;
  const auto inputs = pair_inputs(config.images, config.labels, s);
  require_dir(config.generated, "generated image");
  const fs::path out = prepare_out(config);
  const Vocabulary vocab = load_vocabulary(config);
  const std::string method = fs::path(config.generated).lexically_normal().filename().string();
  std::vector<ReportRow> rows;
  std::string metrics;
  FailureLog failures;
  for (const auto& in : inputs) {
    try {
      const Loaded l = load_input(in, vocab);
      const RgbImage gen = read_png((fs::path(config.generated) / (in.stem + ".png")).string());
      ReportRow row{in.stem, method, config.scenario.empty() ? "clean" : config.scenario,
                    evaluate_pair(l.image, gen, l.layout)};
      nlohmann::json j = to_json(row.report);
      j["stem"] = row.stem;
      j["method"] = row.method;
      j["scenario"] = row.scenario;
      metrics += j.dump() + "\n";
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      failures.add(in.stem, e);
    }
  }
  write_text(out / "metrics.jsonl", metrics);
  s.processed = static_cast<int>(rows.size());
  s.failed = static_cast<int>(failures.entries.size());
  s.details["summary"] = summarize_reports(rows);
  s.details["failures"] = failures.entries;
  write_json(out / "summary.json", s.details);
  write_provenance(out, config, "evaluate");
  return s;
}

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"gen-corpus", "train-toy", "stage1", "stage2", "ablate", "evaluate"};
  return v;
}

RunSummary run_verb(const std::string& verb, const RunConfig& config) {
  if (verb == "gen-corpus") return run_gen_corpus(config);
  if (verb == "train-toy") return run_train_toy(config);
  if (verb == "stage1") return run_stage1(config);
  if (verb == "stage2") return run_stage2(config);
  if (verb == "ablate") return run_ablation(config);
  if (verb == "evaluate") return run_evaluate(config);
  fail(ErrorKind::Configuration, "unknown verb '" + verb + "'");
}

}  // namespace pg
