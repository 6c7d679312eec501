#include "dic/cli.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <thread>
#include <atomic>

#include <CLI11.hpp>
#include <json.hpp>

#include "dic/bench.hpp"
#include "dic/error.hpp"
#include "dic/latent.hpp"
#include "dic/metrics.hpp"
#include "dic/text.hpp"

namespace dic {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// EditConfig
// ---------------------------------------------------------------------------

void EditConfig::validate() const {
  if (steps < 1) throw ConfigError("--steps must be >= 1");
  if (schedule_steps < steps) throw ConfigError("--schedule-steps must be >= --steps");
  guidance().validate();
  if (model != "analytic" && model != "tiny-unet") throw ConfigError("unknown model '" + model + "'");
  if (layers < 1) throw ConfigError("--layers must be >= 1");
  if (!(k_src > 0.0 && k_src < 1.0) || !(k_tgt > 0.0 && k_tgt < 1.0)) {
    throw ConfigError("--k-src and --k-tgt must lie in (0, 1)");
  }
  if (!(sdedit_start > 0.0 && sdedit_start <= 1.0)) throw ConfigError("--sdedit-start must lie in (0, 1]");
  if (jobs < 1) throw ConfigError("--jobs must be >= 1");
  if (blend_src.empty() != blend_tgt.empty()) throw ConfigError("--blend-src and --blend-tgt go together");
  if (tau_c < -1 || self_start < -1 || self_layer < -1) throw ConfigError("control parameters must be >= 0");
  DistancePolicy::parse(policy);
  control(steps).validate(steps, layers);
  make_schedule(schedule_steps, beta_start, beta_end);
}

NoiseSchedule EditConfig::schedule() const { return schedule(steps); }

NoiseSchedule EditConfig::schedule(int steps_override) const {
  const NoiseSchedule base = make_schedule(schedule_steps, beta_start, beta_end);
  return steps_override == schedule_steps ? base : subsample(base, steps_override);
}

ControlSchedule EditConfig::control(int steps_override) const {
  ControlSchedule c = ControlSchedule::defaults(steps_override, layers);
  if (tau_c >= 0) c.tau_c = tau_c;
  if (self_start >= 0) c.self_start = self_start;
  if (self_layer >= 0) c.self_layer = static_cast<std::size_t>(self_layer);
  c.cross_enabled = cross_control;
  c.self_enabled = self_control;
  c.harmonic = harmonic;
  c.literal_self_edit = self_edit_literal;
  return c;
}

EditOptions EditConfig::edit_options(int steps_override) const {
  EditOptions o;
  o.guidance = guidance();
  o.policy = DistancePolicy::parse(policy);
  o.control = control(steps_override);
  if (!blend_src.empty()) o.blend = BlendWords{blend_src, blend_tgt, k_src, k_tgt};
  return o;
}

std::unique_ptr<Denoiser> make_model(const EditConfig& cfg, const NoiseSchedule& schedule) {
  if (cfg.model == "tiny-unet") {
    TinyModelConfig tc;
    tc.layers = cfg.layers;
    tc.seed = cfg.model_seed;
    return std::make_unique<TinyAttentionModel>(tc);
  }
  return std::make_unique<AnalyticGaussianModel>(make_reference(cfg, schedule));
}

AnalyticGaussianModel make_reference(const EditConfig& cfg, const NoiseSchedule& schedule) {
  AnalyticModelConfig ac;
  ac.seed = cfg.model_seed;
  return AnalyticGaussianModel(schedule, ac);
}

// ---------------------------------------------------------------------------

namespace {

struct CliState {
  EditConfig cfg;
  bool no_cross = false;
  bool no_self = false;
  bool no_harmonic = false;
  CLI::Option* model_seed_opt = nullptr;

  std::filesystem::path manifest;
  std::vector<std::string> methods{"dic", "ddim", "sdedit"};
  bool synthesize_latents = false;
  bool from_wav = false;

  bool policies = false;
  bool guidance_grid = false;

  CLI::App* edit = nullptr;
  CLI::App* invert = nullptr;
  CLI::App* reconstruct = nullptr;
  CLI::App* bench = nullptr;
  CLI::App* ablate = nullptr;
  CLI::App* demo = nullptr;
};

void build_app(CLI::App& app, CliState& s) {
  EditConfig& c = s.cfg;
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags override its values");

  app.add_option("--steps", c.steps, "Denoising steps T")->capture_default_str();
  app.add_option("--schedule-steps", c.schedule_steps, "Length of the base linear-beta schedule that --steps subsamples")
      ->capture_default_str();
  app.add_option("--beta-start", c.beta_start, "First beta of the base schedule")->capture_default_str();
  app.add_option("--beta-end", c.beta_end, "Last beta of the base schedule")->capture_default_str();
  app.add_option("--model", c.model, "Noise predictor")
      ->check(CLI::IsMember({"analytic", "tiny-unet"}))
      ->capture_default_str();
  app.add_option("--seed", c.seed, "Run seed for synthesized latents and noise draws (env DIC_SEED)")
      ->envname("DIC_SEED")
      ->capture_default_str();
  s.model_seed_opt =
      app.add_option("--model-seed", c.model_seed, "Seed for model weights, prompt means and embeddings (default: --seed)");
  app.add_option("--layers", c.layers, "Attention layers of the tiny model")->capture_default_str();

  app.add_option("--inv-guidance", c.omega_inverse, "Guidance scale during inversion")->capture_default_str();
  app.add_option("--guidance", c.omega_forward, "Guidance scale during denoising")->capture_default_str();
  app.add_option("--policy", c.policy, "Distance policy: 'src' or three selectors over src,tgt,har,0 (e.g. src,0,tgt)")
      ->capture_default_str();
  app.add_option("--sdedit-start", c.sdedit_start, "SDEdit start fraction of T")->capture_default_str();

  app.add_option("--tau-c", c.tau_c, "Cross control active while t >= tau_c (default 0.6 T; T+1 disables)");
  app.add_option("--self-start", c.self_start, "Self control starts after this many steps (default 0.2 T)");
  app.add_option("--self-layer", c.self_layer, "First layer with self control (default layers/2)");
  app.add_option("--k-src", c.k_src, "Blend threshold on source attention")->capture_default_str();
  app.add_option("--k-tgt", c.k_tgt, "Blend threshold on target attention")->capture_default_str();
  app.add_flag("--self-edit-literal", c.self_edit_literal,
               "Use the full source triple while self control is active");
  app.add_flag("--no-cross-control", s.no_cross, "Disable cross-attention control and local blend");
  app.add_flag("--no-self-control", s.no_self, "Disable mutual self-attention control");
  app.add_flag("--no-harmonic", s.no_harmonic, "Drop the harmonic branch (dual-branch control)");

  app.add_option("--src-prompt", c.src_prompt, "Source prompt")->capture_default_str();
  app.add_option("--tgt-prompt", c.tgt_prompt, "Target prompt")->capture_default_str();
  app.add_option("--blend-src", c.blend_src, "Source blend word (repeatable)");
  app.add_option("--blend-tgt", c.blend_tgt, "Target blend word (repeatable)");

  app.add_option("--input", c.input, "Input latent (.dicl)")->check(CLI::ExistingFile);
  app.add_flag("--synthesize", c.synthesize, "Synthesize the input latent from the source prompt and --seed");
  app.add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--record-timings", c.record_timings, "Add wall-clock timings to JSON reports");
  app.add_option("--jobs", c.jobs, "Worker threads for bench and ablate")->capture_default_str();

  s.edit = app.add_subcommand("edit", "Edit a latent from the source to the target prompt");
  s.invert = app.add_subcommand("invert", "Invert a latent to z_T");
  s.reconstruct = app.add_subcommand("reconstruct", "Invert then regenerate with the source prompt");
  s.bench = app.add_subcommand("bench", "Evaluate methods over a benchmark manifest");
  s.bench->add_option("--manifest", s.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  s.bench->add_option("--methods", s.methods, "Comma-separated subset of dic,ddim,sdedit")
      ->delimiter(',')
      ->capture_default_str();
  auto* synth = s.bench->add_flag("--synthesize-latents", s.synthesize_latents,
                                  "Derive each entry's latent from its id and --seed");
  s.bench->add_flag("--from-wav", s.from_wav, "Read audio_path as 16 kHz mono WAV through a log-mel frontend")
      ->excludes(synth);
  s.ablate = app.add_subcommand("ablate", "Distance-policy and guidance-grid ablations");
  s.ablate->add_flag("--policies", s.policies, "Run the six distance policies");
  s.ablate->add_flag("--guidance-grid", s.guidance_grid, "Run the 4x4 (inverse, forward) guidance grid");
  s.demo = app.add_subcommand("demo-error-accumulation",
                              "Reconstruction error of plain DDIM vs DIC over guidance and step grids");
  for (auto* sub : {s.edit, s.invert, s.reconstruct, s.bench, s.ablate, s.demo}) sub->fallthrough();
}

void finalize(CliState& s) {
  EditConfig& c = s.cfg;
  c.cross_control = !s.no_cross;
  c.self_control = !s.no_self;
  c.harmonic = !s.no_harmonic;
  if (s.model_seed_opt->count() == 0) c.model_seed = c.seed;
  c.validate();
}

// ---------------------------------------------------------------------------

class Timings {
 public:
  explicit Timings(bool enabled) : enabled_(enabled) {}
  template <class F>
  auto measure(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    auto result = f();
    if (enabled_) {
      entries_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return result;
  }
  void attach(ordered_json& report) const {
    if (!enabled_) return;
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : entries_) t[k] = v;
    report["timings_seconds"] = t;
  }

 private:
  bool enabled_;
  std::map<std::string, double> entries_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::filesystem::path prepare_out_dir(const EditConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out_dir.string() + "': " + ec.message());
  return c.out_dir;
}

ordered_json config_json(const EditConfig& c) {
  ordered_json j;
  j["steps"] = c.steps;
  j["schedule_steps"] = c.schedule_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["omega_inverse"] = c.omega_inverse;
  j["omega_forward"] = c.omega_forward;
  const ControlSchedule ctl = c.control(c.steps);
  j["tau_c"] = ctl.tau_c;
  j["self_start"] = ctl.self_start;
  j["self_layer"] = ctl.self_layer;
  j["k_src"] = c.k_src;
  j["k_tgt"] = c.k_tgt;
  j["self_edit_literal"] = c.self_edit_literal;
  j["cross_control"] = c.cross_control;
  j["self_control"] = c.self_control;
  j["harmonic"] = c.harmonic;
  j["policy"] = DistancePolicy::parse(c.policy).str();
  j["model"] = c.model;
  j["seed"] = c.seed;
  j["model_seed"] = c.model_seed;
  j["layers"] = c.layers;
  j["sdedit_start"] = c.sdedit_start;
  j["src_prompt"] = c.src_prompt;
  j["tgt_prompt"] = c.tgt_prompt;
  j["blend_src"] = c.blend_src;
  j["blend_tgt"] = c.blend_tgt;
  j["input"] = c.input.empty() ? std::string("<synthesized>") : c.input.generic_string();
  return j;
}

Tensor load_input(const EditConfig& c, const AnalyticGaussianModel& reference, const PromptEmbedding& src,
                  bool synthesize_by_default) {
  if (!c.input.empty()) {
    Tensor z = read_dicl(c.input);
    const Shape expected = reference.config().geometry.shape();
    if (z.shape() != expected) {
      throw DimensionError("input latent has shape " + shape_string(z.shape()) + ", expected " +
                           shape_string(expected));
    }
    return z;
  }
  if (c.synthesize || synthesize_by_default) return synthesize_latent("input", src, reference, c.seed);
  throw ConfigError("provide --input <latent.dicl> or --synthesize");
}

ordered_json metrics_json(const Tensor& z0, const Tensor& out, const PromptEmbedding& prompt,
                          const AnalyticGaussianModel& reference) {
  ordered_json m;
  m["structure_distance_e3"] = structure_distance(z0, out);
  m["mse"] = mse(z0, out);
  m["edit_fidelity_proxy"] = edit_fidelity_proxy(out, prompt, reference);
  return m;
}

// Runs body(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure by index.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
}

// ---------------------------------------------------------------------------

int cmd_edit(const EditConfig& c) {
  const NoiseSchedule schedule = c.schedule();
  const auto model = make_model(c, schedule);
  const AnalyticGaussianModel reference = make_reference(c, schedule);
  const PromptEmbedding src = encode_prompt(c.src_prompt, c.model_seed);
  const PromptEmbedding tgt = encode_prompt(c.tgt_prompt, c.model_seed);
  const Tensor z0 = load_input(c, reference, src, false);
  const EditOptions opts = c.edit_options(c.steps);

  Timings timings(c.record_timings);
  const EditResult res = timings.measure("edit", [&] { return dic_edit(z0, src, tgt, *model, schedule, opts); });

  const auto dir = prepare_out_dir(c);
  write_dicl(dir / "edited.dicl", res.target);
  write_dicl(dir / "source_recon.dicl", res.source);

  ordered_json report;
  report["command"] = "edit";
  report["config"] = config_json(c);
  report["model"] = std::string(model->name());
  report["harmonic_active"] = res.report.harmonic_active;
  report["attention_control_active"] = res.report.attention_control_active;
  report["local_blend_active"] = res.report.local_blend_active;
  report["notes"] = res.report.notes;
  report["metrics"] = metrics_json(z0, res.target, tgt, reference);
  report["source_recon_max_abs_error"] = max_abs_diff(res.source, z0);
  ordered_json steps = ordered_json::array();
  for (const auto& s : res.report.steps) {
    ordered_json row;
    row["t"] = s.t;
    row["d_src"] = s.d_src;
    row["d_tgt"] = s.d_tgt;
    row["d_har"] = s.d_har;
    row["src_pin_error"] = s.src_pin_error;
    steps.push_back(std::move(row));
  }
  report["steps"] = std::move(steps);
  timings.attach(report);
  write_text(dir / "run_report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_invert(const EditConfig& c) {
  const NoiseSchedule schedule = c.schedule();
  const auto model = make_model(c, schedule);
  const AnalyticGaussianModel reference = make_reference(c, schedule);
  const PromptEmbedding src = encode_prompt(c.src_prompt, c.model_seed);
  const Tensor z0 = load_input(c, reference, src, false);

  Timings timings(c.record_timings);
  const auto traj =
      timings.measure("invert", [&] { return invert(z0, src, c.omega_inverse, *model, schedule); });

  const auto dir = prepare_out_dir(c);
  write_dicl(dir / "inverted.dicl", traj.at(traj.steps()));
  ordered_json report;
  report["command"] = "invert";
  report["config"] = config_json(c);
  report["model"] = std::string(model->name());
  ordered_json norms = ordered_json::array();
  for (int t = 1; t <= traj.steps(); ++t) {
    ordered_json row;
    row["t"] = t;
    row["l2_norm"] = l2_norm(traj.at(t));
    norms.push_back(std::move(row));
  }
  report["trajectory"] = std::move(norms);
  timings.attach(report);
  write_text(dir / "invert_report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_reconstruct(const EditConfig& c) {
  const NoiseSchedule schedule = c.schedule();
  const auto model = make_model(c, schedule);
  const AnalyticGaussianModel reference = make_reference(c, schedule);
  const PromptEmbedding src = encode_prompt(c.src_prompt, c.model_seed);
  const Tensor z0 = load_input(c, reference, src, false);

  Timings timings(c.record_timings);
  const Tensor rec = timings.measure("reconstruct", [&] {
    const auto traj = invert(z0, src, c.omega_inverse, *model, schedule);
    return generate(traj.at(traj.steps()), src, c.omega_forward, *model, schedule);
  });

  const auto dir = prepare_out_dir(c);
  write_dicl(dir / "reconstruction.dicl", rec);
  ordered_json report;
  report["command"] = "reconstruct";
  report["config"] = config_json(c);
  report["model"] = std::string(model->name());
  report["metrics"] = metrics_json(z0, rec, src, reference);
  timings.attach(report);
  write_text(dir / "reconstruct_report.json", report.dump(2) + "\n");
  return 0;
}

int cmd_bench(const EditConfig& c, const CliState& s) {
  const NoiseSchedule schedule = c.schedule();
  const auto model = make_model(c, schedule);
  const AnalyticGaussianModel reference = make_reference(c, schedule);
  const BenchManifest manifest = load_manifest(s.manifest);
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";

  BenchConfig bc;
  bc.methods = s.methods;
  bc.edit = c.edit_options(c.steps);
  if (c.cross_control) bc.edit.blend = BlendWords{{}, {}, c.k_src, c.k_tgt};
  bc.sdedit_start = c.sdedit_start;
  bc.seed = c.seed;
  bc.text_seed = c.model_seed;
  bc.latents = s.synthesize_latents ? LatentSource::synthesize : s.from_wav ? LatentSource::wav : LatentSource::files;
  bc.base_dir = s.manifest.parent_path();
  bc.jobs = c.jobs;

  const auto rows = run_bench(manifest, *model, reference, schedule, bc);
  const auto agg = aggregate_by_type(rows);
  const auto dir = prepare_out_dir(c);
  write_text(dir / "report.csv", report_csv(rows));
  write_text(dir / "report.json", report_json(rows));
  write_text(dir / "aggregate_by_type.csv", aggregate_csv(agg));
  write_text(dir / "aggregate_by_type.json", aggregate_json(agg));
  return 0;
}

struct AblateRow {
  std::string policy;
  double omega_inverse = 0.0;
  double omega_forward = 0.0;
  bool harmonic_active = false;
  double sd = 0.0, mse = 0.0, proxy = 0.0;
};

void write_ablate_table(const std::filesystem::path& dir, const std::string& stem, const std::vector<AblateRow>& rows,
                        bool policy_table) {
  std::string csv = policy_table ? "policy,harmonic_active,structure_distance_e3,mse,edit_fidelity_proxy\n"
                                 : "omega_inverse,omega_forward,structure_distance_e3,mse,edit_fidelity_proxy\n";
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    if (policy_table) {
      csv += "\"" + r.policy + "\"," + (r.harmonic_active ? "true" : "false") + ",";
      o["policy"] = r.policy;
      o["harmonic_active"] = r.harmonic_active;
    } else {
      csv += format_number(r.omega_inverse) + "," + format_number(r.omega_forward) + ",";
      o["omega_inverse"] = r.omega_inverse;
      o["omega_forward"] = r.omega_forward;
    }
    csv += format_number(r.sd) + "," + format_number(r.mse) + "," + format_number(r.proxy) + "\n";
    o["structure_distance_e3"] = r.sd;
    o["mse"] = r.mse;
    o["edit_fidelity_proxy"] = r.proxy;
    arr.push_back(std::move(o));
  }
  write_text(dir / (stem + ".csv"), csv);
  write_text(dir / (stem + ".json"), arr.dump(2) + "\n");
}

int cmd_ablate(const EditConfig& c, const CliState& s) {
  const bool run_policies = s.policies || !s.guidance_grid;
  const bool run_grid = s.guidance_grid || !s.policies;
  const NoiseSchedule schedule = c.schedule();
  const auto model = make_model(c, schedule);
  const AnalyticGaussianModel reference = make_reference(c, schedule);
  const PromptEmbedding src = encode_prompt(c.src_prompt, c.model_seed);
  const PromptEmbedding tgt = encode_prompt(c.tgt_prompt, c.model_seed);
  const Tensor z0 = load_input(c, reference, src, true);
  const EditOptions base = c.edit_options(c.steps);
  const auto dir = prepare_out_dir(c);

  if (run_policies) {
    const auto policies = DistancePolicy::ablation_set();
    const auto traj = invert(z0, src, base.guidance.omega_inverse, *model, schedule);
    std::vector<AblateRow> rows(policies.size());
    parallel_for(policies.size(), c.jobs, [&](std::size_t i) {
      EditOptions opts = base;
      opts.policy = policies[i];
      const auto res = dic_edit(traj, src, tgt, *model, schedule, opts);
      rows[i] = {policies[i].str(), opts.guidance.omega_inverse, opts.guidance.omega_forward,
                 res.report.harmonic_active, structure_distance(z0, res.target), mse(z0, res.target),
                 edit_fidelity_proxy(res.target, tgt, reference)};
    });
    write_ablate_table(dir, "ablate_policies", rows, true);
  }
  if (run_grid) {
    const double grid[] = {1.0, 2.5, 5.0, 7.5};
    std::vector<AblateRow> rows(16);
    parallel_for(rows.size(), c.jobs, [&](std::size_t i) {
      EditOptions opts = base;
      opts.guidance = {grid[i / 4], grid[i % 4]};
      const auto res = dic_edit(z0, src, tgt, *model, schedule, opts);
      rows[i] = {opts.policy.str(), opts.guidance.omega_inverse, opts.guidance.omega_forward,
                 res.report.harmonic_active, structure_distance(z0, res.target), mse(z0, res.target),
                 edit_fidelity_proxy(res.target, tgt, reference)};
    });
    write_ablate_table(dir, "ablate_guidance", rows, false);
  }
  return 0;
}

int cmd_demo(const EditConfig& c) {
  if (c.model != "analytic") throw ConfigError("demo-error-accumulation runs on the analytic model only");
  const double omegas[] = {1.0, 2.5, 5.0, 7.5};
  const int step_grid[] = {10, 50, 200};
  for (int T : step_grid) {
    if (T > c.schedule_steps) throw ConfigError("demo needs --schedule-steps >= " + std::to_string(T));
  }
  const AnalyticGaussianModel reference = make_reference(c, c.schedule(c.schedule_steps));
  const PromptEmbedding prompt = encode_prompt(c.src_prompt, c.model_seed);
  const Tensor z0 = load_input(c, reference, prompt, true);

  struct Row {
    double omega;
    int steps;
    const char* method;
    double mse;
  };
  std::vector<Row> rows;
  for (double omega : omegas) {
    for (int T : step_grid) {
      const NoiseSchedule schedule = c.schedule(T);
      const AnalyticGaussianModel model = make_reference(c, schedule);
      const Tensor ddim = ddim_edit_baseline(z0, prompt, prompt, omega, model, schedule);
      EditOptions opts;
      opts.guidance = {omega, omega};
      const auto res = dic_edit(z0, prompt, prompt, model, schedule, opts);
      rows.push_back({omega, T, "ddim", mse(z0, ddim)});
      rows.push_back({omega, T, "dic", mse(z0, res.source)});
    }
  }

  std::string csv = "omega,steps,method,mse\n";
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    csv += format_number(r.omega) + "," + std::to_string(r.steps) + "," + r.method + "," + format_number(r.mse) + "\n";
    ordered_json o;
    o["omega"] = r.omega;
    o["steps"] = r.steps;
    o["method"] = r.method;
    o["mse"] = r.mse;
    arr.push_back(std::move(o));
  }
  const auto dir = prepare_out_dir(c);
  write_text(dir / "error_accumulation.csv", csv);
  write_text(dir / "error_accumulation.json", arr.dump(2) + "\n");
  return 0;
}

bool is_usage_error(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
         dynamic_cast<const RangeError*>(&e) || dynamic_cast<const IoError*>(&e) ||
         dynamic_cast<const AlignmentError*>(&e) || dynamic_cast<const CapabilityError*>(&e);
}

}  // namespace

// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Three-branch inversion and attention control for editing toy music latents", "dic"};
  CliState s;
  build_app(app, s);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }
  try {
    finalize(s);
    if (s.edit->parsed()) return cmd_edit(s.cfg);
    if (s.invert->parsed()) return cmd_invert(s.cfg);
    if (s.reconstruct->parsed()) return cmd_reconstruct(s.cfg);
    if (s.bench->parsed()) return cmd_bench(s.cfg, s);
    if (s.ablate->parsed()) return cmd_ablate(s.cfg, s);
    if (s.demo->parsed()) return cmd_demo(s.cfg);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_usage_error(e) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"dic"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string cli_help_text() {
  CLI::App app{"Three-branch inversion and attention control for editing toy music latents", "dic"};
  CliState s;
  build_app(app, s);
  std::string out = app.help();
  for (auto* sub : app.get_subcommands({})) out += sub->help();
  return out;
}

}  // namespace dic
