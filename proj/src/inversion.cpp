#include "dic/inversion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "dic/error.hpp"
#include "dic/rng.hpp"

namespace dic {

namespace {

void require_finite(const Tensor& z, int t, const char* where) {
  if (!all_finite(z)) {
    throw NumericError(std::string(where) + ": non-finite latent at step " + std::to_string(t));
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

DistanceSource parse_selector(std::string_view raw, std::size_t position) {
  std::string s = trim(raw);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s.rfind("d_", 0) == 0) s = s.substr(2);
  if (s == "0" || s == "none") return DistanceSource::none;
  if (s == "src" || s == "source") return DistanceSource::source;
  if (s == "tgt" || s == "target") return DistanceSource::target;
  if (s == "har" || s == "harmonic") return DistanceSource::harmonic;
  if (s == "d") return static_cast<DistanceSource>(position + 1);
  throw ConfigError("unknown distance selector '" + std::string(raw) + "'");
}

const char* selector_name(DistanceSource s) {
  switch (s) {
    case DistanceSource::none: return "0";
    case DistanceSource::source: return "d_src";
    case DistanceSource::target: return "d_tgt";
    case DistanceSource::harmonic: return "d_har";
  }
  return "?";
}

}  // namespace

const Tensor& InversionTrajectory::at(int t) const {
  if (t < 0 || t > steps()) {
    throw StepError("trajectory index " + std::to_string(t) + " outside 0.." + std::to_string(steps()));
  }
  return t == 0 ? source : latents[static_cast<std::size_t>(t) - 1];
}

InversionTrajectory invert(const Tensor& z_0, const PromptEmbedding& prompt, double omega_inverse,
                           const Denoiser& model, const NoiseSchedule& schedule) {
  require_finite(z_0, 0, "invert");
  const PromptEmbedding null = null_prompt(prompt.seed);
  InversionTrajectory traj;
  traj.source = z_0;
  traj.prompt = prompt.text;
  traj.omega_inverse = omega_inverse;
  traj.latents.reserve(static_cast<std::size_t>(schedule.steps()));
  Tensor z = z_0;
  for (int t = 1; t <= schedule.steps(); ++t) {
    const Tensor eps = guided_eps(model, z, t, prompt, null, omega_inverse);
    z = ddim_inversion_step(z, eps, t, schedule);
    require_finite(z, t, "invert");
    traj.latents.push_back(z);
  }
  return traj;
}

Tensor generate(const Tensor& z_start, const PromptEmbedding& prompt, double omega, const Denoiser& model,
                const NoiseSchedule& schedule, int from_step) {
  if (from_step < 0 || from_step > schedule.steps()) {
    throw StepError("generate: start step " + std::to_string(from_step) + " out of range");
  }
  const PromptEmbedding null = null_prompt(prompt.seed);
  Tensor z = z_start;
  for (int t = from_step; t >= 1; --t) {
    z = ddim_forward_step(z, guided_eps(model, z, t, prompt, null, omega), t, schedule);
    require_finite(z, t, "generate");
  }
  return z;
}

// ---------------------------------------------------------------------------

DistancePolicy DistancePolicy::parse(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() == 1) {
    const std::string one = trim(parts[0]);
    if (one == "src" || one == "d_src" || one == "default") return source_only();
    throw ConfigError("policy must be 'src' or three comma-separated selectors, got '" + std::string(text) + "'");
  }
  if (parts.size() != 3) throw ConfigError("policy needs exactly three selectors, got '" + std::string(text) + "'");
  DistancePolicy p;
  for (std::size_t i = 0; i < 3; ++i) p.apply_to[i] = parse_selector(parts[i], i);
  return p;
}

std::vector<DistancePolicy> DistancePolicy::ablation_set() {
  using S = DistanceSource;
  return {
      {{S::source, S::source, S::none}},    {{S::source, S::none, S::source}},
      {{S::source, S::target, S::none}},    {{S::source, S::none, S::target}},
      {{S::source, S::none, S::harmonic}},  {{S::source, S::none, S::none}},
  };
}

std::string DistancePolicy::str() const {
  return std::string("[") + selector_name(apply_to[0]) + "," + selector_name(apply_to[1]) + "," +
         selector_name(apply_to[2]) + "]";
}

bool DistancePolicy::uses(DistanceSource s) const noexcept {
  return apply_to[0] == s || apply_to[1] == s || apply_to[2] == s;
}

// ---------------------------------------------------------------------------

EditResult dic_edit(const Tensor& z_0, const PromptEmbedding& src, const PromptEmbedding& tgt,
                    const Denoiser& model, const NoiseSchedule& schedule, const EditOptions& options) {
  options.guidance.validate();
  return dic_edit(invert(z_0, src, options.guidance.omega_inverse, model, schedule), src, tgt, model, schedule,
                  options);
}

EditResult dic_edit(const InversionTrajectory& trajectory, const PromptEmbedding& src, const PromptEmbedding& tgt,
                    const Denoiser& model, const NoiseSchedule& schedule, const EditOptions& options) {
  if (src.is_null || tgt.is_null) throw ConfigError("editing needs non-empty source and target prompts");
  options.guidance.validate();
  const int steps = schedule.steps();
  if (trajectory.steps() != steps) {
    throw StepError("internal: trajectory has " + std::to_string(trajectory.steps()) + " steps, schedule has " +
                    std::to_string(steps));
  }

  const TinyAttentionModel* am = model.attention_model();
  const bool attention = am != nullptr;
  const bool harmonic = attention && options.control.harmonic;
  if (attention) options.control.validate(steps, am->layers());

  EditResult result;
  EditReport& report = result.report;
  report.harmonic_active = harmonic;
  report.attention_control_active = attention;
  if (!attention) report.notes.push_back("model has no attention maps: attention control and local blend skipped");
  if (!harmonic) {
    report.notes.push_back("harmonic branch inactive");
    if (options.policy.uses(DistanceSource::harmonic) || options.policy.apply_to[2] != DistanceSource::none) {
      report.notes.push_back("policy entries involving the harmonic branch have no effect");
    }
  }

  Alignment alignment;
  std::optional<ResolvedBlend> blend;
  if (attention) {
    alignment = align(src, tgt);
    if (options.blend && options.control.cross_enabled) {
      blend = resolve_blend(*options.blend, src, tgt);
      report.local_blend_active = true;
    }
  }

  const PromptEmbedding null = null_prompt(src.seed);
  const double omega = options.guidance.omega_forward;
  auto guide = [&](Tensor cond, const Tensor& z, int t) {
    if (omega == 1.0) return cond;
    return cfg_combine(cond, model.predict(z, t, null), omega);
  };

  Tensor z_src = trajectory.at(steps);
  Tensor z_tgt = z_src;
  Tensor z_har = z_src;
  report.steps.reserve(static_cast<std::size_t>(steps));

  for (int t = steps; t >= 1; --t) {
    Tensor eps_src, eps_tgt, eps_har;
    std::optional<HacResult> hac;
    if (attention) {
      hac = hac_step(model, z_src, z_tgt, harmonic ? z_har : z_src, t, steps, src, tgt, alignment,
                     options.control);
      eps_src = guide(hac->eps_src, z_src, t);
      eps_tgt = guide(hac->eps_tgt, z_tgt, t);
      if (harmonic) eps_har = guide(*hac->eps_har, z_har, t);
    } else {
      eps_src = guide(model.predict(z_src, t, src), z_src, t);
      eps_tgt = guide(model.predict(z_tgt, t, tgt), z_tgt, t);
    }

    const Tensor fwd_src = ddim_forward_step(z_src, eps_src, t, schedule);
    Tensor fwd_tgt = ddim_forward_step(z_tgt, eps_tgt, t, schedule);
    std::optional<Tensor> fwd_har;
    if (harmonic) fwd_har = ddim_forward_step(z_har, eps_har, t, schedule);
    // Local blend reuses this step's maps for the freshly sampled latents.
    if (blend) fwd_tgt = local_edit(fwd_src, fwd_tgt, hac->map_src, hac->map_tgt_hat, *blend);

    const Tensor& anchor = trajectory.at(t - 1);
    const Tensor d_src = sub(anchor, fwd_src);
    const Tensor d_tgt = sub(anchor, fwd_tgt);
    const Tensor d_har = harmonic ? sub(anchor, *fwd_har) : Tensor(anchor.shape(), 0.0);

    auto correction = [&](DistanceSource s) -> const Tensor* {
      switch (s) {
        case DistanceSource::source: return &d_src;
        case DistanceSource::target: return &d_tgt;
        case DistanceSource::harmonic: return harmonic ? &d_har : nullptr;
        case DistanceSource::none: return nullptr;
      }
      return nullptr;
    };
    auto corrected = [&](const Tensor& fwd, Branch b) {
      const Tensor* d = correction(options.policy.apply_to[static_cast<std::size_t>(b)]);
      return d ? add(fwd, *d) : fwd;
    };

    z_src = corrected(fwd_src, Branch::source);
    z_tgt = corrected(fwd_tgt, Branch::target);
    if (harmonic) z_har = corrected(*fwd_har, Branch::harmonic);

    require_finite(z_src, t, "dic_edit");
    require_finite(z_tgt, t, "dic_edit");
    if (harmonic) require_finite(z_har, t, "dic_edit");

    report.steps.push_back(
        {t, l2_norm(d_src), l2_norm(d_tgt), harmonic ? l2_norm(d_har) : 0.0, max_abs_diff(z_src, anchor)});
  }

  result.target = std::move(z_tgt);
  result.source = std::move(z_src);
  if (harmonic) result.harmonic = std::move(z_har);
  return result;
}

// ---------------------------------------------------------------------------

Tensor ddim_edit_baseline(const Tensor& z_0, const PromptEmbedding& src, const PromptEmbedding& tgt,
                          const GuidanceConfig& guidance, const Denoiser& model, const NoiseSchedule& schedule) {
  guidance.validate();
  const auto traj = invert(z_0, src, guidance.omega_inverse, model, schedule);
  return generate(traj.at(schedule.steps()), tgt, guidance.omega_forward, model, schedule);
}

int sdedit_start_step(double t_start, int steps) {
  if (!(t_start > 0.0 && t_start <= 1.0)) throw ConfigError("sdedit start fraction must lie in (0, 1]");
  // Guard against t_start * T landing a hair above an integer.
  const int k = static_cast<int>(std::ceil(t_start * steps - 1e-9));
  return std::clamp(k, 1, steps);
}

Tensor sdedit_baseline(const Tensor& z_0, const PromptEmbedding& tgt, double t_start, double omega,
                       const Denoiser& model, const NoiseSchedule& schedule, std::uint64_t seed) {
  const int k = sdedit_start_step(t_start, schedule.steps());
  SeededRng rng(seed);
  const Tensor noise = normal(rng, z_0.shape());
  return generate(add_noise(z_0, noise, k, schedule), tgt, omega, model, schedule, k);
}

}  // namespace dic
