#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dic/attention_control.hpp"
#include "dic/denoiser.hpp"
#include "dic/schedule.hpp"
#include "dic/tensor.hpp"
#include "dic/text.hpp"

namespace dic {

// z*_1 .. z*_T recovered from z_0 by DDIM inversion.
struct InversionTrajectory {
  Tensor source;               // z*_0, the input itself
  std::vector<Tensor> latents;  // latents[t-1] holds z*_t
  std::string prompt;
  double omega_inverse = 1.0;

  int steps() const noexcept { return static_cast<int>(latents.size()); }
  const Tensor& at(int t) const;  // t in 0..T
};

// Inverts z_0 under the guided noise estimate. Step t evaluates the model at
// (z*_{t-1}, t): the noise level being entered, never t = 0 where an
// eps-prediction is undefined.
InversionTrajectory invert(const Tensor& z_0, const PromptEmbedding& prompt, double omega_inverse,
                           const Denoiser& model, const NoiseSchedule& schedule);

// Plain guided DDIM sampling from z_{from_step} down to z_0.
Tensor generate(const Tensor& z_start, const PromptEmbedding& prompt, double omega, const Denoiser& model,
                const NoiseSchedule& schedule, int from_step);
inline Tensor generate(const Tensor& z_T, const PromptEmbedding& prompt, double omega, const Denoiser& model,
                       const NoiseSchedule& schedule) {
  return generate(z_T, prompt, omega, model, schedule, schedule.steps());
}

enum class Branch : std::size_t { source = 0, target = 1, harmonic = 2 };

enum class DistanceSource { none, source, target, harmonic };

// Which correction each branch (source, target, harmonic) receives per step.
struct DistancePolicy {
  std::array<DistanceSource, 3> apply_to{DistanceSource::source, DistanceSource::none, DistanceSource::none};

  // Accepts "src" (shorthand for src,0,0) or three comma-separated selectors
  // from {src, tgt, har, 0}, optionally prefixed "d_". A bare "d" picks the
  // branch's own distance, so "d,d,d" = src,tgt,har.
  static DistancePolicy parse(std::string_view text);
  static DistancePolicy source_only() { return {}; }
  // The six policy vectors of the distance ablation, in table order.
  static std::vector<DistancePolicy> ablation_set();

  std::string str() const;  // e.g. "[d_src,0,d_tgt]"
  bool uses(DistanceSource s) const noexcept;
  bool operator==(const DistancePolicy&) const = default;
};

struct EditOptions {
  GuidanceConfig guidance;
  DistancePolicy policy;
  ControlSchedule control;
  std::optional<BlendWords> blend;
};

struct StepReport {
  int t = 0;
  double d_src = 0.0;  // L2 norms of the pre-correction distances
  double d_tgt = 0.0;
  double d_har = 0.0;
  double src_pin_error = 0.0;  // max |z_src_{t-1} - z*_{t-1}| after correction
};

struct EditReport {
  std::vector<StepReport> steps;
  bool harmonic_active = false;
  bool attention_control_active = false;
  bool local_blend_active = false;
  std::vector<std::string> notes;
};

struct EditResult {
  Tensor target;
  Tensor source;
  std::optional<Tensor> harmonic;
  EditReport report;
};

// Triple-branch editing with per-step distance correction. With an attention
// model every step runs harmonized attention control; the analytic model runs
// the source and target branches only.
EditResult dic_edit(const Tensor& z_0, const PromptEmbedding& src, const PromptEmbedding& tgt,
                    const Denoiser& model, const NoiseSchedule& schedule, const EditOptions& options);
// Same, reusing a trajectory computed by invert().
EditResult dic_edit(const InversionTrajectory& trajectory, const PromptEmbedding& src, const PromptEmbedding& tgt,
                    const Denoiser& model, const NoiseSchedule& schedule, const EditOptions& options);

// Invert with src at omega_inverse, regenerate with tgt at omega_forward.
Tensor ddim_edit_baseline(const Tensor& z_0, const PromptEmbedding& src, const PromptEmbedding& tgt,
                          const GuidanceConfig& guidance, const Denoiser& model, const NoiseSchedule& schedule);
inline Tensor ddim_edit_baseline(const Tensor& z_0, const PromptEmbedding& src, const PromptEmbedding& tgt,
                                 double omega, const Denoiser& model, const NoiseSchedule& schedule) {
  return ddim_edit_baseline(z_0, src, tgt, GuidanceConfig{omega, omega}, model, schedule);
}

// Noise z_0 to step ceil(t_start * T) with a seeded draw, then sample with tgt.
Tensor sdedit_baseline(const Tensor& z_0, const PromptEmbedding& tgt, double t_start, double omega,
                       const Denoiser& model, const NoiseSchedule& schedule, std::uint64_t seed);
int sdedit_start_step(double t_start, int steps);

}  // namespace dic
