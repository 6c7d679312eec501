#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dic/attention_control.hpp"
#include "dic/denoiser.hpp"
#include "dic/inversion.hpp"
#include "dic/schedule.hpp"

namespace dic {

inline constexpr const char* kDefaultSourcePrompt = "a live recording of ambient acoustic [guitar] music";
inline constexpr const char* kDefaultTargetPrompt = "a live recording of ambient acoustic [violin] music";

// Everything a run needs, after defaults, config file and flags are merged.
struct EditConfig {
  int steps = kDefaultSteps;
  int schedule_steps = kDefaultSteps;  // base schedule that `steps` subsamples
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  double omega_inverse = 1.0;
  double omega_forward = 5.0;

  int tau_c = -1;       // -1: round(0.6 steps)
  int self_start = -1;  // -1: round(0.2 steps)
  int self_layer = -1;  // -1: layers / 2
  double k_src = 0.3;
  double k_tgt = 0.3;
  bool self_edit_literal = false;
  bool cross_control = true;
  bool self_control = true;
  bool harmonic = true;

  std::string policy = "src";
  std::string model = "analytic";  // analytic | tiny-unet
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  std::size_t layers = 4;
  double sdedit_start = 0.75;

  std::string src_prompt = kDefaultSourcePrompt;
  std::string tgt_prompt = kDefaultTargetPrompt;
  std::vector<std::string> blend_src;
  std::vector<std::string> blend_tgt;

  std::filesystem::path input;
  bool synthesize = false;
  std::filesystem::path out_dir = "dic_out";
  bool record_timings = false;
  unsigned jobs = 1;

  // Throws ConfigError on any invalid field.
  void validate() const;

  NoiseSchedule schedule() const;
  NoiseSchedule schedule(int steps_override) const;
  GuidanceConfig guidance() const { return {omega_inverse, omega_forward}; }
  ControlSchedule control(int steps_override) const;
  EditOptions edit_options(int steps_override) const;
};

std::unique_ptr<Denoiser> make_model(const EditConfig& cfg, const NoiseSchedule& schedule);
AnalyticGaussianModel make_reference(const EditConfig& cfg, const NoiseSchedule& schedule);

// Exit status: 0 success or --help, 2 usage/config/input errors, 1 numeric
// or other runtime failures.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args exclude the program name

// Concatenated --help text of the program and every subcommand.
std::string cli_help_text();

}  // namespace dic
