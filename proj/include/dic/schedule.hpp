#pragma once

#include <span>
#include <vector>

#include "dic/tensor.hpp"

namespace dic {

// Cumulative signal coefficients alpha_bar[t] for t = 0..T.
// alpha_bar[0] anchors the data end; denoising walks t = T -> 1.
class NoiseSchedule {
 public:
  // Validates: alpha_bar[0] >= 0.999, strictly decreasing, alpha_bar[T] > 0.
  explicit NoiseSchedule(std::vector<double> alpha_bar);

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

 private:
  std::vector<double> alpha_bar_;
};

struct GuidanceConfig {
  double omega_inverse = 1.0;
  double omega_forward = 5.0;

  void validate() const;
};

inline constexpr double kDefaultBetaStart = 0.0015;
inline constexpr double kDefaultBetaEnd = 0.0195;
inline constexpr int kDefaultSteps = 200;

// Linear beta from beta_start to beta_end over `steps` entries;
// alpha_bar[t] = prod_{s<=t} (1 - beta_s), alpha_bar[0] = 1.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

// DDIM-style spacing: keeps alpha_bar at base indices round(k * T_base / steps).
NoiseSchedule subsample(const NoiseSchedule& base, int steps);

// z_{t-1} from z_t given the noise estimate.
Tensor ddim_forward_step(const Tensor& z_t, const Tensor& eps, int t, const NoiseSchedule& s);
// z_t from z_{t-1}; the exact algebraic inverse of ddim_forward_step for fixed eps.
Tensor ddim_inversion_step(const Tensor& z_prev, const Tensor& eps, int t, const NoiseSchedule& s);
// sqrt(ab_t) z_0 + sqrt(1 - ab_t) eps, for t in 0..T.
Tensor add_noise(const Tensor& z_0, const Tensor& eps, int t, const NoiseSchedule& s);
// omega * cond + (1 - omega) * uncond.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double omega);

}  // namespace dic
