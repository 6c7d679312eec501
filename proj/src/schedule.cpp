#include "dic/schedule.hpp"

#include <cmath>
#include <string>

#include "dic/error.hpp"

namespace dic {

namespace {

void require_step(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps()) {
    throw StepError("step " + std::to_string(t) + " outside 1.." + std::to_string(s.steps()));
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) throw ConfigError("schedule needs at least one step");
  if (!(alpha_bar_.front() >= 0.999 && alpha_bar_.front() <= 1.0)) {
    throw ConfigError("alpha_bar[0] must lie in [0.999, 1]");
  }
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t] < alpha_bar_[t - 1])) {
      throw ConfigError("alpha_bar must be strictly decreasing (violated at t=" + std::to_string(t) + ")");
    }
  }
  if (!(alpha_bar_.back() > 0.0)) throw ConfigError("alpha_bar[T] must be positive");
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw StepError("step " + std::to_string(t) + " outside 0.." + std::to_string(steps()));
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

void GuidanceConfig::validate() const {
  if (!(omega_inverse >= 0.0) || !(omega_forward >= 0.0)) {
    throw ConfigError("guidance scales must be >= 0");
  }
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  ab[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    ab[t] = ab[t - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(ab));
}

NoiseSchedule subsample(const NoiseSchedule& base, int steps) {
  const int total = base.steps();
  if (steps < 1 || steps > total) {
    throw ConfigError("cannot subsample " + std::to_string(total) + " steps to " + std::to_string(steps));
  }
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    const long idx = std::lround(static_cast<double>(k) * total / steps);
    ab[k] = base.alpha_bar(static_cast<int>(idx));
  }
  return NoiseSchedule(std::move(ab));
}

Tensor ddim_forward_step(const Tensor& z_t, const Tensor& eps, int t, const NoiseSchedule& s) {
  require_step(t, s);
  require_same_shape(z_t, eps, "ddim_forward_step");
  const double a = s.alpha_bar(t);
  const double ap = s.alpha_bar(t - 1);
  const double c_z = std::sqrt(ap) / std::sqrt(a);
  const double c_eps = std::sqrt(ap) * (std::sqrt(1.0 / ap - 1.0) - std::sqrt(1.0 / a - 1.0));
  return axpby(c_z, z_t, c_eps, eps);
}

Tensor ddim_inversion_step(const Tensor& z_prev, const Tensor& eps, int t, const NoiseSchedule& s) {
  require_step(t, s);
  require_same_shape(z_prev, eps, "ddim_inversion_step");
  const double a = s.alpha_bar(t);
  const double ap = s.alpha_bar(t - 1);
  const double c_z = std::sqrt(a) / std::sqrt(ap);
  const double c_eps = std::sqrt(a) * (std::sqrt(1.0 / a - 1.0) - std::sqrt(1.0 / ap - 1.0));
  return axpby(c_z, z_prev, c_eps, eps);
}

Tensor add_noise(const Tensor& z_0, const Tensor& eps, int t, const NoiseSchedule& s) {
  require_same_shape(z_0, eps, "add_noise");
  const double a = s.alpha_bar(t);
  return axpby(std::sqrt(a), z_0, std::sqrt(1.0 - a), eps);
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double omega) {
  require_same_shape(eps_cond, eps_uncond, "cfg_combine");
  return axpby(omega, eps_cond, 1.0 - omega, eps_uncond);
}

}  // namespace dic
