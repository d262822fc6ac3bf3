#include "dire/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dire {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) {
    throw std::invalid_argument("NoiseSchedule: need at least one diffusion step");
  }
  if (alpha_bar_[0] != 1.0) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar[0] must be exactly 1");
  }
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t] < alpha_bar_[t - 1]) || !(alpha_bar_[t] > 0.0)) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing in (0,1] at t=" +
                                  std::to_string(t));
    }
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: step " + std::to_string(t) + " outside [0," +
                            std::to_string(steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::beta(int t) const {
  if (t < 1) throw std::out_of_range("NoiseSchedule::beta: t must be >= 1");
  return 1.0 - alpha_bar(t) / alpha_bar(t - 1);
}

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1, got " +
                                std::to_string(beta_start) + ", " + std::to_string(beta_end));
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : double(t - 1) / double(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(alpha_bar));
}

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps,
                     const NoiseSchedule& sched) {
  return q_sample(x0, eps, sched.alpha_bar(t));
}

ImageTensor q_sample(const ImageTensor& x0, const ImageTensor& eps, double ab) {
  require_same_shape(x0, eps, "q_sample");
  if (!(ab >= 0.0 && ab <= 1.0)) throw std::invalid_argument("q_sample: alpha_bar outside [0,1]");
  const float signal = static_cast<float>(std::sqrt(ab));
  const float noise = static_cast<float>(std::sqrt(1.0 - ab));
  ImageTensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

}  // namespace dire
