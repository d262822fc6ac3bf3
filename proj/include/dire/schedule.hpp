#pragma once

#include <vector>

#include "dire/tensor.hpp"

namespace dire {

/// Cumulative signal-retention products for a discrete diffusion process.
/// alpha_bar()[0] == 1 and the sequence strictly decreases up to index T.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alpha_bar);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }

  /// Per-step beta_t = 1 - alpha_bar[t] / alpha_bar[t-1], t >= 1.
  double beta(int t) const;
  /// Posterior variance of q(x_{t-1} | x_t, x_0): beta_t (1 - abar_{t-1}) / (1 - abar_t).
  double posterior_variance(int t) const;

  bool operator==(const NoiseSchedule&) const = default;

 private:
  std::vector<double> alpha_bar_;
};

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end);

/// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps,
                     const NoiseSchedule& sched);
/// Same blend for an explicit alpha_bar in [0, 1].
ImageTensor q_sample(const ImageTensor& x0, const ImageTensor& eps, double alpha_bar);

}  // namespace dire
