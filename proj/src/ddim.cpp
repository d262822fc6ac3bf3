#include "dire/ddim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dire/rng.hpp"

namespace dire {

StepSequence make_subsequence(int total_steps, int count) {
  if (count < 1 || count > total_steps) {
    throw std::invalid_argument("make_subsequence: need 1 <= S <= T, got S=" + std::to_string(count) +
                                ", T=" + std::to_string(total_steps));
  }
  const int stride = total_steps / count;
  StepSequence seq;
  seq.tau.reserve(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) seq.tau.push_back(total_steps - (count - i) * stride);
  return seq;
}

ImageTensor ddim_reverse_step(const ImageTensor& x_hi, double ab_hi, double ab_lo,
                              const ImageTensor& eps_hat, double sigma, const ImageTensor* noise) {
  require_same_shape(x_hi, eps_hat, "ddim_reverse_step");
  if (sigma < 0.0) throw std::invalid_argument("ddim_reverse_step: sigma must be nonnegative");
  const double dir2 = 1.0 - ab_lo - sigma * sigma;
  if (dir2 < 0.0) throw std::invalid_argument("ddim_reverse_step: 1 - alpha_bar_lo - sigma^2 < 0");
  if (sigma > 0.0) {
    if (noise == nullptr) throw std::invalid_argument("ddim_reverse_step: sigma > 0 requires noise");
    require_same_shape(x_hi, *noise, "ddim_reverse_step");
  }
  const double scale = std::sqrt(ab_lo / ab_hi);
  const double eps_coef = std::sqrt(dir2) - scale * std::sqrt(1.0 - ab_hi);
  ImageTensor out(x_hi.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = scale * x_hi[i] + eps_coef * eps_hat[i];
    if (sigma > 0.0) v += sigma * (*noise)[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

ImageTensor ddim_reverse_step(const ImageTensor& x_hi, int t_hi, int t_lo, const ImageTensor& eps_hat,
                              const NoiseSchedule& sched, double sigma, const ImageTensor* noise) {
  if (!(t_lo < t_hi)) throw std::invalid_argument("ddim_reverse_step: need t_lo < t_hi");
  return ddim_reverse_step(x_hi, sched.alpha_bar(t_hi), sched.alpha_bar(t_lo), eps_hat, sigma, noise);
}

ImageTensor ddim_inversion_step(const ImageTensor& x_lo, double ab_lo, double ab_hi,
                                const ImageTensor& eps_hat) {
  require_same_shape(x_lo, eps_hat, "ddim_inversion_step");
  const double scale = std::sqrt(ab_hi / ab_lo);
  const double eps_coef =
      std::sqrt(ab_hi) * (std::sqrt((1.0 - ab_hi) / ab_hi) - std::sqrt((1.0 - ab_lo) / ab_lo));
  ImageTensor out(x_lo.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(scale * x_lo[i] + eps_coef * eps_hat[i]);
  return out;
}

ImageTensor ddim_inversion_step(const ImageTensor& x_lo, int t_lo, int t_hi, const ImageTensor& eps_hat,
                                const NoiseSchedule& sched) {
  if (!(t_hi > t_lo)) throw std::invalid_argument("ddim_inversion_step: need t_hi > t_lo");
  return ddim_inversion_step(x_lo, sched.alpha_bar(t_lo), sched.alpha_bar(t_hi), eps_hat);
}

namespace {

void check_sequence(const StepSequence& seq, const NoiseSchedule& sched) {
  if (seq.tau.empty()) throw std::invalid_argument("step sequence is empty");
  int prev = 0;
  for (int t : seq.tau) {
    if (t <= prev || t > sched.steps())
      throw std::invalid_argument("step sequence must be strictly increasing within [1, T]");
    prev = t;
  }
}

}  // namespace

ImageTensor invert(const ImageTensor& x0, const NoisePredictor& model, const NoiseSchedule& sched,
                   const StepSequence& seq) {
  check_sequence(seq, sched);
  ImageTensor x = x0;
  int lo = 0;
  for (int hi : seq.tau) {
    const ImageTensor eps = model.predict(x, predictor_step(lo));
    x = ddim_inversion_step(x, lo, hi, eps, sched);
    lo = hi;
  }
  return x;
}

ImageTensor reconstruct(const ImageTensor& xT, const NoisePredictor& model, const NoiseSchedule& sched,
                        const StepSequence& seq) {
  check_sequence(seq, sched);
  ImageTensor x = xT;
  for (int i = seq.size() - 1; i >= 0; --i) {
    const int hi = seq.tau[static_cast<std::size_t>(i)];
    const int lo = i == 0 ? 0 : seq.tau[static_cast<std::size_t>(i - 1)];
    const ImageTensor eps = model.predict(x, hi);
    x = ddim_reverse_step(x, hi, lo, eps, sched);
  }
  return x;
}

ImageBatch ddim_generate(const NoisePredictor& model, const NoiseSchedule& sched, const StepSequence& seq,
                         std::uint64_t seed, int count, Shape shape, std::uint64_t first_index, int jobs) {
  if (count < 1) throw std::invalid_argument("ddim_generate: n must be >= 1");
  check_sequence(seq, sched);
  ImageBatch out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, {0x6464696dULL, first_index + static_cast<std::uint64_t>(i)}));
    const ImageTensor xT = standard_normal(shape, rng);
    out[static_cast<std::size_t>(i)] = clamp(reconstruct(xT, model, sched, seq), -1.0f, 1.0f);
  }
  return out;
}

ImageTensor ddpm_sample_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                             const NoiseSchedule& sched, const ImageTensor* noise) {
  require_same_shape(x_t, eps_hat, "ddpm_sample_step");
  if (t < 1 || t > sched.steps()) throw std::out_of_range("ddpm_sample_step: step out of range");
  if (t > 1 && noise == nullptr) throw std::invalid_argument("ddpm_sample_step: noise required for t > 1");
  const double beta = sched.beta(t);
  const double alpha = 1.0 - beta;
  const double eps_coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double stddev = t > 1 ? std::sqrt(sched.posterior_variance(t)) : 0.0;
  if (t > 1) require_same_shape(x_t, *noise, "ddpm_sample_step");
  ImageTensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]);
    if (t > 1) v += stddev * (*noise)[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

ImageBatch ddpm_generate(const NoisePredictor& model, const NoiseSchedule& sched, std::uint64_t seed,
                         int count, Shape shape, std::uint64_t first_index, int jobs) {
  if (count < 1) throw std::invalid_argument("ddpm_generate: n must be >= 1");
  ImageBatch out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, {0x6464706dULL, first_index + static_cast<std::uint64_t>(i)}));
    ImageTensor x = standard_normal(shape, rng);
    for (int t = sched.steps(); t >= 1; --t) {
      const ImageTensor eps = model.predict(x, t);
      if (t > 1) {
        const ImageTensor noise = standard_normal(shape, rng);
        x = ddpm_sample_step(x, t, eps, sched, &noise);
      } else {
        x = ddpm_sample_step(x, t, eps, sched, nullptr);
      }
    }
    out[static_cast<std::size_t>(i)] = clamp(std::move(x), -1.0f, 1.0f);
  }
  return out;
}

}  // namespace dire
