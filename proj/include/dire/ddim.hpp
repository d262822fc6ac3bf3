#pragma once

// Deterministic DDIM reconstruction/inversion and the ancestral DDPM sampler.
//
// Sampling and inversion walk a strictly increasing step subsequence
// tau_1 < ... < tau_S = T, with index 0 standing for the clean image
// (alpha_bar = 1). Per-image pipelines are independent; the batch helpers fan
// out over OpenMP threads and return results in input order, bitwise equal to
// the serial loop.

#include <cstdint>
#include <vector>

#include "dire/predictor.hpp"
#include "dire/schedule.hpp"
#include "dire/tensor.hpp"

namespace dire {

struct StepSequence {
  std::vector<int> tau;

  int size() const { return static_cast<int>(tau.size()); }
  bool operator==(const StepSequence&) const = default;
};

/// S evenly strided steps ending exactly at T: tau_i = T - (S - i) * floor(T / S).
StepSequence make_subsequence(int total_steps, int count);

/// One DDIM update from alpha_bar_hi down to alpha_bar_lo:
///   sqrt(ab_lo) * (x - sqrt(1 - ab_hi) eps) / sqrt(ab_hi)
///     + sqrt(1 - ab_lo - sigma^2) eps + sigma * noise.
ImageTensor ddim_reverse_step(const ImageTensor& x_hi, double alpha_bar_hi, double alpha_bar_lo,
                              const ImageTensor& eps_hat, double sigma = 0.0,
                              const ImageTensor* noise = nullptr);
ImageTensor ddim_reverse_step(const ImageTensor& x_hi, int t_hi, int t_lo, const ImageTensor& eps_hat,
                              const NoiseSchedule& sched, double sigma = 0.0,
                              const ImageTensor* noise = nullptr);

/// Inversion update from ab_lo up to ab_hi:
///   sqrt(ab_hi) * (x / sqrt(ab_lo) + (sqrt((1-ab_hi)/ab_hi) - sqrt((1-ab_lo)/ab_lo)) eps).
ImageTensor ddim_inversion_step(const ImageTensor& x_lo, double alpha_bar_lo, double alpha_bar_hi,
                                const ImageTensor& eps_hat);
ImageTensor ddim_inversion_step(const ImageTensor& x_lo, int t_lo, int t_hi, const ImageTensor& eps_hat,
                                const NoiseSchedule& sched);

/// Step index at which the noise predictor is queried for a state at step t.
/// The clean state (t = 0) is queried at step 1, the lowest trained noise level.
inline int predictor_step(int t) { return t < 1 ? 1 : t; }

/// x_0 -> x_T through the subsequence, querying eps at the lower state.
ImageTensor invert(const ImageTensor& x0, const NoisePredictor& model, const NoiseSchedule& sched,
                   const StepSequence& seq);
/// x_T -> x_0' with deterministic (sigma = 0) DDIM steps. Not clamped.
ImageTensor reconstruct(const ImageTensor& xT, const NoisePredictor& model, const NoiseSchedule& sched,
                        const StepSequence& seq);

/// Standard-normal x_T per image (seeded by (seed, first_index + i)), reconstructed
/// and clamped to [-1, 1].
ImageBatch ddim_generate(const NoisePredictor& model, const NoiseSchedule& sched, const StepSequence& seq,
                         std::uint64_t seed, int count, Shape shape, std::uint64_t first_index = 0,
                         int jobs = 1);

/// Ancestral step: mean (x_t - beta_t / sqrt(1 - ab_t) eps) / sqrt(alpha_t), plus
/// sqrt(posterior variance) * noise for t > 1. Noise is required for t > 1.
ImageTensor ddpm_sample_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                             const NoiseSchedule& sched, const ImageTensor* noise);

/// Full T-step ancestral sampling, clamped to [-1, 1].
ImageBatch ddpm_generate(const NoisePredictor& model, const NoiseSchedule& sched, std::uint64_t seed,
                         int count, Shape shape, std::uint64_t first_index = 0, int jobs = 1);

}  // namespace dire
