#pragma once

// Noise predictor eps_theta(x_t, t): a small convolutional encoder-decoder with
// a sinusoidal time embedding applied as per-channel scale-and-shift at every
// resolution level. Backward passes are written by hand next to the forward.
//
// Layout for levels = 2 and base width C:
//
//   x -> conv_in(C) -> film -> silu -> conv(C) -> silu ............ skip0  (32x32)
//     -> conv/2(2C) -> film -> silu -> conv(2C) -> silu ........... skip1  (16x16)
//     -> conv/2(2C) -> film -> silu -> conv(2C) -> silu                    (8x8)
//     -> conv(2C) -> up2 -> +skip1 -> film -> silu                         (16x16)
//     -> conv(C)  -> up2 -> +skip0 -> film -> silu -> conv_out(channels)   (32x32)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dire/nn/kernels.hpp"
#include "dire/nn/params.hpp"
#include "dire/predictor.hpp"
#include "dire/schedule.hpp"
#include "dire/tensor.hpp"

namespace dire {

struct EpsNetConfig {
  int channels = 1;
  int image_size = 32;
  int base_width = 32;
  int levels = 2;
  int time_dim = 64;

  void validate() const;
  int width(int level) const { return level == 0 ? base_width : 2 * base_width; }
  Shape image_shape() const { return {channels, image_size, image_size}; }
};

void to_json(nlohmann::json& j, const EpsNetConfig& c);
void from_json(const nlohmann::json& j, EpsNetConfig& c);

/// Sinusoidal embedding rows [sin(t f_i), cos(t f_i)], f_i = 10000^(-i/half).
template <class T>
nn::MatT<T> timestep_embedding(std::span<const int> steps, int dim);

template <class T>
class EpsNet {
 public:
  struct Trace {
    std::vector<int> steps;
    nn::MatT<T> temb_in, temb_pre, temb;
    std::vector<nn::MatT<T>> enc_mod, dec_mod;
    // encoder level l: conv_a -> a -> film -> f -> silu -> h1 -> conv_b -> b -> silu -> out
    std::vector<nn::ActT<T>> enc_in, enc_a, enc_f, enc_h1, enc_b, enc_out;
    // decoder level l: conv_up -> c -> up2 -> + skip -> s -> film -> f -> silu -> out
    std::vector<nn::ActT<T>> dec_in, dec_s, dec_f, dec_out;
  };

  explicit EpsNet(EpsNetConfig cfg);

  const EpsNetConfig& config() const { return cfg_; }
  nn::ParamSetT<T>& params() { return params_; }
  const nn::ParamSetT<T>& params() const { return params_; }

  /// Batched forward. When `trace` is non-null it records what backward needs.
  nn::ActT<T> forward(const nn::ActT<T>& x, std::span<const int> steps, Trace* trace) const;
  /// Accumulates parameter gradients for d(loss)/d(output) = dout.
  void backward(const Trace& trace, const nn::ActT<T>& dout);

 private:
  EpsNetConfig cfg_;
  nn::ParamSetT<T> params_;
};

/// Optimizer settings and batch shape for diffusion training.
struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 2e-4;
  int steps = 20000;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Trained noise predictor bound to its schedule.
class EpsModel : public NoisePredictor {
 public:
  EpsModel(EpsNetConfig cfg, NoiseSchedule sched);

  static EpsModel init(EpsNetConfig cfg, NoiseSchedule sched, std::uint64_t seed);
  static EpsModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, const nn::AdamConfig& optimizer) const;

  const EpsNetConfig& config() const { return net_.config(); }
  const NoiseSchedule& schedule() const { return sched_; }
  EpsNet<float>& net() { return net_; }
  const EpsNet<float>& net() const { return net_; }

  /// eps_theta(x_t, t) for 1 <= t <= T.
  ImageTensor predict(const ImageTensor& xt, int t) const override;

 private:
  void check_step(int t) const;

  EpsNet<float> net_;
  NoiseSchedule sched_;
};

/// Mean over all elements of (eps - eps_theta(q_sample(x0, t, eps), t))^2.
double simple_loss(const NoisePredictor& model, const NoiseSchedule& sched, const ImageBatch& x0,
                   std::span<const int> steps, const ImageBatch& eps);

/// Same loss evaluated on the batched network, accumulating parameter
/// gradients when `accumulate_grad` is set.
template <class T>
double simple_loss_batched(EpsNet<T>& net, const NoiseSchedule& sched, const ImageBatch& x0,
                           std::span<const int> steps, const ImageBatch& eps, bool accumulate_grad);

using ImageSource = std::function<ImageTensor(std::uint64_t index)>;

struct TrainResult {
  std::vector<double> loss_trace;
};

/// Per step: draw a batch of images, t ~ U{1..T}, eps ~ N(0, I); one Adam step
/// on the simple loss. Throws on a non-finite loss, naming the step.
TrainResult train_diffusion(EpsModel& model, const ImageSource& source, std::uint64_t source_size,
                            const TrainConfig& cfg,
                            const std::function<void(int, double)>& on_step = {});

template <class T>
nn::ActT<T> to_act(const ImageBatch& images);
template <class T>
ImageBatch from_act(const nn::ActT<T>& act);

}  // namespace dire
