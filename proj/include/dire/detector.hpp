#pragma once

// Real-vs-generated binary classifier.
//
//   crop(28) -> [conv3x3/2 -> silu] x blocks -> global average pool -> linear -> sigmoid
//
// Widths double per block up to 4x base. Training uses class-balanced
// mini-batches, random crop + horizontal flip, and a summed binary
// cross-entropy; the checkpoint with the best validation accuracy is kept.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dire/nn/kernels.hpp"
#include "dire/nn/params.hpp"
#include "dire/residual.hpp"
#include "dire/rng.hpp"
#include "dire/tensor.hpp"

namespace dire {

struct DetectorConfig {
  int in_channels = 1;
  int image_size = 32;
  int crop = 28;
  int base_width = 16;
  int blocks = 4;

  void validate() const;
  int width(int block) const;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

struct DetectorTrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  int steps = 1500;
  int eval_every = 50;
  bool flip = true;
  std::uint64_t seed = 0;
  bool standardize = true;  // fit an InputNorm on the training inputs

  void validate() const;
};

void to_json(nlohmann::json& j, const DetectorTrainConfig& c);
void from_json(const nlohmann::json& j, DetectorTrainConfig& c);

inline constexpr double kProbClamp = 1e-7;

/// -sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)] with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const int> y, std::span<const double> p);
/// d(loss)/d(p_i) = (p_i - y_i) / (p_i (1 - p_i)), zero where the clamp is active.
std::vector<double> bce_grad(std::span<const int> y, std::span<const double> p);

/// Random crop of size `crop` then a horizontal flip with probability 0.5.
ImageTensor augment_train(const ImageTensor& img, int crop, Rng& rng, bool flip = true);
/// Offsets drawn by augment_train, exposed for statistical tests.
struct CropDraw {
  int y = 0, x = 0;
  bool flipped = false;
};
CropDraw draw_crop(int height, int width, int crop, Rng& rng, bool flip = true);
ImageTensor crop_at(const ImageTensor& img, int y, int x, int crop, bool flipped);
ImageTensor center_crop(const ImageTensor& img, int crop);

template <class T>
class DetectorNet {
 public:
  struct Trace {
    std::vector<nn::ActT<T>> in, pre;
    nn::MatT<T> pooled;
    int last_h = 0, last_w = 0;
  };

  explicit DetectorNet(DetectorConfig cfg);

  const DetectorConfig& config() const { return cfg_; }
  nn::ParamSetT<T>& params() { return params_; }
  const nn::ParamSetT<T>& params() const { return params_; }

  /// Logits, one per image in the batch.
  std::vector<T> forward(const nn::ActT<T>& x, Trace* trace) const;
  void backward(const Trace& trace, std::span<const T> dlogits);

 private:
  DetectorConfig cfg_;
  nn::ParamSetT<T> params_;
};

/// Summed BCE of sigmoid(logits) and, when `accumulate_grad`, parameter gradients.
template <class T>
double detector_loss(DetectorNet<T>& net, const nn::ActT<T>& x, std::span<const int> labels,
                     bool accumulate_grad);

/// Per-channel affine map applied to detector inputs: (x - shift) * scale.
/// Empty vectors mean identity.
struct InputNorm {
  std::vector<float> shift, scale;

  bool operator==(const InputNorm&) const = default;
};

/// Channel means and reciprocal standard deviations over every pixel of `inputs`.
InputNorm fit_input_norm(const ImageBatch& inputs);

class Detector {
 public:
  explicit Detector(DetectorConfig cfg);

  static Detector init(DetectorConfig cfg, std::uint64_t seed);
  static Detector load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;

  const DetectorConfig& config() const { return net_.config(); }
  DetectorNet<float>& net() { return net_; }
  const DetectorNet<float>& net() const { return net_; }

  const InputNorm& input_norm() const { return norm_; }
  void set_input_norm(InputNorm norm);
  ImageTensor normalize(ImageTensor img) const;

  /// Probability of "generated". Inputs larger than the crop are center-cropped.
  double predict(const ImageTensor& img) const;
  std::vector<double> predict_batch(const ImageBatch& imgs, int jobs = 1) const;

 private:
  DetectorNet<float> net_;
  InputNorm norm_;
};

struct LabeledSet {
  ImageBatch inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
};

LabeledSet make_labeled(const std::vector<DireTriple>& triples, InputMode mode);

struct DetectorTrainResult {
  Detector model;
  std::vector<double> loss_trace;
  std::vector<double> val_acc_trace;
  int best_step = -1;
  double best_val_acc = 0.0;
};

/// Throws if the training set lacks either class. With an empty validation set
/// the final parameters are returned.
DetectorTrainResult train_detector(const LabeledSet& train, const LabeledSet& val, const DetectorConfig& cfg,
                                   const DetectorTrainConfig& tcfg, int jobs = 1,
                                   const std::function<void(int, double)>& on_step = {});

}  // namespace dire
