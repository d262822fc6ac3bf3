#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "dire/predictor.hpp"
#include "dire/rng.hpp"
#include "dire/tensor.hpp"

namespace dire::testing {

/// Predicts the same tensor for every input; counts calls.
class ConstantEps : public NoisePredictor {
 public:
  explicit ConstantEps(ImageTensor eps) : eps_(std::move(eps)) {}
  ImageTensor predict(const ImageTensor& xt, int) const override {
    ++calls;
    require_same_shape(xt, eps_, "ConstantEps");
    return eps_;
  }
  mutable std::atomic<int> calls{0};

 private:
  ImageTensor eps_;
};

inline ImageTensor uniform_image(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  ImageTensor img(shape);
  for (float& v : img.values()) v = u(rng);
  return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("dire-test-" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace dire::testing
