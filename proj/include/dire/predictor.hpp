#pragma once

#include "dire/tensor.hpp"

namespace dire {

/// Anything that predicts the injected noise eps(x_t, t). Implementations must
/// be safe to call concurrently when frozen.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual ImageTensor predict(const ImageTensor& xt, int t) const = 0;
};

}  // namespace dire
