#include "dire/nn/params.hpp"

#include <cmath>
#include <random>

#include "dire/rng.hpp"

namespace dire::nn {

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  for (const Param& p : params.all()) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void Adam::step(ParamSet& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float step = static_cast<float>(cfg_.lr * std::sqrt(c2) / c1);
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float eps = static_cast<float>(cfg_.eps * std::sqrt(c2));
  std::size_t k = 0;
  for (Param& p : params.all()) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

void init_normal(Param& p, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (float& v : p.value) v = static_cast<float>(normal(rng));
}

}  // namespace dire::nn
