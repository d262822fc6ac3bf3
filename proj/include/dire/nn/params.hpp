#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dire/nn/kernels.hpp"

namespace dire::nn {

/// A named trainable array. Storage is flat row-major over `shape`.
template <class T>
struct ParamT {
  std::string name;
  std::vector<int> shape;
  AlignedVec<T> value;
  AlignedVec<T> grad;

  std::size_t size() const { return value.size(); }
  std::span<const T> v() const { return value; }
  std::span<T> g() { return grad; }
};

/// Ordered collection of parameters with stable addresses.
template <class T>
class ParamSetT {
 public:
  ParamT<T>& add(std::string name, std::vector<int> shape) {
    if (contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
    ParamT<T>& p = params_.emplace_back();
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
    return p;
  }

  ParamT<T>& get(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw std::out_of_range("ParamSet: no parameter named " + name);
  }
  const ParamT<T>& get(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p;
    throw std::out_of_range("ParamSet: no parameter named " + name);
  }
  bool contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
  }

  std::deque<ParamT<T>>& all() { return params_; }
  const std::deque<ParamT<T>>& all() const { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }
  bool all_finite() const {
    for (const auto& p : params_)
      for (T v : p.value)
        if (!std::isfinite(v)) return false;
    return true;
  }

  /// Copies names, shapes and values from `other`, converting scalar type.
  template <class U>
  void assign_from(const ParamSetT<U>& other) {
    params_.clear();
    for (const auto& p : other.all()) {
      ParamT<T>& q = add(p.name, p.shape);
      std::transform(p.value.begin(), p.value.end(), q.value.begin(),
                     [](U v) { return static_cast<T>(v); });
    }
  }

  bool operator==(const ParamSetT& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& a = params_[i];
      const auto& b = o.params_[i];
      if (a.name != b.name || a.shape != b.shape || a.value != b.value) return false;
    }
    return true;
  }

 private:
  std::deque<ParamT<T>> params_;
};

using Param = ParamT<float>;
using ParamSet = ParamSetT<float>;

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);
  void step(ParamSet& params);
  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

void init_normal(Param& p, double stddev, std::uint64_t seed);

}  // namespace dire::nn
