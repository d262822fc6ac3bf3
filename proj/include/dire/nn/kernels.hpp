#pragma once

// Dense kernels shared by the noise predictor and the detector.
//
// Activations are stored channel-major across the batch (C, N, H, W) so a
// convolution over the whole batch is one GEMM against an im2col matrix whose
// columns are (image, pixel) pairs. Every parallel loop writes disjoint
// outputs, and reductions run in a fixed order, so results do not depend on
// the OpenMP thread count.
//
// The *_reference functions are direct serial loops kept for testing and
// benchmarking the parallel kernels.

#include <cstddef>
#include <new>
#include <span>
#include <vector>

namespace dire::nn {

// Eigen picks vector-loop peeling from the buffer address, so every buffer
// handed to it starts on the same boundary or results drift by an ulp.
inline constexpr std::size_t kBufferAlign = 64;

template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kBufferAlign}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kBufferAlign}); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <class T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct ActT {
  int c = 0, n = 0, h = 0, w = 0;
  AlignedVec<T> v;

  ActT() = default;
  ActT(int channels, int batch, int height, int width, T fill = T(0))
      : c(channels), n(batch), h(height), w(width),
        v(static_cast<std::size_t>(channels) * batch * height * width, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return v.size(); }
  T* data(int ch, int img) { return v.data() + (static_cast<std::size_t>(ch) * n + img) * plane(); }
  const T* data(int ch, int img) const {
    return v.data() + (static_cast<std::size_t>(ch) * n + img) * plane();
  }
  bool same_dims(const ActT& o) const { return c == o.c && n == o.n && h == o.h && w == o.w; }
};

/// Row-major rows x cols matrix, one row per batch item.
template <class T>
struct MatT {
  int rows = 0, cols = 0;
  AlignedVec<T> v;

  MatT() = default;
  MatT(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
  T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

using Act = ActT<float>;
using Mat = MatT<float>;

struct ConvGeom {
  int cin = 0, cout = 0, kernel = 3, stride = 1, pad = 1;

  int out_h(int h) const { return (h + 2 * pad - kernel) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - kernel) / stride + 1; }
  int patch() const { return cin * kernel * kernel; }
};

// Weights are laid out [cout][cin][ky][kx]; bias [cout].
template <class T>
ActT<T> conv2d_forward(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                   std::span<const T> bias);
/// Accumulates into dweight/dbias; writes dx when non-null.
template <class T>
void conv2d_backward(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                     const ActT<T>& dy, std::span<T> dweight, std::span<T> dbias, ActT<T>* dx);

template <class T>
ActT<T> conv2d_forward_reference(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                             std::span<const T> bias);
template <class T>
void conv2d_backward_reference(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                               const ActT<T>& dy, std::span<T> dweight, std::span<T> dbias,
                               ActT<T>* dx);

// y = x W^T + b with W [out][in].
template <class T>
MatT<T> linear_forward(const MatT<T>& x, std::span<const T> weight, std::span<const T> bias,
                   int out_features);
template <class T>
void linear_backward(const MatT<T>& x, std::span<const T> weight, const MatT<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, MatT<T>* dx);

template <class T>
void silu_inplace(std::span<T> x);
/// dx = dy * silu'(pre), in place on dy.
template <class T>
void silu_backward_inplace(std::span<const T> pre, std::span<T> dy);
template <class T>
void relu_inplace(std::span<T> x);
template <class T>
void relu_backward_inplace(std::span<const T> out, std::span<T> dy);

/// Per (image, channel) affine modulation: y = x * (1 + scale) + shift, where
/// mod holds [scale(0..C-1), shift(0..C-1)] per row.
template <class T>
ActT<T> film_forward(const ActT<T>& x, const MatT<T>& mod);
template <class T>
void film_backward(const ActT<T>& x, const MatT<T>& mod, const ActT<T>& dy, ActT<T>& dx, MatT<T>& dmod);

template <class T>
ActT<T> upsample2_forward(const ActT<T>& x);
template <class T>
ActT<T> upsample2_backward(const ActT<T>& dy);

template <class T>
MatT<T> global_avg_pool_forward(const ActT<T>& x);
template <class T>
ActT<T> global_avg_pool_backward(const MatT<T>& dy, int h, int w);

template <class T>
void add_inplace(std::span<T> dst, std::span<const T> src);

}  // namespace dire::nn
