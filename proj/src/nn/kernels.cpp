#include "dire/nn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dire::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRow = Eigen::Map<RowMat<T>>;
template <class T>
using CMapRow = Eigen::Map<const RowMat<T>>;

template <class T>
void check_conv(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                std::span<const T> bias) {
  if (x.c != g.cin) throw std::invalid_argument("conv2d: input channel mismatch");
  if (weight.size() != static_cast<std::size_t>(g.cout) * g.patch())
    throw std::invalid_argument("conv2d: weight size mismatch");
  if (bias.size() != static_cast<std::size_t>(g.cout))
    throw std::invalid_argument("conv2d: bias size mismatch");
}

// Valid output-column range [lo, hi) whose input column ox*stride - pad + kx
// falls inside [0, w).
struct Span1 {
  int lo, hi;
};

inline Span1 valid_range(int out, int in, int stride, int pad, int k) {
  int lo = 0;
  while (lo < out && lo * stride - pad + k < 0) ++lo;
  int hi = out;
  while (hi > lo && (hi - 1) * stride - pad + k >= in) --hi;
  return {lo, hi};
}

template <class T>
AlignedVec<T>& scratch(int slot) {
  thread_local AlignedVec<T> buffers[2];
  return buffers[slot];
}

// cols: [patch][n * ho * wo]
template <class T>
void im2col(const ConvGeom& g, const ActT<T>& x, int ho, int wo, AlignedVec<T>& cols) {
  const std::size_t per_img = static_cast<std::size_t>(ho) * wo;
  const std::size_t ncols = per_img * x.n;
  const std::size_t need = static_cast<std::size_t>(g.patch()) * ncols;
  if (cols.size() < need) cols.resize(need);
  const int k = g.kernel;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int img = 0; img < x.n; ++img) {
      const T* src = x.data(ci, img);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t row = (static_cast<std::size_t>(ci) * k + ky) * k + kx;
          T* dst = cols.data() + row * ncols + img * per_img;
          const Span1 xs = valid_range(wo, x.w, g.stride, g.pad, kx);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            T* drow = dst + static_cast<std::size_t>(oy) * wo;
            if (iy < 0 || iy >= x.h) {
              std::fill(drow, drow + wo, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(iy) * x.w - g.pad + kx;
            std::fill(drow, drow + xs.lo, T(0));
            if (g.stride == 1) {
              std::copy(srow + xs.lo, srow + xs.hi, drow + xs.lo);
            } else {
              for (int ox = xs.lo; ox < xs.hi; ++ox) drow[ox] = srow[ox * g.stride];
            }
            std::fill(drow + xs.hi, drow + wo, T(0));
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvGeom& g, const AlignedVec<T>& cols, int ho, int wo, ActT<T>& dx) {
  const std::size_t per_img = static_cast<std::size_t>(ho) * wo;
  const std::size_t ncols = per_img * dx.n;
  const int k = g.kernel;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int img = 0; img < dx.n; ++img) {
      T* dst = dx.data(ci, img);
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const std::size_t row = (static_cast<std::size_t>(ci) * k + ky) * k + kx;
          const T* src = cols.data() + row * ncols + img * per_img;
          const Span1 xs = valid_range(wo, dx.w, g.stride, g.pad, kx);
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= dx.h) continue;
            T* drow = dst + static_cast<std::size_t>(iy) * dx.w - g.pad + kx;
            const T* srow = src + static_cast<std::size_t>(oy) * wo;
            if (g.stride == 1) {
              for (int ox = xs.lo; ox < xs.hi; ++ox) drow[ox] += srow[ox];
            } else {
              for (int ox = xs.lo; ox < xs.hi; ++ox) drow[ox * g.stride] += srow[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
ActT<T> conv2d_forward(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                   std::span<const T> bias) {
  check_conv(g, x, weight, bias);
  const int ho = g.out_h(x.h), wo = g.out_w(x.w);
  ActT<T> y(g.cout, x.n, ho, wo);
  AlignedVec<T>& cols = scratch<T>(0);
  im2col(g, x, ho, wo, cols);
  const Eigen::Index ncols = static_cast<Eigen::Index>(y.n) * ho * wo;
  CMapRow<T> w(weight.data(), g.cout, g.patch());
  CMapRow<T> c(cols.data(), g.patch(), ncols);
  MapRow<T> out(y.v.data(), g.cout, ncols);
  out.noalias() = w * c;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.cout; ++co) {
    T* row = y.v.data() + static_cast<std::size_t>(co) * ncols;
    for (Eigen::Index j = 0; j < ncols; ++j) row[j] += bias[co];
  }
  return y;
}

template <class T>
void conv2d_backward(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                     const ActT<T>& dy, std::span<T> dweight, std::span<T> dbias, ActT<T>* dx) {
  check_conv(g, x, weight, std::span<const T>(dbias.data(), dbias.size()));
  const int ho = g.out_h(x.h), wo = g.out_w(x.w);
  if (dy.c != g.cout || dy.n != x.n || dy.h != ho || dy.w != wo)
    throw std::invalid_argument("conv2d_backward: gradient shape mismatch");
  const Eigen::Index ncols = static_cast<Eigen::Index>(x.n) * ho * wo;
  AlignedVec<T>& cols = scratch<T>(0);
  im2col(g, x, ho, wo, cols);
  CMapRow<T> c(cols.data(), g.patch(), ncols);
  CMapRow<T> d(dy.v.data(), g.cout, ncols);
  MapRow<T> dw(dweight.data(), g.cout, g.patch());
  dw.noalias() += d * c.transpose();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.cout; ++co) {
    const T* row = dy.v.data() + static_cast<std::size_t>(co) * ncols;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < ncols; ++j) acc += row[j];
    dbias[co] += static_cast<T>(acc);
  }
  if (dx != nullptr) {
    *dx = ActT<T>(x.c, x.n, x.h, x.w);
    AlignedVec<T>& dcols = scratch<T>(1);
    if (dcols.size() < static_cast<std::size_t>(g.patch()) * ncols)
      dcols.resize(static_cast<std::size_t>(g.patch()) * ncols);
    CMapRow<T> w(weight.data(), g.cout, g.patch());
    MapRow<T> dc(dcols.data(), g.patch(), ncols);
    dc.noalias() = w.transpose() * d;
    col2im(g, dcols, ho, wo, *dx);
  }
}

template <class T>
ActT<T> conv2d_forward_reference(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                             std::span<const T> bias) {
  check_conv(g, x, weight, bias);
  const int ho = g.out_h(x.h), wo = g.out_w(x.w), k = g.kernel;
  ActT<T> y(g.cout, x.n, ho, wo);
  for (int img = 0; img < x.n; ++img) {
    for (int co = 0; co < g.cout; ++co) {
      T* out = y.data(co, img);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias[co];
          for (int ci = 0; ci < g.cin; ++ci) {
            const T* in = x.data(ci, img);
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= x.w) continue;
                acc += static_cast<double>(weight[((co * g.cin + ci) * k + ky) * k + kx]) * in[iy * x.w + ix];
              }
            }
          }
          out[oy * wo + ox] = static_cast<T>(acc);
        }
      }
    }
  }
  return y;
}

template <class T>
void conv2d_backward_reference(const ConvGeom& g, const ActT<T>& x, std::span<const T> weight,
                               const ActT<T>& dy, std::span<T> dweight, std::span<T> dbias,
                               ActT<T>* dx) {
  const int ho = g.out_h(x.h), wo = g.out_w(x.w), k = g.kernel;
  if (dx != nullptr) *dx = ActT<T>(x.c, x.n, x.h, x.w);
  for (int img = 0; img < x.n; ++img) {
    for (int co = 0; co < g.cout; ++co) {
      const T* grad = dy.data(co, img);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T gv = grad[oy * wo + ox];
          dbias[co] += gv;
          for (int ci = 0; ci < g.cin; ++ci) {
            const T* in = x.data(ci, img);
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= x.w) continue;
                const std::size_t wi = ((co * g.cin + ci) * k + ky) * k + kx;
                dweight[wi] += gv * in[iy * x.w + ix];
                if (dx != nullptr) dx->data(ci, img)[iy * x.w + ix] += gv * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
MatT<T> linear_forward(const MatT<T>& x, std::span<const T> weight, std::span<const T> bias,
                   int out_features) {
  if (weight.size() != static_cast<std::size_t>(out_features) * x.cols ||
      bias.size() != static_cast<std::size_t>(out_features))
    throw std::invalid_argument("linear: parameter size mismatch");
  MatT<T> y(x.rows, out_features);
  CMapRow<T> in(x.v.data(), x.rows, x.cols);
  CMapRow<T> w(weight.data(), out_features, x.cols);
  MapRow<T> out(y.v.data(), y.rows, y.cols);
  out.noalias() = in * w.transpose();
  for (int r = 0; r < y.rows; ++r)
    for (int o = 0; o < out_features; ++o) y(r, o) += bias[o];
  return y;
}

template <class T>
void linear_backward(const MatT<T>& x, std::span<const T> weight, const MatT<T>& dy,
                     std::span<T> dweight, std::span<T> dbias, MatT<T>* dx) {
  CMapRow<T> in(x.v.data(), x.rows, x.cols);
  CMapRow<T> d(dy.v.data(), dy.rows, dy.cols);
  MapRow<T> dw(dweight.data(), dy.cols, x.cols);
  dw.noalias() += d.transpose() * in;
  for (int o = 0; o < dy.cols; ++o) {
    double acc = 0.0;
    for (int r = 0; r < dy.rows; ++r) acc += dy(r, o);
    dbias[o] += static_cast<T>(acc);
  }
  if (dx != nullptr) {
    *dx = MatT<T>(x.rows, x.cols);
    CMapRow<T> w(weight.data(), dy.cols, x.cols);
    MapRow<T> dxm(dx->v.data(), x.rows, x.cols);
    dxm.noalias() = d * w;
  }
}

template <class T>
void silu_inplace(std::span<T> x) {
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> a(x.data(), static_cast<Eigen::Index>(x.size()));
  a = a / (T(1) + (-a).exp());
}

template <class T>
void silu_backward_inplace(std::span<const T> pre, std::span<T> dy) {
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> p(pre.data(), static_cast<Eigen::Index>(pre.size()));
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> g(dy.data(), static_cast<Eigen::Index>(dy.size()));
  const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-p).exp());
  g *= s * (T(1) + p * (T(1) - s));
}

template <class T>
void relu_inplace(std::span<T> x) {
  for (T& v : x) v = v > T(0) ? v : T(0);
}

template <class T>
void relu_backward_inplace(std::span<const T> out, std::span<T> dy) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(out[i] > T(0))) dy[i] = T(0);
}

template <class T>
ActT<T> film_forward(const ActT<T>& x, const MatT<T>& mod) {
  if (mod.rows != x.n || mod.cols != 2 * x.c) throw std::invalid_argument("film: modulation shape");
  ActT<T> y = x;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ch = 0; ch < x.c; ++ch) {
    for (int img = 0; img < x.n; ++img) {
      const T scale = T(1) + mod(img, ch), shift = mod(img, x.c + ch);
      T* p = y.data(ch, img);
      for (std::size_t i = 0; i < y.plane(); ++i) p[i] = p[i] * scale + shift;
    }
  }
  return y;
}

template <class T>
void film_backward(const ActT<T>& x, const MatT<T>& mod, const ActT<T>& dy, ActT<T>& dx, MatT<T>& dmod) {
  dx = ActT<T>(x.c, x.n, x.h, x.w);
  dmod = MatT<T>(mod.rows, mod.cols);
#pragma omp parallel for collapse(2) schedule(static)
  for (int ch = 0; ch < x.c; ++ch) {
    for (int img = 0; img < x.n; ++img) {
      const T scale = T(1) + mod(img, ch);
      const T* in = x.data(ch, img);
      const T* g = dy.data(ch, img);
      T* out = dx.data(ch, img);
      double dscale = 0.0, dshift = 0.0;
      for (std::size_t i = 0; i < x.plane(); ++i) {
        out[i] = g[i] * scale;
        dscale += static_cast<double>(g[i]) * in[i];
        dshift += g[i];
      }
      dmod(img, ch) = static_cast<T>(dscale);
      dmod(img, x.c + ch) = static_cast<T>(dshift);
    }
  }
}

template <class T>
ActT<T> upsample2_forward(const ActT<T>& x) {
  ActT<T> y(x.c, x.n, x.h * 2, x.w * 2);
#pragma omp parallel for collapse(2) schedule(static)
  for (int ch = 0; ch < x.c; ++ch) {
    for (int img = 0; img < x.n; ++img) {
      const T* in = x.data(ch, img);
      T* out = y.data(ch, img);
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) out[yy * y.w + xx] = in[(yy / 2) * x.w + xx / 2];
    }
  }
  return y;
}

template <class T>
ActT<T> upsample2_backward(const ActT<T>& dy) {
  ActT<T> dx(dy.c, dy.n, dy.h / 2, dy.w / 2);
#pragma omp parallel for collapse(2) schedule(static)
  for (int ch = 0; ch < dy.c; ++ch) {
    for (int img = 0; img < dy.n; ++img) {
      const T* g = dy.data(ch, img);
      T* out = dx.data(ch, img);
      for (int yy = 0; yy < dx.h; ++yy) {
        for (int xx = 0; xx < dx.w; ++xx) {
          const int base = 2 * yy * dy.w + 2 * xx;
          out[yy * dx.w + xx] = g[base] + g[base + 1] + g[base + dy.w] + g[base + dy.w + 1];
        }
      }
    }
  }
  return dx;
}

template <class T>
MatT<T> global_avg_pool_forward(const ActT<T>& x) {
  MatT<T> y(x.n, x.c);
  for (int ch = 0; ch < x.c; ++ch) {
    for (int img = 0; img < x.n; ++img) {
      const T* p = x.data(ch, img);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.plane(); ++i) acc += p[i];
      y(img, ch) = static_cast<T>(acc / static_cast<double>(x.plane()));
    }
  }
  return y;
}

template <class T>
ActT<T> global_avg_pool_backward(const MatT<T>& dy, int h, int w) {
  ActT<T> dx(dy.cols, dy.rows, h, w);
  const T inv = T(1) / static_cast<T>(h * w);
  for (int ch = 0; ch < dx.c; ++ch) {
    for (int img = 0; img < dx.n; ++img) {
      T* p = dx.data(ch, img);
      for (std::size_t i = 0; i < dx.plane(); ++i) p[i] = dy(img, ch) * inv;
    }
  }
  return dx;
}

template <class T>
void add_inplace(std::span<T> dst, std::span<const T> src) {
  if (dst.size() != src.size()) throw std::invalid_argument("add_inplace: size mismatch");
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

#define DIRE_INSTANTIATE_KERNELS(T)                                                              \
  template ActT<T> conv2d_forward(const ConvGeom&, const ActT<T>&, std::span<const T>,           \
                                  std::span<const T>);                                          \
  template void conv2d_backward(const ConvGeom&, const ActT<T>&, std::span<const T>,            \
                                const ActT<T>&, std::span<T>, std::span<T>, ActT<T>*);          \
  template ActT<T> conv2d_forward_reference(const ConvGeom&, const ActT<T>&, std::span<const T>, \
                                            std::span<const T>);                                \
  template void conv2d_backward_reference(const ConvGeom&, const ActT<T>&, std::span<const T>,  \
                                          const ActT<T>&, std::span<T>, std::span<T>, ActT<T>*); \
  template MatT<T> linear_forward(const MatT<T>&, std::span<const T>, std::span<const T>, int);  \
  template void linear_backward(const MatT<T>&, std::span<const T>, const MatT<T>&,             \
                                std::span<T>, std::span<T>, MatT<T>*);                          \
  template void silu_inplace(std::span<T>);                                                     \
  template void silu_backward_inplace(std::span<const T>, std::span<T>);                        \
  template void relu_inplace(std::span<T>);                                                     \
  template void relu_backward_inplace(std::span<const T>, std::span<T>);                        \
  template ActT<T> film_forward(const ActT<T>&, const MatT<T>&);                                \
  template void film_backward(const ActT<T>&, const MatT<T>&, const ActT<T>&, ActT<T>&,         \
                              MatT<T>&);                                                        \
  template ActT<T> upsample2_forward(const ActT<T>&);                                           \
  template ActT<T> upsample2_backward(const ActT<T>&);                                          \
  template MatT<T> global_avg_pool_forward(const ActT<T>&);                                     \
  template ActT<T> global_avg_pool_backward(const MatT<T>&, int, int);                          \
  template void add_inplace(std::span<T>, std::span<const T>);

DIRE_INSTANTIATE_KERNELS(float)
DIRE_INSTANTIATE_KERNELS(double)

}  // namespace dire::nn
