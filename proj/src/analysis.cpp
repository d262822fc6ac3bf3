#include "dire/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fftw3.h>

namespace dire {

namespace {

// The FFTW planner is not thread-safe; plan execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

ImageTensor channel_mean(const ImageTensor& img) {
  ImageTensor out(1, img.height(), img.width());
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = img.plane(c);
    for (std::size_t i = 0; i < plane; ++i) out[i] += p[i];
  }
  if (img.channels() > 1)
    for (std::size_t i = 0; i < plane; ++i) out[i] /= static_cast<float>(img.channels());
  return out;
}

std::vector<std::complex<double>> dft2(const ImageTensor& img) {
  const ImageTensor g = channel_mean(img);
  const int H = g.height(), W = g.width();
  const std::size_t n = static_cast<std::size_t>(H) * W;
  fftw_complex* buf = fftw_alloc_complex(n);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(H, W, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = g[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(plan);
  std::vector<std::complex<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {buf[i][0], buf[i][1]};
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return out;
}

ImageTensor fft_spectrum(const ImageTensor& img) {
  const auto f = dft2(img);
  const int H = img.height(), W = img.width();
  ImageTensor out(1, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto& v = f[static_cast<std::size_t>(y) * W + x];
      out.at(0, (y + H / 2) % H, (x + W / 2) % W) = static_cast<float>(std::log1p(std::abs(v)));
    }
  return out;
}

namespace {

int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

ImageTensor noise_pattern(const ImageTensor& img) {
  const int H = img.height(), W = img.width();
  ImageTensor out(img.shape());
  float win[9];
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) win[k++] = img.at(c, reflect(y + dy, H), reflect(x + dx, W));
        std::nth_element(win, win + 4, win + 9);
        out.at(c, y, x) = img.at(c, y, x) - win[4];
      }
  return out;
}

ImageTensor normalize_symmetric(const ImageTensor& img) {
  float peak = 0.0f;
  for (float v : img.values()) peak = std::max(peak, std::abs(v));
  ImageTensor out(img.shape());
  if (peak == 0.0f) return out;
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] / peak;
  return out;
}

ImageTensor normalize_range(const ImageTensor& img) {
  ImageTensor out(img.shape(), -1.0f);
  if (img.empty()) return out;
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  const float span = *hi - *lo;
  if (span == 0.0f) return out;
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = 2.0f * (img[i] - *lo) / span - 1.0f;
  return out;
}

}  // namespace dire
