#include "dire/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dire {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    w[static_cast<std::size_t>(k + r)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += w[static_cast<std::size_t>(k + r)];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

void blur_line(const float* src, float* dst, int n, std::ptrdiff_t stride, const std::vector<double>& w) {
  const int r = static_cast<int>(w.size() / 2);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -r; k <= r; ++k) acc += w[static_cast<std::size_t>(k + r)] * src[reflect(i + k, n) * stride];
    dst[i * stride] = static_cast<float>(acc);
  }
}

}  // namespace

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  const std::vector<double> w = gaussian_kernel(sigma);
  if (w.size() == 1) return img;
  const int H = img.height(), W = img.width();
  ImageTensor tmp(img.shape()), out(img.shape());
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < img.channels(); ++c) {
    const float* src = img.values().data() + c * plane;
    float* mid = tmp.values().data() + c * plane;
    float* dst = out.values().data() + c * plane;
    for (int y = 0; y < H; ++y) blur_line(src + y * W, mid + y * W, W, 1, w);
    for (int x = 0; x < W; ++x) blur_line(mid + x, dst + x, H, W, w);
  }
  return out;
}

const std::array<int, 64> kJpegLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg: quality must be in [1, 100], got " + std::to_string(quality));
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((kJpegLuminance[i] * scale + 50) / 100, 1, 255);
  return q;
}

namespace {

// Orthonormal DCT-II basis: C[u][x] = a(u) cos((2x + 1) u pi / 16).
std::array<double, 64> dct_basis() {
  std::array<double, 64> c{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x)
      c[static_cast<std::size_t>(u * 8 + x)] =
          (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
  return c;
}

double to_level(float v) { return std::clamp(std::round((static_cast<double>(v) + 1.0) * 127.5), 0.0, 255.0); }

}  // namespace

ImageTensor jpeg_compress(const ImageTensor& img, int quality) {
  const std::array<int, 64> q = jpeg_quant_table(quality);
  static const std::array<double, 64> C = dct_basis();
  const int H = img.height(), W = img.width();
  ImageTensor out(img.shape());
  double block[64], coef[64], tmp[64];
  for (int c = 0; c < img.channels(); ++c) {
    for (int by = 0; by < H; by += 8) {
      for (int bx = 0; bx < W; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y * 8 + x] = to_level(img.at(c, std::min(by + y, H - 1), std::min(bx + x, W - 1))) - 128.0;
        // Forward: coef = C * block * C^T.
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += C[u * 8 + y] * block[y * 8 + x];
            tmp[u * 8 + x] = s;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * C[v * 8 + x];
            const double qv = q[static_cast<std::size_t>(u * 8 + v)];
            coef[u * 8 + v] = std::round(s / qv) * qv;
          }
        // Inverse: block = C^T * coef * C.
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += C[u * 8 + y] * coef[u * 8 + v];
            tmp[y * 8 + v] = s;
          }
        for (int y = 0; y < 8 && by + y < H; ++y)
          for (int x = 0; x < 8 && bx + x < W; ++x) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += tmp[y * 8 + v] * C[v * 8 + x];
            const double level = std::clamp(std::round(s + 128.0), 0.0, 255.0);
            out.at(c, by + y, bx + x) = static_cast<float>(level / 127.5 - 1.0);
          }
      }
    }
  }
  return out;
}

Perturbation Perturbation::parse(const std::string& s) {
  if (s == "none" || s.empty()) return {};
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("unknown perturbation '" + s + "'");
  const std::string kind = s.substr(0, colon);
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad perturbation value in '" + s + "'");
  }
  if (kind == "blur") {
    if (value < 0.0) throw std::invalid_argument("blur sigma must be >= 0");
    return {Kind::Blur, value};
  }
  if (kind == "jpeg") {
    if (value < 1 || value > 100 || value != std::floor(value))
      throw std::invalid_argument("jpeg quality must be an integer in [1, 100]");
    return {Kind::Jpeg, value};
  }
  throw std::invalid_argument("unknown perturbation '" + s + "'");
}

std::string Perturbation::str() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Blur: os << "blur:" << value; break;
    case Kind::Jpeg: os << "jpeg:" << static_cast<int>(value); break;
  }
  return os.str();
}

ImageTensor apply_perturbation(const ImageTensor& img, const Perturbation& p) {
  switch (p.kind) {
    case Perturbation::Kind::None: return img;
    case Perturbation::Kind::Blur: return gaussian_blur(img, p.value);
    case Perturbation::Kind::Jpeg: return jpeg_compress(img, static_cast<int>(p.value));
  }
  return img;
}

}  // namespace dire
