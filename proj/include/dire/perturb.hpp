#pragma once

// Test-time degradations: separable Gaussian blur and a quantization-only
// grayscale JPEG round trip (per channel, 8x8 DCT, no chroma subsampling, no
// entropy coding).

#include <array>
#include <string>
#include <vector>

#include "dire/tensor.hpp"

namespace dire {

/// Normalized taps w[-r..r] for radius r = ceil(3 sigma); sigma = 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur with half-sample symmetric borders (x[-1] = x[0]), which
/// keeps the image mean. sigma = 0 returns the input unchanged.
ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

/// Base luminance quantization table, row-major 8x8.
extern const std::array<int, 64> kJpegLuminance;

/// Table scaled by the conventional quality rule, entries clamped to [1, 255].
std::array<int, 64> jpeg_quant_table(int quality);

/// Pixels are mapped [-1,1] -> [0,255] and rounded to 8-bit levels before
/// coding; the decoded image is rounded and clamped to 8-bit levels again.
ImageTensor jpeg_compress(const ImageTensor& img, int quality);

struct Perturbation {
  enum class Kind { None, Blur, Jpeg };
  Kind kind = Kind::None;
  double value = 0.0;

  /// "none", "blur:<sigma>", "jpeg:<quality>".
  static Perturbation parse(const std::string& s);
  std::string str() const;
  bool operator==(const Perturbation&) const = default;
};

ImageTensor apply_perturbation(const ImageTensor& img, const Perturbation& p);

}  // namespace dire
