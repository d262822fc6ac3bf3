#pragma once

#include <complex>
#include <vector>

#include "dire/tensor.hpp"

namespace dire {

/// Channel mean, shape (1, H, W).
ImageTensor channel_mean(const ImageTensor& img);

/// Unnormalized 2-D DFT of the channel-mean image, row-major H x W, DC at (0, 0).
std::vector<std::complex<double>> dft2(const ImageTensor& img);

/// log(1 + |F|) of the channel-mean image with DC moved to (H/2, W/2).
ImageTensor fft_spectrum(const ImageTensor& img);

/// img - median3x3(img) per channel, with half-sample symmetric borders.
ImageTensor noise_pattern(const ImageTensor& img);

/// Affine map of a residual to [-1, 1] by its largest magnitude; all-zero input stays zero.
ImageTensor normalize_symmetric(const ImageTensor& img);

/// Affine map of [min, max] to [-1, 1]; a constant image maps to -1.
ImageTensor normalize_range(const ImageTensor& img);

}  // namespace dire
