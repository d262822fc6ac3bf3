#include "dire/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace dire {

std::string Shape::str() const {
  return "(" + std::to_string(channels) + "," + std::to_string(height) + "," +
         std::to_string(width) + ")";
}

ImageTensor::ImageTensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw std::invalid_argument("ImageTensor: non-positive dimension " + shape.str());
  }
}

ImageTensor::ImageTensor(Shape shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.numel()) {
    throw std::invalid_argument("ImageTensor: " + std::to_string(data_.size()) +
                                " values do not fill shape " + shape.str());
  }
}

float max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double mean(const ImageTensor& img) {
  double acc = 0.0;
  for (float v : img.values()) acc += v;
  return img.empty() ? 0.0 : acc / static_cast<double>(img.size());
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
  return acc / static_cast<double>(a.size());
}

double mse(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

ImageTensor clamp(ImageTensor img, float lo, float hi) {
  for (float& v : img.values()) v = std::clamp(v, lo, hi);
  return img;
}

bool all_finite(const ImageTensor& img) {
  return std::all_of(img.values().begin(), img.values().end(),
                     [](float v) { return std::isfinite(v); });
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("concat_channels: spatial mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  }
  std::vector<float> values;
  values.reserve(a.size() + b.size());
  values.insert(values.end(), a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return ImageTensor(Shape{a.channels() + b.channels(), a.height(), a.width()},
                     std::move(values));
}

}  // namespace dire
