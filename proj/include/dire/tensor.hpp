#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dire {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Channels x height x width image with pixels nominally in [-1, 1].
/// Source images, reconstructions, DIRE maps and detector inputs all use it.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Shape shape, float fill = 0.0f);
  ImageTensor(int channels, int height, int width, float fill = 0.0f)
      : ImageTensor(Shape{channels, height, width}, fill) {}
  ImageTensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::span<const float> plane(int c) const {
    return std::span<const float>(data_).subspan(
        static_cast<std::size_t>(c) * shape_.height * shape_.width,
        static_cast<std::size_t>(shape_.height) * shape_.width);
  }

  bool operator==(const ImageTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

using ImageBatch = std::vector<ImageTensor>;

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
}

float max_abs_diff(const ImageTensor& a, const ImageTensor& b);
double mean(const ImageTensor& img);
double mean_abs_diff(const ImageTensor& a, const ImageTensor& b);
double mse(const ImageTensor& a, const ImageTensor& b);
ImageTensor clamp(ImageTensor img, float lo, float hi);
bool all_finite(const ImageTensor& img);

/// Channel concatenation: all channels of `a` followed by all channels of `b`.
ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b);

}  // namespace dire
