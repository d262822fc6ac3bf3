#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "dire/analysis.hpp"
#include "dire/metrics.hpp"
#include "dire/perturb.hpp"
#include "support.hpp"

using namespace dire;
using testing::uniform_image;

namespace {

// Precision/recall at every distinct threshold, highest first; predicted
// positive means score >= threshold.
double ap_by_thresholds(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> th = s;
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  const double pos = std::count(y.begin(), y.end(), 1);
  double ap = 0.0, prev_recall = 0.0;
  for (double t : th) {
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp)++;
    const double recall = tp / pos, precision = double(tp) / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return 100.0 * ap;
}

}  // namespace

TEST_CASE("accuracy at the 0.5 threshold") {
  CHECK(accuracy(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 100.0);
  CHECK(accuracy(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 50.0);
  CHECK_THROWS_AS(accuracy(std::vector<double>{}, std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy(std::vector<double>{0.2}, std::vector<int>{1, 0}), std::invalid_argument);
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(8);
    std::vector<int> y(8);
    int hits = 0;
    for (int i = 0; i < 8; ++i) {
      s[i] = u(rng);
      y[i] = u(rng) < 0.5;
      if ((s[i] >= 0.5) == (y[i] == 1)) ++hits;
    }
    CHECK(accuracy(s, y) == doctest::Approx(100.0 * hits / 8));
  }
}

TEST_CASE("average precision small cases") {
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 100.0);
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}) == 25.0);
  CHECK(average_precision(std::vector<double>{0.3, 0.1, 0.7}, std::vector<int>{1, 1, 1}) == 100.0);
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.3, 0.1}, std::vector<int>{0, 0}), std::invalid_argument);
  // Ties keep input order: the negative listed first outranks the positive.
  CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 50.0);
  CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 100.0);
}

TEST_CASE("average precision equals the threshold-sweep oracle for every labeling of 8 items") {
  const std::vector<double> s{0.91, 0.13, 0.55, 0.72, 0.38, 0.07, 0.64, 0.29};
  int checked = 0;
  for (int mask = 1; mask < 256; ++mask) {
    std::vector<int> y(8);
    for (int i = 0; i < 8; ++i) y[i] = (mask >> i) & 1;
    CHECK(average_precision(s, y) == doctest::Approx(ap_by_thresholds(s, y)).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked == 255);
  CHECK_THROWS(average_precision(s, std::vector<int>(8, 0)));
}

TEST_CASE("average precision is invariant under monotone score transforms") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> s(20), t(20);
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) {
      s[i] = std::round(u(rng) * 10) / 10;  // coarse, so ties occur
      t[i] = std::exp(3 * s[i]) + 1;
      y[i] = u(rng) < 0.4;
    }
    y[0] = 1;
    CHECK(average_precision(s, y) == average_precision(t, y));
  }
}

TEST_CASE("gaussian blur") {
  SUBCASE("constant image is unchanged") {
    const ImageTensor c(2, 9, 13, 0.37f);
    for (double sigma : {1.0, 2.0, 3.0}) CHECK(max_abs_diff(gaussian_blur(c, sigma), c) <= 1e-6f);
  }
  SUBCASE("sigma 0 is the identity") {
    const ImageTensor x = uniform_image({1, 7, 7}, 1);
    CHECK(gaussian_blur(x, 0.0) == x);
  }
  SUBCASE("negative sigma is rejected") { CHECK_THROWS_AS(gaussian_blur(ImageTensor(1, 4, 4), -0.5), std::invalid_argument); }
  SUBCASE("impulse response center") {
    ImageTensor x(1, 15, 15);
    x.at(0, 7, 7) = 1.0f;
    // Independent taps for sigma = 1: radius 3, exp(-k^2 / 2) normalized.
    double total = 0.0;
    for (int k = -3; k <= 3; ++k) total += std::exp(-0.5 * k * k);
    const double center = 1.0 / total;
    const ImageTensor y = gaussian_blur(x, 1.0);
    CHECK(y.at(0, 7, 7) == doctest::Approx(center * center).epsilon(1e-6));
    CHECK(y.at(0, 7, 8) == doctest::Approx(center * std::exp(-0.5) / total).epsilon(1e-6));
    CHECK(y.at(0, 7, 11) == 0.0f);
    CHECK(gaussian_kernel(1.0).size() == 7);
    CHECK(gaussian_kernel(2.5).size() == 17);
  }
  SUBCASE("mean is preserved, including kernels wider than the image") {
    for (double sigma : {0.7, 1.0, 2.0, 3.0}) {
      const ImageTensor x = uniform_image({2, 8, 11}, 5);
      CHECK(mean(gaussian_blur(x, sigma)) == doctest::Approx(mean(x)).epsilon(1e-6));
    }
  }
}

TEST_CASE("jpeg quantization tables") {
  CHECK(jpeg_quant_table(50) == kJpegLuminance);
  const auto q100 = jpeg_quant_table(100);
  CHECK(std::all_of(q100.begin(), q100.end(), [](int v) { return v == 1; }));
  CHECK(jpeg_quant_table(10)[0] == 80);   // 16 * 500 / 100
  CHECK(jpeg_quant_table(75)[0] == 8);    // (16 * 50 + 50) / 100
  CHECK(jpeg_quant_table(1)[63] == 255);  // clamped
  CHECK_THROWS_AS(jpeg_quant_table(0), std::invalid_argument);
  CHECK_THROWS_AS(jpeg_compress(ImageTensor(1, 8, 8), 101), std::invalid_argument);
}

TEST_CASE("jpeg round trip") {
  SUBCASE("mid-gray survives") {
    const ImageTensor gray(1, 16, 16, static_cast<float>(128.0 / 127.5 - 1.0));
    for (int q : {30, 65, 95}) CHECK(max_abs_diff(jpeg_compress(gray, q), gray) <= 1.0f / 255.0f);
  }
  SUBCASE("stronger compression distorts more") {
    const ImageTensor tex = uniform_image({1, 32, 32}, 11);
    const double m65 = mse(jpeg_compress(tex, 65), tex);
    const double m30 = mse(jpeg_compress(tex, 30), tex);
    CHECK(m30 >= m65);
    CHECK(m65 > 0.0);
  }
  SUBCASE("a second pass adds no more distortion than the first") {
    for (int q : {30, 65}) {
      const ImageTensor tex = uniform_image({2, 20, 28}, 12);
      const ImageTensor once = jpeg_compress(tex, q);
      const ImageTensor twice = jpeg_compress(once, q);
      CHECK(mse(twice, once) <= mse(once, tex));
      CHECK(twice.shape() == tex.shape());
    }
  }
  SUBCASE("output stays in range") {
    const ImageTensor tex = uniform_image({1, 16, 16}, 13);
    const ImageTensor out = jpeg_compress(tex, 30);
    for (float v : out.values()) CHECK((v >= -1.0f && v <= 1.0f));
  }
}

TEST_CASE("perturbation parsing") {
  CHECK(Perturbation::parse("none").kind == Perturbation::Kind::None);
  CHECK(Perturbation::parse("blur:2") == Perturbation{Perturbation::Kind::Blur, 2.0});
  CHECK(Perturbation::parse("jpeg:65").str() == "jpeg:65");
  CHECK(Perturbation::parse("blur:1").str() == "blur:1");
  CHECK_THROWS(Perturbation::parse("jpeg:0"));
  CHECK_THROWS(Perturbation::parse("jpeg:6x"));
  CHECK_THROWS(Perturbation::parse("sharpen:1"));
}

TEST_CASE("spectrum of a constant and of an impulse") {
  const ImageTensor c(1, 8, 8, 0.5f);
  const auto f = dft2(c);
  CHECK(std::abs(f[0]) == doctest::Approx(32.0));
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(std::abs(f[i]) < 1e-9);
  const ImageTensor sc = fft_spectrum(c);
  CHECK(sc.at(0, 4, 4) == doctest::Approx(std::log1p(32.0)));
  CHECK(sc.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-9));

  ImageTensor imp(1, 6, 10);
  imp.at(0, 2, 7) = 1.0f;
  const ImageTensor flat = fft_spectrum(imp);
  for (float v : flat.values()) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("spectrum satisfies Parseval and matches a direct DFT") {
  const ImageTensor x = uniform_image({1, 12, 10}, 21);
  const auto f = dft2(x);
  double spatial = 0.0, freq = 0.0;
  for (float v : x.values()) spatial += double(v) * v;
  for (const auto& v : f) freq += std::norm(v);
  CHECK(std::abs(spatial - freq / 120.0) <= 1e-6 * spatial);

  const int H = 4, W = 6;
  const ImageTensor s = uniform_image({1, H, W}, 22);
  const auto g = dft2(s);
  for (int u = 0; u < H; ++u)
    for (int v = 0; v < W; ++v) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          acc += double(s.at(0, y, xx)) *
                 std::polar(1.0, -2.0 * std::numbers::pi * (double(u * y) / H + double(v * xx) / W));
      CHECK(std::abs(acc - g[u * W + v]) < 1e-9);
    }
  // Channels are averaged first.
  ImageTensor two(2, H, W);
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      two.at(0, y, xx) = 2 * s.at(0, y, xx);
      two.at(1, y, xx) = 0.0f;
    }
  CHECK(max_abs_diff(fft_spectrum(two), fft_spectrum(s)) < 1e-6f);
}

TEST_CASE("noise pattern residuals") {
  SUBCASE("constant image") { CHECK(noise_pattern(ImageTensor(1, 7, 7, 0.3f)) == ImageTensor(1, 7, 7, 0.0f)); }
  SUBCASE("pixel checkerboard: the 3x3 median is the center value itself") {
    ImageTensor cb(1, 8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) cb.at(0, y, x) = (x + y) % 2 ? 1.0f : -1.0f;
    // Five of the nine window entries share the center's color. Edges see
    // duplicated border samples instead, so only the interior is fixed.
    const ImageTensor r = noise_pattern(cb);
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x) CHECK(r.at(0, y, x) == 0.0f);
  }
  SUBCASE("alternating columns: the median takes the neighbours' value") {
    ImageTensor st(1, 8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) st.at(0, y, x) = x % 2 ? 1.0f : -1.0f;
    const ImageTensor r = noise_pattern(st);
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x) {
        CHECK(std::abs(r.at(0, y, x)) >= 0.5f);
        CHECK(r.at(0, y, x) == doctest::Approx(x % 2 ? 2.0f : -2.0f));
      }
  }
  SUBCASE("single impulse") {
    for (auto [y, x] : {std::pair{3, 4}, std::pair{0, 0}, std::pair{6, 2}}) {
      ImageTensor imp(1, 7, 7);
      imp.at(0, y, x) = 0.8f;
      const ImageTensor r = noise_pattern(imp);
      CHECK(r.at(0, y, x) == 0.8f);
    }
  }
  SUBCASE("export normalization") {
    ImageTensor r(1, 2, 2);
    r[0] = -0.5f;
    r[1] = 0.25f;
    const ImageTensor n = normalize_symmetric(r);
    CHECK(n[0] == -1.0f);
    CHECK(n[1] == 0.5f);
    CHECK(normalize_symmetric(ImageTensor(1, 2, 2)) == ImageTensor(1, 2, 2));
    const ImageTensor m = normalize_range(r);
    CHECK(m[0] == -1.0f);
    CHECK(m[1] == 1.0f);
  }
}
