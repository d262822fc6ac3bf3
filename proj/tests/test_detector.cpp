#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>

#include "dire/detector.hpp"
#include "dire/epsnet.hpp"
#include "dire/metrics.hpp"
#include "support.hpp"

using namespace dire;
namespace fs = std::filesystem;

namespace {

DetectorConfig small_cfg() {
  DetectorConfig c;
  c.base_width = 4;
  return c;
}

// Real images carry a residual of magnitude 1 on a random sparse set of
// pixels, generated ones are zero; optionally mirrored to be left-right symmetric.
LabeledSet separable(int per_class, std::uint64_t seed, bool symmetric = false) {
  LabeledSet s;
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int y = i % 2;
    ImageTensor img(1, 32, 32);
    if (y == 0)
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < (symmetric ? 16 : 32); ++c) {
          const float v = u(rng) < 0.5f ? 1.0f : 0.0f;
          img.at(0, r, c) = v;
          if (symmetric) img.at(0, r, 31 - c) = v;
        }
    s.inputs.push_back(std::move(img));
    s.labels.push_back(y == 0 ? 0 : 1);
  }
  // Label 1 marks generated images, whose residual is small.
  return s;
}

}  // namespace

TEST_CASE("binary cross-entropy values") {
  const std::vector<int> y{1, 0, 1, 0};
  CHECK(bce_loss(y, std::vector<double>(4, 0.5)) == doctest::Approx(4 * std::log(2.0)).epsilon(1e-12));
  const double perfect = bce_loss(y, std::vector<double>{1.0, 0.0, 1.0, 0.0});
  CHECK(perfect <= 4 * -std::log(1.0 - 1e-7) * (1 + 1e-9));
  CHECK(perfect > 0.0);
  CHECK(bce_loss(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.2}) ==
        doctest::Approx(-(std::log(0.9) + std::log(0.8))).epsilon(1e-12));
  CHECK(bce_loss(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.2}) == doctest::Approx(0.3285).epsilon(1e-4));
  CHECK_THROWS_AS(bce_loss(y, std::vector<double>(3, 0.5)), std::invalid_argument);
}

TEST_CASE("cross-entropy gradient with respect to the probability") {
  const std::vector<int> y{1, 0, 0, 1};
  std::vector<double> p{0.3, 0.8, 0.05, 0.99};
  const auto g = bce_grad(y, p);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(g[i] == doctest::Approx((p[i] - y[i]) / (p[i] * (1 - p[i]))).epsilon(1e-12));
    const double h = 1e-7, keep = p[i];
    p[i] = keep + h;
    const double up = bce_loss(y, p);
    p[i] = keep - h;
    const double down = bce_loss(y, p);
    p[i] = keep;
    CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("training augmentation") {
  const ImageTensor img = testing::uniform_image({2, 32, 32}, 1);
  Rng rng(5);
  CHECK(augment_train(img, 28, rng).shape() == Shape{2, 28, 28});
  CHECK_THROWS_AS(augment_train(ImageTensor(1, 20, 32), 28, rng), std::invalid_argument);

  SUBCASE("flip frequency") {
    Rng r(17);
    int flips = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) flips += draw_crop(32, 32, 28, r).flipped ? 1 : 0;
    const double f = double(flips) / n;
    CHECK(f >= 0.48);
    CHECK(f <= 0.52);
  }
  SUBCASE("crop offsets are uniform over the 5x5 positions") {
    Rng r(23);
    std::array<int, 25> cells{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const CropDraw d = draw_crop(32, 32, 28, r);
      REQUIRE(d.y >= 0);
      REQUIRE(d.y <= 4);
      REQUIRE(d.x >= 0);
      REQUIRE(d.x <= 4);
      cells[d.y * 5 + d.x]++;
    }
    const double expect = n / 25.0;
    double chi2 = 0.0;
    for (int c : cells) chi2 += (c - expect) * (c - expect) / expect;
    // Upper 1% point of chi-square with 24 degrees of freedom.
    CHECK(chi2 < 42.980);
  }
  SUBCASE("crops copy the right window and mirror when flipped") {
    const ImageTensor c = crop_at(img, 3, 1, 28, false);
    const ImageTensor f = crop_at(img, 3, 1, 28, true);
    CHECK(c.at(1, 0, 0) == img.at(1, 3, 1));
    CHECK(f.at(1, 0, 0) == img.at(1, 3, 28));
    CHECK(f.at(0, 5, 27) == c.at(0, 5, 0));
  }
}

TEST_CASE("center crop") {
  const ImageTensor img = testing::uniform_image({1, 32, 32}, 2);
  const ImageTensor c = center_crop(img, 28);
  REQUIRE(c.shape() == Shape{1, 28, 28});
  CHECK(c.at(0, 0, 0) == img.at(0, 2, 2));
  CHECK(c.at(0, 27, 27) == img.at(0, 29, 29));
  CHECK(center_crop(c, 28) == c);
  // The central cell of the 5x5 offset grid, which is also the mean offset.
  CHECK(c == crop_at(img, 2, 2, 28, false));
  CHECK_THROWS_AS(center_crop(ImageTensor(1, 27, 32), 28), std::invalid_argument);
}

TEST_CASE("detector gradients agree with central differences") {
  DetectorConfig cfg = small_cfg();
  cfg.in_channels = 2;
  const Detector init = Detector::init(cfg, 4);
  DetectorNet<double> net(cfg);
  net.params().assign_from(init.net().params());
  Rng rng(6);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto& p : net.params().all())
    if (p.shape.size() == 1)
      for (double& v : p.value) v = nd(rng);
  ImageBatch xs;
  for (int i = 0; i < 4; ++i) xs.push_back(testing::uniform_image({2, 28, 28}, 30 + i));
  const auto x = to_act<double>(xs);
  const std::vector<int> labels{0, 1, 1, 0};
  net.params().zero_grad();
  detector_loss(net, x, labels, true);
  const double h = 1e-4;
  for (auto& p : net.params().all()) {
    CAPTURE(p.name);
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = static_cast<std::size_t>(rng() % p.size());
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double up = detector_loss(net, x, labels, false);
      p.value[i] = keep - h;
      const double down = detector_loss(net, x, labels, false);
      p.value[i] = keep;
      const double fd = (up - down) / (2 * h);
      CHECK(std::abs(p.grad[i] - fd) <= 1e-3 * std::max(std::abs(p.grad[i]), std::abs(fd)) + 1e-9);
    }
  }
}

TEST_CASE("predictions are probabilities and deterministic") {
  const Detector d = Detector::init(small_cfg(), 9);
  for (int i = 0; i < 5; ++i) {
    const ImageTensor x = testing::uniform_image({1, 32, 32}, 40 + i, -3.0f, 3.0f);
    const double p = d.predict(x);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(d.predict(x) == p);
    CHECK(d.predict(center_crop(x, 28)) == p);
  }
  CHECK_THROWS_AS(d.predict(ImageTensor(2, 32, 32)), std::invalid_argument);
  CHECK_THROWS_AS(d.predict(ImageTensor(1, 20, 20)), std::invalid_argument);
}

TEST_CASE("separable toy is learned quickly and reproducibly") {
  const LabeledSet train = separable(64, 1), val = separable(32, 2);
  DetectorTrainConfig tc;
  tc.steps = 200;
  tc.eval_every = 20;
  tc.seed = 3;
  const auto a = train_detector(train, val, small_cfg(), tc);
  const auto b = train_detector(train, val, small_cfg(), tc, 3);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.model.net().params() == b.model.net().params());
  CHECK(a.best_val_acc == 100.0);
  const auto scores = a.model.predict_batch(val.inputs);
  double gen = 0.0, real = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) (val.labels[i] ? gen : real) += scores[i];
  CHECK(gen > real);
  CHECK(accuracy(scores, val.labels) == 100.0);
}

TEST_CASE("flip augmentation on a mirror-symmetric dataset") {
  const LabeledSet train = separable(48, 5, true), val = separable(32, 6, true);
  DetectorTrainConfig tc;
  tc.steps = 150;
  tc.eval_every = 25;
  tc.seed = 8;
  const auto with = train_detector(train, val, small_cfg(), tc);
  tc.flip = false;
  const auto without = train_detector(train, val, small_cfg(), tc);
  CHECK(with.best_val_acc == without.best_val_acc);
  auto tail = [](const std::vector<double>& v) {
    double m = 0.0;
    for (std::size_t i = v.size() - 50; i < v.size(); ++i) m += v[i];
    return m / 50;
  };
  // Both runs converge to a similar loss level; flips only change which crops are drawn.
  CHECK(std::abs(tail(with.loss_trace) - tail(without.loss_trace)) < 0.5 * std::max(tail(with.loss_trace), 0.05));
}

TEST_CASE("training rejects a single-class dataset") {
  LabeledSet s = separable(8, 1);
  for (int& y : s.labels) y = 1;
  CHECK_THROWS_AS(train_detector(s, {}, small_cfg(), DetectorTrainConfig{}), std::invalid_argument);
}

TEST_CASE("input standardization") {
  ImageBatch imgs;
  for (int i = 0; i < 4; ++i) {
    ImageTensor t(2, 3, 3);
    for (int k = 0; k < 9; ++k) {
      t.at(0, k / 3, k % 3) = static_cast<float>(i * 9 + k);  // 0..35
      t.at(1, k / 3, k % 3) = 0.01f * ((i + k) % 2 ? 1.0f : -1.0f) + 3.0f;
    }
    imgs.push_back(t);
  }
  const InputNorm n = fit_input_norm(imgs);
  // Channel 0 holds 0..35: mean 17.5, population variance (36^2 - 1) / 12.
  CHECK(n.shift[0] == doctest::Approx(17.5));
  CHECK(n.scale[0] == doctest::Approx(1.0 / std::sqrt((36.0 * 36.0 - 1.0) / 12.0)));
  CHECK(n.shift[1] == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(1.0 / n.scale[1] == doctest::Approx(0.01).epsilon(0.01));
  CHECK_THROWS_AS(fit_input_norm({}), std::invalid_argument);
  // A constant channel gets a finite scale.
  CHECK(std::isfinite(fit_input_norm({ImageTensor(1, 2, 2, 0.5f)}).scale[0]));

  Detector d = Detector::init(small_cfg(), 3);
  const ImageTensor x = testing::uniform_image({1, 32, 32}, 4);
  CHECK(d.normalize(x) == x);
  d.set_input_norm({{0.5f}, {2.0f}});
  CHECK(d.normalize(x).at(0, 1, 2) == doctest::Approx((x.at(0, 1, 2) - 0.5f) * 2.0f));
  CHECK_THROWS_AS(d.set_input_norm({{0.5f, 1.0f}, {2.0f, 1.0f}}), std::invalid_argument);

  // Standardizing makes training invariant to an affine change of input units.
  LabeledSet a, b;
  for (int i = 0; i < 16; ++i) {
    ImageTensor t = testing::uniform_image({1, 32, 32}, 100 + i, 0.0f, i % 2 ? 0.02f : 0.01f);
    a.inputs.push_back(t);
    for (float& v : t.values()) v = 4.0f * v + 1.0f;
    b.inputs.push_back(t);
    a.labels.push_back(i % 2);
    b.labels.push_back(i % 2);
  }
  DetectorTrainConfig tc;
  tc.steps = 20;
  tc.eval_every = 10;
  tc.seed = 5;
  const auto ra = train_detector(a, a, small_cfg(), tc), rb = train_detector(b, b, small_cfg(), tc);
  for (std::size_t i = 0; i < ra.loss_trace.size(); ++i)
    CHECK(ra.loss_trace[i] == doctest::Approx(rb.loss_trace[i]).epsilon(1e-3));
}

TEST_CASE("detector checkpoint round trip") {
  Detector d = Detector::init(small_cfg(), 12);
  d.set_input_norm({{0.25f}, {3.0f}});
  const fs::path dir = fs::temp_directory_path() / "dire_test_detector";
  fs::create_directories(dir);
  d.save(dir / "d.dird", {{"input_mode", "DIRE"}});
  const Detector back = Detector::load(dir / "d.dird");
  CHECK(back.net().params() == d.net().params());
  CHECK(back.input_norm() == d.input_norm());
  const ImageTensor x = testing::uniform_image({1, 32, 32}, 13);
  CHECK(back.predict(x) == d.predict(x));
  CHECK_THROWS(EpsModel::load(dir / "d.dird"));
  fs::remove_all(dir);
}
