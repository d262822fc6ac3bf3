#include <doctest.h>

#include <cmath>
#include <random>

#include "dire/schedule.hpp"
#include "support.hpp"

using namespace dire;

TEST_CASE("two-step schedule with beta 0.5") {
  const NoiseSchedule s = linear_schedule(2, 0.5, 0.5);
  REQUIRE(s.steps() == 2);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == 0.5);
  CHECK(s.alpha_bar(2) == 0.25);
}

TEST_CASE("near-zero noise keeps alpha_bar at one") {
  const NoiseSchedule s = linear_schedule(1, 1e-12, 1e-12);
  CHECK(std::abs(s.alpha_bar(1) - 1.0) < 1e-10);
}

TEST_CASE("T=200 linear schedule matches a direct product loop") {
  const int T = 200;
  const NoiseSchedule s = linear_schedule(T, 1e-4, 0.02);
  // Independent construction: betas from numpy-style linspace, then a running product.
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i) betas[i] = 1e-4 + (0.02 - 1e-4) * i / (T - 1);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    prod *= 1.0 - betas[t - 1];
    CHECK(std::abs(s.alpha_bar(t) - prod) <= 1e-12 * prod);
  }
  CHECK(s.alpha_bar(T) > 0.0);
  CHECK(s.alpha_bar(T) < 1.0);
  CHECK(std::abs(s.beta(1) - 1e-4) < 1e-15);
  CHECK(std::abs(s.beta(T) - 0.02) < 1e-12);
}

TEST_CASE("schedule invariants are enforced at construction") {
  CHECK_THROWS_AS(NoiseSchedule({0.9, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.1, 1.0), std::invalid_argument);
  const NoiseSchedule s = linear_schedule(10, 0.01, 0.2);
  CHECK_THROWS_AS(s.alpha_bar(11), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(-1), std::out_of_range);
  for (int t = 1; t <= 10; ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.posterior_variance(t) >= 0.0);
  }
}

TEST_CASE("q_sample closed form") {
  const Shape sh{1, 4, 4};
  const ImageTensor x0 = testing::uniform_image(sh, 1);
  const ImageTensor e = testing::uniform_image(sh, 2);
  const NoiseSchedule s = linear_schedule(20, 1e-3, 0.1);

  SUBCASE("t = 0 returns x0 exactly") { CHECK(q_sample(x0, 0, e, s) == x0); }
  SUBCASE("alpha_bar 0 returns the noise exactly") { CHECK(q_sample(x0, e, 0.0) == e); }
  SUBCASE("zeros and ones at alpha_bar 0.25") {
    const ImageTensor out = q_sample(ImageTensor(sh, 0.0f), ImageTensor(sh, 1.0f), 0.25);
    for (float v : out.values()) CHECK(v == doctest::Approx(0.8660254).epsilon(1e-6));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(q_sample(x0, 3, ImageTensor(1, 4, 5), s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(x0, e, 1.5), std::invalid_argument);
  }
  SUBCASE("homogeneous in (x0, eps)") {
    const float a = -1.75f;
    ImageTensor ax = x0, ae = e;
    for (float& v : ax.values()) v *= a;
    for (float& v : ae.values()) v *= a;
    const ImageTensor lhs = q_sample(ax, 7, ae, s);
    const ImageTensor rhs = q_sample(x0, 7, e, s);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(a * rhs[i]).epsilon(1e-6));
  }
}

TEST_CASE("q_sample variance over many noise draws") {
  // Var(out) = abar Var(x0) + (1 - abar) for unit-variance eps, x0 uniform on [-1, 1].
  const NoiseSchedule s = linear_schedule(200, 1e-4, 0.02);
  const int t = 60;
  const double ab = s.alpha_bar(t);
  const int n = 20000;
  Rng rng(99);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    ImageTensor x0(1, 1, 1, u(rng));
    const ImageTensor e = standard_normal({1, 1, 1}, rng);
    const double v = q_sample(x0, t, e, s)[0];
    sum += v;
    sum2 += v * v;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  const double expect = ab / 3.0 + (1.0 - ab);
  // Standard error of a sample variance is about sqrt(2 / n) * sigma^2 for near-normal data.
  const double se = std::sqrt(2.0 / n) * expect * 1.2;
  CHECK(std::abs(var - expect) < 3.0 * se);
}
