#include <cmath>

#include "doctest.h"
#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/noise_model.hpp"
#include "test_util.hpp"

using namespace pgs;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const ImageTensor& img) {
  Moments m;
  for (float v : img.data()) m.mean += v;
  m.mean /= img.size();
  for (float v : img.data()) m.var += (v - m.mean) * (v - m.mean);
  m.var /= img.size() - 1;
  return m;
}

}  // namespace

TEST_CASE("pg levels") {
  CHECK(pg_level(1).alpha == 0.1);
  CHECK(pg_level(1).sigma1 == 0.02);
  CHECK(pg_level(3).alpha == 0.05);
  CHECK(pg_level(3).sigma1 == 0.02);
  CHECK_THROWS_AS(pg_level(0), Error);
  CHECK_THROWS_AS(pg_level(6), Error);
  CHECK_THROWS_AS(NoiseParams::single(-0.1, 0.0).validate(), Error);
}

TEST_CASE("exact corruption moments") {
  SeededRng rng(21);
  ImageTensor zero(64, 64, 1, 0.0f);
  auto y0 = corrupt_exact(zero, NoiseParams::single(0.05, 0.0), rng);
  for (float v : y0.data()) CHECK(v == 0.0f);

  ImageTensor x(1000, 1000, 1, 0.5f);
  auto y = corrupt_exact(x, NoiseParams::single(0.05, 0.02), rng);
  auto m = moments(y);
  CHECK(std::abs(m.mean - 0.5) < 0.001);
  CHECK(std::abs(m.var / 0.0254 - 1.0) < 0.02);

  SeededRng a(4), b(4);
  CHECK(corrupt_exact(zero, NoiseParams::single(0.05, 0.02), a) ==
        corrupt_exact(zero, NoiseParams::single(0.05, 0.02), b));
}

TEST_CASE("gaussian approximation moments") {
  SeededRng rng(22);
  auto x = test::random_image(rng, 16, 16);
  CHECK(corrupt_gaussian_approx(x, {}, rng) == x);

  ImageTensor half(1000, 1000, 1, 0.5f);
  auto m = moments(corrupt_gaussian_approx(half, NoiseParams::single(0.05, 0.02), rng));
  CHECK(std::abs(m.var / 0.0254 - 1.0) < 0.02);

  ImageTensor one(1000, 1000, 1, 1.0f);
  auto m1 = moments(corrupt_gaussian_approx(one, NoiseParams::single(0.01, 0.0002), rng));
  CHECK(std::abs(m1.var / 0.01000004 - 1.0) < 0.02);
}

TEST_CASE("gat closed form") {
  CHECK(gat_value(0.5, 0.1, 0.02) == doctest::Approx(4.6540).epsilon(1e-4));
  CHECK(gat_value(0.0, 2.0, 0.0) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-9));
  CHECK(gat_inverse_value(4.6540, 0.1, 0.02) == doctest::Approx(0.5).epsilon(1e-4));
  ImageTensor g(2, 2, 1, 0.0f);
  const auto inv = gat_inverse_algebraic(g, NoiseParams::single(1.0, 0.0));
  for (float v : inv.data()) CHECK(v == -0.375f);
  // Negative root argument clips to zero.
  CHECK(gat_value(-1.0, 0.1, 0.02) == 0.0);
}

TEST_CASE("gat stabilizes flat patches") {
  SeededRng rng(23);
  const auto p = NoiseParams::single(0.05, 0.02);
  for (float level : {0.2f, 0.5f, 0.8f}) {
    ImageTensor x(256, 256, 1, level);
    auto g = gat(corrupt_exact(x, p, rng), p);
    const double g0 = gat_value(level, p.alpha, p.sigma1);
    double v = 0.0;
    for (float s : g.data()) v += (s - g0) * (s - g0);
    v /= g.size();
    CHECK(v > 0.95);
    CHECK(v < 1.05);
  }
}

TEST_CASE("gat round trip and partials") {
  SeededRng rng(24);
  for (int i = 0; i < 1000; ++i) {
    const double a = 0.001 + 0.2 * rng.uniform();
    const double s = 0.05 * rng.uniform();
    const double y = 1.5 * rng.uniform();
    CHECK(std::abs(gat_inverse_value(gat_value(y, a, s), a, s) - y) < 1e-9);
    const auto gp = gat_partials(y, a, s);
    const double h = 1e-7;
    const double da = (gat_value(y, a + h, s) - gat_value(y, a - h, s)) / (2 * h);
    const double ds = (gat_value(y, a, s + h) - gat_value(y, a, s - h)) / (2 * h);
    CHECK(test::rel_err(gp.d_alpha, da) < 1e-5);
    if (s > 1e-3) CHECK(test::rel_err(gp.d_sigma, ds) < 1e-5);
  }
}
