#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pgs/dataset.hpp"
#include "pgs/error.hpp"
#include "pgs/variance_estimator.hpp"
#include "test_util.hpp"

using namespace pgs;

TEST_CASE("patch geometry") {
  CHECK(PatchConfig{8, 1}.count(8, 8) == 1);
  CHECK(PatchConfig{8, 2}.count(10, 10) == 4);
  CHECK_THROWS_AS((PatchConfig{0, 1}.validate()), Error);

  ImageTensor flat(12, 12, 1, 0.3f);
  auto p = extract_patches(flat, {4, 2});
  CHECK(p.rows == 25);
  CHECK(p.cols == 16);
  for (std::size_t r = 1; r < p.rows; ++r)
    for (std::size_t c = 0; c < p.cols; ++c) CHECK(p(r, c) == p(0, c));

  SeededRng rng(2);
  auto img = test::random_image(rng, 9, 7);
  auto q = extract_patches(img, {4, 2});
  // 3 x 2 anchor grid; patch row 3 is anchored at (2, 2).
  CHECK(q.rows == 6);
  CHECK(q(3, 0) == img.at(2, 2));
  CHECK(q(3, 4) == img.at(3, 2));
  CHECK(q(3, 15) == img.at(5, 5));
}

TEST_CASE("patch covariance") {
  Matrix same(2, 3);
  for (std::size_t c = 0; c < 3; ++c) same(0, c) = same(1, c) = 0.1 * c;
  for (double v : patch_covariance(same).data) CHECK(v == 0.0);

  SeededRng rng(3);
  Matrix m(5, 4);
  for (auto& v : m.data) v = rng.normal();
  auto cov = patch_covariance(m);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double mi = 0, mj = 0;
      for (std::size_t r = 0; r < 5; ++r) mi += m(r, i), mj += m(r, j);
      mi /= 5, mj /= 5;
      double s = 0;
      for (std::size_t r = 0; r < 5; ++r) s += (m(r, i) - mi) * (m(r, j) - mj);
      CHECK(std::abs(cov(i, j) - s / 4) < 1e-6);
      CHECK(cov(i, j) == cov(j, i));
    }
  }

  Matrix big(20000, 6);
  for (auto& v : big.data) v = 0.5 * rng.normal();
  auto c2 = patch_covariance(big);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(c2(i, j) - (i == j ? 0.25 : 0.0)) < 0.015);
}

TEST_CASE("symmetric eigenvalues") {
  Matrix d(3, 3);
  d(0, 0) = 3, d(1, 1) = 1, d(2, 2) = 2;
  auto ev = sym_eigenvalues(d);
  CHECK(ev == std::vector<double>{1, 2, 3});

  Matrix two(2, 2);
  two(0, 0) = two(1, 1) = 2;
  two(0, 1) = two(1, 0) = 1;
  auto e2 = sym_eigenvalues(two);
  CHECK(e2[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e2[1] == doctest::Approx(3.0).epsilon(1e-12));

  SeededRng rng(4);
  Matrix r(16, 16);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j <= i; ++j) r(i, j) = r(j, i) = rng.normal();
  auto eig = sym_eigen(r);
  double trace = 0;
  for (std::size_t i = 0; i < 16; ++i) trace += r(i, i);
  CHECK(std::abs(std::accumulate(eig.values.begin(), eig.values.end(), 0.0) - trace) < 1e-8);
  // A v = lambda v for every pair.
  for (std::size_t k = 0; k < 16; ++k) {
    for (std::size_t i = 0; i < 16; ++i) {
      double av = 0;
      for (std::size_t j = 0; j < 16; ++j) av += r(i, j) * eig.vectors(j, k);
      CHECK(std::abs(av - eig.values[k] * eig.vectors(i, k)) < 1e-8);
    }
  }
}

TEST_CASE("truncation rule") {
  std::vector<double> equal(10, 2.0);
  CHECK(truncation_count(equal) == 10);
  std::vector<double> tail{1, 1, 1, 1, 50};
  CHECK(truncation_count(tail) == 4);
}

TEST_CASE("sigma estimate on known noise") {
  ImageTensor flat(32, 32, 1, 0.4f);
  CHECK(estimate_sigma2(flat) == 0.0);

  SeededRng rng(5);
  ImageTensor white(256, 256, 1);
  for (auto& v : white.data()) v = static_cast<float>(rng.normal());
  const double e = estimate_sigma2(white, {8, 2});
  CHECK(e > 0.95);
  CHECK(e < 1.05);

  auto texture = synth_clean(rng, 256, 256);
  for (auto& v : texture.data()) v += static_cast<float>(0.1 * rng.normal());
  const double t = estimate_sigma2(texture);
  CHECK(t > 0.008);
  CHECK(t < 0.012);
}

TEST_CASE("sigma estimate gradient") {
  SeededRng rng(6);
  auto img = test::random_image(rng, 12, 12);
  auto plane = to_plane(img);
  const PatchConfig cfg{4, 2};
  auto base = estimate_sigma2(PlaneView{plane, 12, 12}, cfg, {std::nullopt, true});
  REQUIRE(base.grad.size() == plane.size());
  for (std::size_t i : {0u, 17u, 70u, 143u}) {
    const double h = 1e-6;
    auto up = plane, dn = plane;
    up[i] += h;
    dn[i] -= h;
    const EstimateOptions fixed{base.kept, false};
    const double fd = (estimate_sigma2(PlaneView{up, 12, 12}, cfg, fixed).value -
                       estimate_sigma2(PlaneView{dn, 12, 12}, cfg, fixed).value) / (2 * h);
    CHECK(std::abs(fd - base.grad[i]) < 1e-6 + 1e-4 * std::abs(fd));
  }
}
