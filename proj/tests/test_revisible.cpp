#include <cmath>

#include "doctest.h"
#include "pgs/error.hpp"
#include "pgs/revisible.hpp"
#include "test_util.hpp"

using namespace pgs;

namespace {

BranchBelief constant_belief(float mean, float var) {
  return BranchBelief::make(ImageTensor(1, 1, 1, mean), ImageTensor(1, 1, 1, var));
}

}  // namespace

TEST_CASE("lambda schedule") {
  ReVisibleConfig cfg;
  CHECK(cfg.lambda_at(0, 30) == 3.0);
  CHECK(cfg.lambda_at(29, 30) == 11.0);
  CHECK(cfg.lambda_at(15, 31) == doctest::Approx(7.0));
  CHECK(blind_factor(3.0) + visible_factor(3.0) == doctest::Approx(1.0));
  ReVisibleConfig bad;
  bad.lambda_start = 12.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  for (const char* n : {"M_O", "M_E", "M_S"}) CHECK(to_string(parse_variant(n)) == n);
}

TEST_CASE("branch marginal") {
  auto b = constant_belief(0.5f, 0.01f);
  CHECK(branch_marginal(b, 0.0, 0.0).var == b.var);
  CHECK(branch_marginal(b, 0.05, 0.02).var.data()[0] == doctest::Approx(0.0354).epsilon(1e-6));
  auto neg = constant_belief(-0.1f, 0.01f);
  CHECK(branch_marginal(neg, 0.05, 0.02).var.data()[0] == doctest::Approx(0.0104).epsilon(1e-6));
  CHECK(constant_belief(0.0f, 0.0f).var.data()[0] == static_cast<float>(kVarFloor));
}

TEST_CASE("mixture combination") {
  auto m = constant_belief(0.2f, 0.04f);
  auto v = constant_belief(0.4f, 0.01f);
  for (auto variant : {NoiseModelVariant::Original, NoiseModelVariant::Enhanced, NoiseModelVariant::Simplified}) {
    auto mix = combine_mixture(m, v, 3.0, variant, {});
    CHECK(mix.mu_y.data()[0] == doctest::Approx(0.35).epsilon(1e-6));
    CHECK(mix.var_y.data()[0] == doctest::Approx(0.008125).epsilon(1e-6));
  }
  auto e = combine_mixture(m, v, 3.0, NoiseModelVariant::Enhanced, NoiseParams::single(0.05, 0.02));
  CHECK(e.var_y.data()[0] == doctest::Approx(0.008125 + 0.01775).epsilon(1e-6));
  auto with_y = combine_mixture(ImageTensor(1, 1, 1, 0.5f), m, v, 3.0, NoiseModelVariant::Enhanced, {});
  CHECK(with_y.residual.data()[0] == doctest::Approx(0.15).epsilon(1e-6));
}

TEST_CASE("nll closed form") {
  MixtureBelief mix{ImageTensor(1, 1, 1, 0.8f), ImageTensor(1, 1, 1, 0.04f), {}};
  CHECK(nll(ImageTensor(1, 1, 1, 1.0f), mix) == doctest::Approx(-1.10944).epsilon(1e-5));
  MixtureBelief unit{ImageTensor(1, 1, 1, 0.3f), ImageTensor(1, 1, 1, 1.0f), {}};
  CHECK(nll(ImageTensor(1, 1, 1, 0.3f), unit) == 0.0);
}

TEST_CASE("nll gradient closed form") {
  // mu_y = 0.8 and var_y = (0.064 + 9 * 0.064) / 16 = 0.04.
  auto m = constant_belief(0.8f, 0.064f);
  auto v = constant_belief(0.8f, 0.064f);
  const ImageTensor y(1, 1, 1, 1.0f);
  auto g = nll_grad_mu_m(y, m, v, 3.0, NoiseModelVariant::Enhanced, {}, true);
  CHECK(g.data()[0] == doctest::Approx(-1.25).epsilon(1e-5));
  auto zero = nll_grad_mu_m(ImageTensor(1, 1, 1, 0.8f), m, v, 3.0, NoiseModelVariant::Enhanced, {}, true);
  CHECK(zero.data()[0] == 0.0f);
}

TEST_CASE("sample gradients match finite differences") {
  SeededRng rng(41);
  for (auto variant : {NoiseModelVariant::Original, NoiseModelVariant::Enhanced, NoiseModelVariant::Simplified}) {
    for (int it = 0; it < 50; ++it) {
      SampleInputs in{rng.uniform(), 0.1 + 0.8 * rng.uniform(), 0.001 + 0.05 * rng.uniform(),
                      0.1 + 0.8 * rng.uniform(), 0.001 + 0.05 * rng.uniform()};
      const NoiseParams p{0.01 + 0.1 * rng.uniform(), 0.005 + 0.05 * rng.uniform(), 0.005 + 0.05 * rng.uniform()};
      const double lambda = 1.0 + 10.0 * rng.uniform();
      const GradPolicy full{false, true};
      auto g = sample_nll(in, lambda, variant, p, full);
      auto loss = [&](SampleInputs s, NoiseParams q) { return sample_nll(s, lambda, variant, q, full).loss; };
      const double h = 1e-6;
      auto fd_in = [&](double SampleInputs::*f) {
        auto a = in, b = in;
        a.*f += h;
        b.*f -= h;
        return (loss(a, p) - loss(b, p)) / (2 * h);
      };
      auto fd_p = [&](double NoiseParams::*f) {
        auto a = p, b = p;
        a.*f += h;
        b.*f -= h;
        return (loss(in, a) - loss(in, b)) / (2 * h);
      };
      CHECK(test::rel_err(g.d_mu_m, fd_in(&SampleInputs::mu_m)) < 1e-4);
      CHECK(test::rel_err(g.d_mu_v, fd_in(&SampleInputs::mu_v)) < 1e-4);
      CHECK(test::rel_err(g.d_var_m, fd_in(&SampleInputs::var_m)) < 1e-4);
      CHECK(test::rel_err(g.d_var_v, fd_in(&SampleInputs::var_v)) < 1e-4);
      CHECK(test::rel_err(g.d_alpha, fd_p(&NoiseParams::alpha)) < 1e-4);
      CHECK(test::rel_err(g.d_sigma1, fd_p(&NoiseParams::sigma1)) < 1e-4);
      CHECK(test::rel_err(g.d_sigma2, fd_p(&NoiseParams::sigma2)) < 1e-4);

      auto iid = sample_nll(in, lambda, variant, p, {true, false});
      CHECK(iid.d_mu_v == 0.0);
      CHECK(iid.d_var_v == 0.0);
    }
  }
}

TEST_CASE("optimal clean and re-visible loss") {
  ImageTensor a(1, 1, 1, 0.3f), b(1, 1, 1, 0.5f);
  CHECK(optimal_clean(a, b, 11.0).data()[0] == doctest::Approx(5.8 / 12.0).epsilon(1e-6));
  CHECK(optimal_clean(b, b, 11.0) == b);
  SeededRng rng(42);
  auto m = test::random_image(rng, 8, 8);
  auto v = test::random_image(rng, 8, 8);
  for (double lambda : {0.5, 3.0, 40.0}) {
    auto x = optimal_clean(m, v, lambda);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x.data()[i] >= std::min(m.data()[i], v.data()[i]) - 1e-6f);
      CHECK(x.data()[i] <= std::max(m.data()[i], v.data()[i]) + 1e-6f);
    }
  }

  const ImageTensor y(1, 1, 1, 0.4f);
  CHECK(b2u_loss(y, y, y, 3.0) == 0.0);
  CHECK(b2u_loss(y, a, b, 3.0) == doctest::Approx(0.04).epsilon(1e-6));
  auto g = b2u_grad(y, a, b, 3.0);
  CHECK(g.data()[0] == doctest::Approx(2.0 * (0.3 + 1.5 - 1.6)).epsilon(1e-5));
}
