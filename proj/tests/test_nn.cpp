#include <cmath>

#include "doctest.h"
#include "pgs/instrument.hpp"
#include "pgs/networks.hpp"
#include "pgs/nn.hpp"
#include "pgs/simd.hpp"
#include "test_util.hpp"

using namespace pgs;
using nn::Tensor;

namespace {

Tensor random_tensor(SeededRng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Tensor t(c, h, w);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform() - 0.5);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += double(a.v[i]) * b.v[i];
  return s;
}

// Loss = <forward(x), r>; compares analytic and central-difference gradients.
void check_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride) {
  SeededRng rng(61 + k * 10 + stride);
  nn::Conv2d conv("c", cin, cout, k, stride);
  conv.init(rng);
  for (auto& b : conv.bias().value) b = static_cast<float>(rng.uniform() - 0.5);
  auto x = random_tensor(rng, cin, 9, 10);
  auto y = conv.forward(x);
  CHECK(y.h == conv.out_size(9));
  CHECK(y.w == conv.out_size(10));
  auto r = random_tensor(rng, y.c, y.h, y.w);
  conv.weight().zero_grad();
  conv.bias().zero_grad();
  auto dx = conv.backward(x, r, true);

  const float h = 1e-2f;
  auto loss = [&] { return dot(conv.forward(x), r); };
  for (std::size_t i = 0; i < x.v.size(); i += 7) {
    const float keep = x.v[i];
    x.v[i] = keep + h;
    const double up = loss();
    x.v[i] = keep - h;
    const double dn = loss();
    x.v[i] = keep;
    CHECK(std::abs((up - dn) / (2 * h) - dx.v[i]) < 1e-3);
  }
  for (nn::Param* p : {&conv.weight(), &conv.bias()}) {
    for (std::size_t i = 0; i < p->size(); i += 5) {
      const float keep = p->value[i];
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double dn = loss();
      p->value[i] = keep;
      CHECK(std::abs((up - dn) / (2 * h) - p->grad[i]) < 1e-3 * (1.0 + std::abs(p->grad[i])));
    }
  }
}

}  // namespace

TEST_CASE("conv gradients under every kernel table") {
  const auto before = simd::active_isa();
  for (auto isa : {simd::Isa::Scalar, simd::Isa::Avx2}) {
    if (!simd::supported(isa)) continue;
    CAPTURE(simd::to_string(isa));
    simd::set_active(isa);
    check_conv(3, 5, 3, 1);
    check_conv(4, 3, 3, 2);
    check_conv(6, 2, 1, 1);
    check_conv(2, 3, 5, 1);
  }
  simd::set_active(before);
}

TEST_CASE("kernel tables give the same network output") {
  if (!simd::supported(simd::Isa::Avx2)) return;
  SeededRng rng(62);
  DenoiserNet net(1);
  net.init(rng);
  auto x = random_tensor(rng, 1, 32, 36);
  const auto before = simd::active_isa();
  simd::set_active(simd::Isa::Scalar);
  auto a = net.forward(x, nullptr);
  simd::set_active(simd::Isa::Avx2);
  auto b = net.forward(x, nullptr);
  simd::set_active(before);
  for (std::size_t i = 0; i < a.mean.v.size(); ++i) {
    CHECK(std::abs(a.mean.v[i] - b.mean.v[i]) < 1e-4);
    CHECK(std::abs(a.logvar.v[i] - b.logvar.v[i]) < 1e-4);
  }
}

TEST_CASE("layer adjoints") {
  SeededRng rng(63);
  auto x = random_tensor(rng, 3, 8, 6);
  auto p = nn::avg_pool2(x);
  auto dp = random_tensor(rng, p.c, p.h, p.w);
  CHECK(std::abs(dot(p, dp) - dot(x, nn::avg_pool2_backward(dp, 8, 6))) < 1e-5);
  auto u = nn::upsample2(x);
  auto du = random_tensor(rng, u.c, u.h, u.w);
  CHECK(std::abs(dot(u, du) - dot(x, nn::upsample2_backward(du))) < 1e-5);

  auto y = random_tensor(rng, 2, 8, 6);
  auto cat = nn::concat(x, y);
  CHECK(cat.c == 5);
  Tensor dx, dy;
  nn::split(cat, 3, dx, dy);
  CHECK(dx.v == x.v);
  CHECK(dy.v == y.v);

  auto a = x;
  nn::leaky_relu_inplace(a);
  for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == (x.v[i] > 0 ? x.v[i] : x.v[i] * nn::kLeakySlope));
  Tensor g(3, 8, 6, 1.0f);
  nn::leaky_relu_backward_inplace(a, g);
  for (std::size_t i = 0; i < g.v.size(); ++i) CHECK(g.v[i] == (x.v[i] > 0 ? 1.0f : nn::kLeakySlope));

  auto padded = nn::reflect_pad_to(random_tensor(rng, 1, 7, 5), 4);
  CHECK(padded.h == 8);
  CHECK(padded.w == 8);
  CHECK(nn::crop(padded, 7, 5).h == 7);
}

TEST_CASE("image tensor conversion") {
  SeededRng rng(64);
  auto img = test::random_image(rng, 4, 5, 3);
  auto t = nn::from_image(img);
  CHECK(t.c == 3);
  CHECK(t.channel(2)[1 * 5 + 3] == img.at(1, 3, 2));
  CHECK(nn::to_image(t) == img);
}

TEST_CASE("adam minimizes a quadratic") {
  nn::Param p("p", {2});
  p.value = {3.0f, -2.0f};
  nn::Adam opt({&p}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    for (std::size_t j = 0; j < 2; ++j) p.grad[j] = 2.0f * (p.value[j] - 1.0f);
    opt.step();
  }
  CHECK(std::abs(p.value[0] - 1.0f) < 1e-2);
  CHECK(std::abs(p.value[1] - 1.0f) < 1e-2);
  CHECK(opt.steps() == 500);
}

TEST_CASE("denoiser backward matches finite differences") {
  SeededRng rng(65);
  DenoiserNet net(1);
  net.init(rng);
  auto x = random_tensor(rng, 1, 8, 8);
  DenoiserNet::Cache cache;
  auto out = net.forward(x, &cache);
  auto rm = random_tensor(rng, 1, 8, 8);
  auto rv = random_tensor(rng, 1, 8, 8);
  for (auto* p : net.params()) p->zero_grad();
  net.backward(cache, rm, rv);
  auto loss = [&] {
    auto o = net.forward(x, nullptr);
    return dot(o.mean, rm) + dot(o.logvar, rv);
  };
  // Directional derivative along the gradient: d/de loss(theta + e g) = |g|^2.
  double g2 = 0.0;
  std::vector<std::vector<float>> saved;
  for (auto* p : net.params()) {
    saved.push_back(p->value);
    for (float g : p->grad) g2 += double(g) * g;
  }
  REQUIRE(g2 > 0.0);
  const double eps = 1e-3 / std::sqrt(g2);
  auto shifted = [&](double e) {
    auto params = net.params();
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k]->size(); ++i)
        params[k]->value[i] = static_cast<float>(saved[k][i] + e * params[k]->grad[i]);
    return loss();
  };
  const double fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
  CHECK(test::rel_err(fd, g2) < 1e-2);

}

TEST_CASE("estimator output and gradient") {
  SeededRng rng(66);
  EstimatorNet est(1);
  est.init(rng);
  auto x = random_tensor(rng, 1, 32, 32);
  EstimatorNet::Cache cache;
  auto p = est.forward(x, &cache);
  CHECK(p.alpha > 0.0);
  CHECK(p.sigma1 > 0.0);
  CHECK(p.sigma2 > 0.0);
  for (auto* q : est.params()) q->zero_grad();
  est.backward(cache, {1.0, 0.5, -0.25});
  auto loss = [&] {
    auto o = est.forward(x, nullptr);
    return o.alpha + 0.5 * o.sigma1 - 0.25 * o.sigma2;
  };
  for (auto* q : est.params()) {
    const std::size_t i = q->size() / 2;
    const float keep = q->value[i];
    const float h = 1e-3f;
    q->value[i] = keep + h;
    const double up = loss();
    q->value[i] = keep - h;
    const double dn = loss();
    q->value[i] = keep;
    CHECK(std::abs((up - dn) / (2 * h) - q->grad[i]) < 1e-4 + 1e-2 * std::abs(q->grad[i]));
  }
}

TEST_CASE("inference contract") {
  SeededRng rng(67);
  DenoiserNet net(1);
  net.init(rng);
  auto y = test::random_image(rng, 97, 63);
  auto& c = instrument::counters();
  const auto masker = c.masker_builds.load();
  const auto mapper = c.mapper_calls.load();
  const auto est = c.estimator_forwards.load();
  auto a = infer(net, y);
  auto b = infer(net, y);
  CHECK(a.same_shape(y));
  CHECK(a == b);
  CHECK(c.masker_builds.load() == masker);
  CHECK(c.mapper_calls.load() == mapper);
  CHECK(c.estimator_forwards.load() == est);

  DenoiserNet rgb(3);
  rgb.init(rng);
  CHECK(infer(rgb, test::random_image(rng, 10, 14, 3)).channels() == 3);
}
