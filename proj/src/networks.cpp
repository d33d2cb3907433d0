#include "pgs/networks.hpp"

#include <algorithm>
#include <cmath>

#include "pgs/error.hpp"
#include "pgs/instrument.hpp"
#include "pgs/revisible.hpp"

namespace pgs {

using nn::Tensor;

namespace {

constexpr std::size_t kF1 = 16;
constexpr std::size_t kF2 = 32;
constexpr std::size_t kF3 = 64;
constexpr std::size_t kEstFeatures = 32;
// Initial head outputs: log-variance ~ log(1e-2); estimator ~ 0.02 per parameter.
constexpr float kLogVarInit = -4.6f;
constexpr double kEstimatorInit = 0.02;
constexpr double kParamFloor = 1e-6;

Tensor conv_act(const nn::Conv2d& conv, const Tensor& in) {
  auto out = conv.forward(in);
  nn::leaky_relu_inplace(out);
  return out;
}

Tensor act_back(const Tensor& out, Tensor grad) {
  nn::leaky_relu_backward_inplace(out, grad);
  return grad;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

double softplus(double z) { return z > 20.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

DenoiserNet::DenoiserNet(std::size_t channels)
    : channels_(channels),
      e1a_("enc1a", channels, kF1, 3),
      e1b_("enc1b", kF1, kF1, 3),
      e2_("enc2", kF1, kF2, 3),
      mid_("mid", kF2, kF3, 3),
      d2_("dec2", kF3 + kF2, kF2, 3),
      d1_("dec1", kF2 + kF1, kF1, 3),
      head_mean_("head_mean", kF1, channels, 1),
      head_logvar_("head_logvar", kF1, channels, 1) {
  require(channels >= 1, ErrorKind::InvalidArgument, "denoiser needs at least one channel");
}

void DenoiserNet::init(SeededRng& rng) {
  for (auto* c : {&e1a_, &e1b_, &e2_, &mid_, &d2_, &d1_}) c->init(rng);
  head_mean_.init(rng);
  head_logvar_.init(rng);
  for (auto& w : head_logvar_.weight().value) w *= 0.1f;
  std::fill(head_logvar_.bias().value.begin(), head_logvar_.bias().value.end(), kLogVarInit);
}

DenoiserNet::Heads DenoiserNet::forward(const Tensor& x, Cache* cache) const {
  require(x.c == channels_, ErrorKind::ShapeMismatch, "denoiser input channel mismatch");
  require(x.h % kDownFactor == 0 && x.w % kDownFactor == 0, ErrorKind::ShapeMismatch,
          "denoiser input must be divisible by 4");
  Cache local;
  Cache& k = cache ? *cache : local;
  k.x = x;
  k.a1 = conv_act(e1a_, x);
  k.a2 = conv_act(e1b_, k.a1);
  k.a3 = conv_act(e2_, nn::avg_pool2(k.a2));
  k.a4 = conv_act(mid_, nn::avg_pool2(k.a3));
  k.c2 = nn::concat(nn::upsample2(k.a4), k.a3);
  k.a5 = conv_act(d2_, k.c2);
  k.c1 = nn::concat(nn::upsample2(k.a5), k.a2);
  k.a6 = conv_act(d1_, k.c1);

  Heads heads;
  heads.mean = head_mean_.forward(k.a6);
  k.logvar_raw = head_logvar_.forward(k.a6);
  heads.logvar = k.logvar_raw;
  for (auto& v : heads.logvar.v) {
    v = std::clamp(v, static_cast<float>(kLogVarMin), static_cast<float>(kLogVarMax));
  }
  return heads;
}

void DenoiserNet::backward(const Cache& k, const Tensor& dmean, const Tensor& dlogvar) {
  Tensor dlv = dlogvar;
  for (std::size_t i = 0; i < dlv.v.size(); ++i) {
    const float raw = k.logvar_raw.v[i];
    if (raw < kLogVarMin || raw > kLogVarMax) dlv.v[i] = 0.0f;
  }
  Tensor da6 = head_mean_.backward(k.a6, dmean, true);
  add_into(da6, head_logvar_.backward(k.a6, dlv, true));

  Tensor dc1 = d1_.backward(k.c1, act_back(k.a6, std::move(da6)), true);
  Tensor du1, da2;
  nn::split(dc1, kF2, du1, da2);
  Tensor da5 = nn::upsample2_backward(du1);

  Tensor dc2 = d2_.backward(k.c2, act_back(k.a5, std::move(da5)), true);
  Tensor du2, da3;
  nn::split(dc2, kF3, du2, da3);
  Tensor da4 = nn::upsample2_backward(du2);

  const Tensor p2 = nn::avg_pool2(k.a3);
  Tensor dp2 = mid_.backward(p2, act_back(k.a4, std::move(da4)), true);
  add_into(da3, nn::avg_pool2_backward(dp2, k.a3.h, k.a3.w));

  const Tensor p1 = nn::avg_pool2(k.a2);
  Tensor dp1 = e2_.backward(p1, act_back(k.a3, std::move(da3)), true);
  add_into(da2, nn::avg_pool2_backward(dp1, k.a2.h, k.a2.w));

  Tensor da1 = e1b_.backward(k.a1, act_back(k.a2, std::move(da2)), true);
  e1a_.backward(k.x, act_back(k.a1, std::move(da1)), false);
}

std::vector<nn::Param*> DenoiserNet::params() {
  std::vector<nn::Param*> out;
  for (auto* c : {&e1a_, &e1b_, &e2_, &mid_, &d2_, &d1_, &head_mean_, &head_logvar_}) {
    out.push_back(&c->weight());
    out.push_back(&c->bias());
  }
  return out;
}

std::size_t DenoiserNet::parameter_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->size();
  return n;
}

EstimatorNet::EstimatorNet(std::size_t channels)
    : channels_(channels),
      c1_("est1", channels, kEstFeatures, 3, 1),
      c2_("est2", kEstFeatures, kEstFeatures, 3, 2),
      c3_("est3", kEstFeatures, kEstFeatures, 3, 2),
      c4_("est4", kEstFeatures, kEstFeatures, 3, 2),
      fc_w_("est_fc.weight", {3, kEstFeatures}),
      fc_b_("est_fc.bias", {3}) {}

void EstimatorNet::init(SeededRng& rng) {
  for (auto* c : {&c1_, &c2_, &c3_, &c4_}) c->init(rng);
  for (auto& w : fc_w_.value) w = static_cast<float>((2.0 * rng.uniform() - 1.0) * 0.01);
  const auto b = static_cast<float>(softplus_inverse(kEstimatorInit));
  std::fill(fc_b_.value.begin(), fc_b_.value.end(), b);
}

NoiseParams EstimatorNet::forward(const Tensor& x, Cache* cache) const {
  require(x.c == channels_, ErrorKind::ShapeMismatch, "estimator input channel mismatch");
  instrument::counters().estimator_forwards.fetch_add(1, std::memory_order_relaxed);
  Cache local;
  Cache& k = cache ? *cache : local;
  k.x = x;
  k.a1 = conv_act(c1_, x);
  k.a2 = conv_act(c2_, k.a1);
  k.a3 = conv_act(c3_, k.a2);
  k.a4 = conv_act(c4_, k.a3);
  const double inv = 1.0 / static_cast<double>(k.a4.plane());
  for (std::size_t f = 0; f < kEstFeatures; ++f) {
    double s = 0.0;
    const float* src = k.a4.channel(f);
    for (std::size_t i = 0; i < k.a4.plane(); ++i) s += src[i];
    k.pooled[f] = s * inv;
  }
  std::array<double, 3> out{};
  for (std::size_t o = 0; o < 3; ++o) {
    double z = fc_b_.value[o];
    for (std::size_t f = 0; f < kEstFeatures; ++f) z += double(fc_w_.value[o * kEstFeatures + f]) * k.pooled[f];
    k.z[o] = z;
    out[o] = softplus(z) + kParamFloor;
  }
  return {out[0], out[1], out[2]};
}

void EstimatorNet::backward(const Cache& k, const std::array<double, 3>& d_out) {
  std::array<double, kEstFeatures> d_pooled{};
  for (std::size_t o = 0; o < 3; ++o) {
    const double dz = d_out[o] * sigmoid(k.z[o]);
    fc_b_.grad[o] += static_cast<float>(dz);
    for (std::size_t f = 0; f < kEstFeatures; ++f) {
      fc_w_.grad[o * kEstFeatures + f] += static_cast<float>(dz * k.pooled[f]);
      d_pooled[f] += dz * fc_w_.value[o * kEstFeatures + f];
    }
  }
  Tensor da4(k.a4.c, k.a4.h, k.a4.w);
  const double inv = 1.0 / static_cast<double>(k.a4.plane());
  for (std::size_t f = 0; f < kEstFeatures; ++f) {
    std::fill_n(da4.channel(f), da4.plane(), static_cast<float>(d_pooled[f] * inv));
  }
  Tensor da3 = c4_.backward(k.a3, act_back(k.a4, std::move(da4)), true);
  Tensor da2 = c3_.backward(k.a2, act_back(k.a3, std::move(da3)), true);
  Tensor da1 = c2_.backward(k.a1, act_back(k.a2, std::move(da2)), true);
  c1_.backward(k.x, act_back(k.a1, std::move(da1)), false);
}

std::vector<nn::Param*> EstimatorNet::params() {
  std::vector<nn::Param*> out;
  for (auto* c : {&c1_, &c2_, &c3_, &c4_}) {
    out.push_back(&c->weight());
    out.push_back(&c->bias());
  }
  out.push_back(&fc_w_);
  out.push_back(&fc_b_);
  return out;
}

ImageTensor infer(const DenoiserNet& net, const ImageTensor& y) {
  const auto x = nn::from_image(y);
  const auto padded = nn::reflect_pad_to(x, DenoiserNet::kDownFactor);
  const auto heads = net.forward(padded, nullptr);
  return nn::to_image(nn::crop(heads.mean, y.height(), y.width()));
}

}  // namespace pgs
