#include "pgs/revisible.hpp"

#include <algorithm>
#include <cmath>

#include "pgs/error.hpp"

namespace pgs {

namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }
double step(double x) { return x > 0.0 ? 1.0 : 0.0; }

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, what);
}

// Mixture variance and its partials for one sample.
struct VarianceParts {
  double var = 0.0;
  double d_var_m = 0.0;
  double d_var_v = 0.0;
  double d_alpha = 0.0;
  double d_sigma1 = 0.0;
  double d_sigma2 = 0.0;
  // Partials through the alpha * mean term; callers drop them under stop-grad.
  double d_mu_m = 0.0;
  double d_mu_v = 0.0;
};

VarianceParts mixture_variance(const SampleInputs& in, double lambda, NoiseModelVariant variant,
                               const NoiseParams& p) {
  const double pi1 = blind_factor(lambda);
  const double pi2 = visible_factor(lambda);
  const double w = 1.0 / ((1.0 + lambda) * (1.0 + lambda));
  const double mu_y = pi1 * in.mu_m + pi2 * in.mu_v;
  const double s1 = p.sigma1;
  const double s2 = p.sigma2;
  VarianceParts v;
  switch (variant) {
    case NoiseModelVariant::Original: {
      const double m1 = in.var_m + p.alpha * relu(in.mu_m) + s1 * s1;
      const double m2 = in.var_v + p.alpha * relu(in.mu_v) + s2 * s2;
      v.var = w * (m1 + lambda * lambda * m2);
      v.d_var_m = w;
      v.d_var_v = w * lambda * lambda;
      v.d_alpha = w * (relu(in.mu_m) + lambda * lambda * relu(in.mu_v));
      v.d_sigma1 = w * 2.0 * s1;
      v.d_sigma2 = w * lambda * lambda * 2.0 * s2;
      v.d_mu_m = w * p.alpha * step(in.mu_m);
      v.d_mu_v = w * lambda * lambda * p.alpha * step(in.mu_v);
      break;
    }
    case NoiseModelVariant::Enhanced: {
      v.var = w * (in.var_m + lambda * lambda * in.var_v) + p.alpha * relu(mu_y) + pi1 * pi1 * s1 * s1 +
              pi2 * pi2 * s2 * s2;
      v.d_var_m = w;
      v.d_var_v = w * lambda * lambda;
      v.d_alpha = relu(mu_y);
      v.d_sigma1 = 2.0 * pi1 * pi1 * s1;
      v.d_sigma2 = 2.0 * pi2 * pi2 * s2;
      v.d_mu_m = p.alpha * step(mu_y) * pi1;
      v.d_mu_v = p.alpha * step(mu_y) * pi2;
      break;
    }
    case NoiseModelVariant::Simplified: {
      v.var = w * (in.var_m + lambda * lambda * in.var_v) + p.alpha * relu(mu_y) + 0.5 * (s1 * s1 + s2 * s2);
      v.d_var_m = w;
      v.d_var_v = w * lambda * lambda;
      v.d_alpha = relu(mu_y);
      v.d_sigma1 = s1;
      v.d_sigma2 = s2;
      v.d_mu_m = p.alpha * step(mu_y) * pi1;
      v.d_mu_v = p.alpha * step(mu_y) * pi2;
      break;
    }
  }
  return v;
}

}  // namespace

NoiseModelVariant parse_variant(const std::string& name) {
  if (name == "M_O") return NoiseModelVariant::Original;
  if (name == "M_E") return NoiseModelVariant::Enhanced;
  if (name == "M_S") return NoiseModelVariant::Simplified;
  fail(ErrorKind::InvalidArgument, "unknown noise model variant '" + name + "' (M_O|M_E|M_S)");
}

std::string to_string(NoiseModelVariant v) {
  switch (v) {
    case NoiseModelVariant::Original: return "M_O";
    case NoiseModelVariant::Enhanced: return "M_E";
    case NoiseModelVariant::Simplified: return "M_S";
  }
  return "M_E";
}

BranchBelief BranchBelief::make(ImageTensor mean, ImageTensor var) {
  require_same(mean, var, "belief mean and variance shapes differ");
  for (auto& v : var.data()) v = std::max(v, static_cast<float>(kVarFloor));
  return {std::move(mean), std::move(var)};
}

void ReVisibleConfig::validate() const {
  require(lambda_start > 0.0 && lambda_start <= lambda_final, ErrorKind::InvalidArgument,
          "need 0 < lambda_start <= lambda_final");
  require(estimator_loss_weight >= 0.0, ErrorKind::InvalidArgument, "estimator loss weight must be >= 0");
}

double ReVisibleConfig::lambda_at(std::size_t epoch, std::size_t epochs) const {
  if (epochs <= 1) return lambda_final;
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(epochs - 1));
  return lambda_start + t * (lambda_final - lambda_start);
}

BranchBelief branch_marginal(const BranchBelief& belief, double alpha, double sigma) {
  require(alpha >= 0.0 && sigma >= 0.0, ErrorKind::InvalidArgument, "alpha and sigma must be >= 0");
  BranchBelief out = belief;
  auto mean = belief.mean.data();
  auto var = out.var.data();
  for (std::size_t i = 0; i < var.size(); ++i) {
    var[i] = static_cast<float>(double(var[i]) + alpha * relu(mean[i]) + sigma * sigma);
  }
  return out;
}

SampleGrad sample_nll(const SampleInputs& in, double lambda, NoiseModelVariant variant, const NoiseParams& p,
                      const GradPolicy& policy) {
  const double pi1 = blind_factor(lambda);
  const double pi2 = visible_factor(lambda);
  const auto parts = mixture_variance(in, lambda, variant, p);
  SampleGrad g;
  g.mu_y = pi1 * in.mu_m + pi2 * in.mu_v;
  g.var_y = std::max(parts.var, kVarFloor);
  const double n = in.y - g.mu_y;
  const double inv = 1.0 / g.var_y;
  g.loss = 0.5 * (n * n * inv + std::log(g.var_y));

  const double d_var = parts.var > kVarFloor ? 0.5 * (inv - n * n * inv * inv) : 0.0;
  g.d_mu_m = -pi1 * n * inv;
  g.d_var_m = d_var * parts.d_var_m;
  g.d_alpha = d_var * parts.d_alpha;
  g.d_sigma1 = d_var * parts.d_sigma1;
  g.d_sigma2 = d_var * parts.d_sigma2;
  if (!policy.stop_grad_noise_term) g.d_mu_m += d_var * parts.d_mu_m;
  if (policy.visible_grad) {
    g.d_mu_v = -pi2 * n * inv;
    if (!policy.stop_grad_noise_term) g.d_mu_v += d_var * parts.d_mu_v;
    g.d_var_v = d_var * parts.d_var_v;
  }
  return g;
}

MixtureBelief combine_mixture(const BranchBelief& masked, const BranchBelief& visible, double lambda,
                              NoiseModelVariant variant, const NoiseParams& p) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be > 0");
  p.validate();
  require_same(masked.mean, visible.mean, "branch shapes differ");
  require_same(masked.mean, masked.var, "masked mean/var shapes differ");
  require_same(visible.mean, visible.var, "visible mean/var shapes differ");
  const auto& ref = masked.mean;
  MixtureBelief mix{ImageTensor(ref.height(), ref.width(), ref.channels()),
                    ImageTensor(ref.height(), ref.width(), ref.channels()), {}};
  auto mm = masked.mean.data();
  auto vm = masked.var.data();
  auto mv = visible.mean.data();
  auto vv = visible.var.data();
  auto mu = mix.mu_y.data();
  auto var = mix.var_y.data();
  const double pi1 = blind_factor(lambda);
  const double pi2 = visible_factor(lambda);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const SampleInputs in{0.0, mm[i], vm[i], mv[i], vv[i]};
    mu[i] = static_cast<float>(pi1 * in.mu_m + pi2 * in.mu_v);
    var[i] = static_cast<float>(std::max(mixture_variance(in, lambda, variant, p).var, kVarFloor));
  }
  return mix;
}

MixtureBelief combine_mixture(const ImageTensor& y, const BranchBelief& masked, const BranchBelief& visible,
                              double lambda, NoiseModelVariant variant, const NoiseParams& p) {
  auto mix = combine_mixture(masked, visible, lambda, variant, p);
  require_same(y, mix.mu_y, "observation shape differs from beliefs");
  mix.residual = ImageTensor(y.height(), y.width(), y.channels());
  auto r = mix.residual.data();
  auto ys = y.data();
  auto mu = mix.mu_y.data();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = ys[i] - mu[i];
  return mix;
}

double nll(const ImageTensor& y, const MixtureBelief& mix) {
  require_same(y, mix.mu_y, "observation shape differs from mixture");
  require_same(y, mix.var_y, "observation shape differs from mixture variance");
  auto ys = y.data();
  auto mu = mix.mu_y.data();
  auto var = mix.var_y.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double v = std::max(double(var[i]), kVarFloor);
    const double n = double(ys[i]) - double(mu[i]);
    sum += 0.5 * (n * n / v + std::log(v));
  }
  return sum / static_cast<double>(ys.size());
}

ImageTensor nll_grad_mu_m(const ImageTensor& y, const BranchBelief& masked, const BranchBelief& visible,
                          double lambda, NoiseModelVariant variant, const NoiseParams& p,
                          bool stop_grad_noise_term) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be > 0");
  require_same(y, masked.mean, "observation shape differs from beliefs");
  require_same(masked.mean, visible.mean, "branch shapes differ");
  ImageTensor grad(y.height(), y.width(), y.channels());
  auto out = grad.data();
  const double scale = 1.0 / static_cast<double>(out.size());
  const GradPolicy policy{stop_grad_noise_term, false};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const SampleInputs in{y.data()[i], masked.mean.data()[i], masked.var.data()[i], visible.mean.data()[i],
                          visible.var.data()[i]};
    out[i] = static_cast<float>(scale * sample_nll(in, lambda, variant, p, policy).d_mu_m);
  }
  return grad;
}

ImageTensor optimal_clean(const ImageTensor& masked_mean, const ImageTensor& visible_mean, double lambda) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be > 0");
  require_same(masked_mean, visible_mean, "branch shapes differ");
  ImageTensor out(masked_mean.height(), masked_mean.width(), masked_mean.channels());
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<float>((double(masked_mean.data()[i]) + lambda * double(visible_mean.data()[i])) /
                                (1.0 + lambda));
  }
  return out;
}

double b2u_loss(const ImageTensor& y, const ImageTensor& mapped_masked_mean,
                const ImageTensor& visible_mean_detached, double lambda) {
  require_same(y, mapped_masked_mean, "masked output shape differs from observation");
  require_same(y, visible_mean_detached, "visible output shape differs from observation");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = double(mapped_masked_mean.data()[i]) + lambda * double(visible_mean_detached.data()[i]) -
                     (1.0 + lambda) * double(y.data()[i]);
    sum += r * r;
  }
  return sum / static_cast<double>(y.size());
}

ImageTensor b2u_grad(const ImageTensor& y, const ImageTensor& mapped_masked_mean,
                     const ImageTensor& visible_mean_detached, double lambda) {
  require_same(y, mapped_masked_mean, "masked output shape differs from observation");
  require_same(y, visible_mean_detached, "visible output shape differs from observation");
  ImageTensor grad(y.height(), y.width(), y.channels());
  const double scale = 2.0 / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = double(mapped_masked_mean.data()[i]) + lambda * double(visible_mean_detached.data()[i]) -
                     (1.0 + lambda) * double(y.data()[i]);
    grad.data()[i] = static_cast<float>(scale * r);
  }
  return grad;
}

}  // namespace pgs
