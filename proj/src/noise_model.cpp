#include "pgs/noise_model.hpp"

#include <cmath>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs {

namespace {
// Keeps derivatives finite where the root argument touches zero.
constexpr double kRootFloor = 1e-12;
}  // namespace

void NoiseParams::validate() const {
  require(alpha >= 0.0 && sigma1 >= 0.0 && sigma2 >= 0.0, ErrorKind::InvalidArgument,
          "noise parameters must be nonnegative");
  require(std::isfinite(alpha) && std::isfinite(sigma1) && std::isfinite(sigma2),
          ErrorKind::InvalidArgument, "noise parameters must be finite");
}

NoiseParams pg_level(int index) {
  switch (index) {
    case 1: return NoiseParams::single(0.1, 0.02);
    case 2: return NoiseParams::single(0.1, 0.0002);
    case 3: return NoiseParams::single(0.05, 0.02);
    case 4: return NoiseParams::single(0.05, 0.0002);
    case 5: return NoiseParams::single(0.01, 0.02);
    default: fail(ErrorKind::InvalidArgument, "noise level index must be 1..5");
  }
}

ImageTensor corrupt_exact(const ImageTensor& x, const NoiseParams& p, SeededRng& rng) {
  p.validate();
  require(p.alpha > 0.0, ErrorKind::InvalidArgument,
          "corrupt_exact needs alpha > 0; use corrupt_gaussian_approx for alpha = 0");
  ImageTensor y(x.height(), x.width(), x.channels());
  auto src = x.data();
  auto dst = y.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double rate = std::max(0.0, double(src[i])) / p.alpha;
    double v = p.alpha * static_cast<double>(sample_poisson(rng, rate));
    if (p.sigma1 > 0.0) v += p.sigma1 * rng.normal();
    dst[i] = static_cast<float>(v);
  }
  return y;
}

ImageTensor corrupt_gaussian_approx(const ImageTensor& x, const NoiseParams& p, SeededRng& rng) {
  p.validate();
  ImageTensor y(x.height(), x.width(), x.channels());
  auto src = x.data();
  auto dst = y.data();
  const double s2 = p.sigma1 * p.sigma1;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double var = p.alpha * double(src[i]) + s2;
    require(var >= 0.0, ErrorKind::InvalidArgument, "negative per-pixel variance");
    dst[i] = static_cast<float>(double(src[i]) + (var > 0.0 ? std::sqrt(var) * rng.normal() : 0.0));
  }
  return y;
}

double gat_value(double y, double alpha, double sigma) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "gat needs alpha > 0");
  const double arg = alpha * y + 0.375 * alpha * alpha + sigma * sigma;
  return 2.0 / alpha * std::sqrt(std::max(arg, 0.0));
}

double gat_inverse_value(double g, double alpha, double sigma) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "gat inverse needs alpha > 0");
  return alpha / 4.0 * g * g - 0.375 * alpha - sigma * sigma / alpha;
}

GatPartials gat_partials(double y, double alpha, double sigma) {
  const double arg = alpha * y + 0.375 * alpha * alpha + sigma * sigma;
  if (arg <= 0.0) return {0.0, 0.0, 0.0};
  const double root = std::sqrt(std::max(arg, kRootFloor));
  const double g = 2.0 / alpha * root;
  // d/dalpha: -g/alpha + (2/alpha) * (y + 3/4 alpha) / (2 root)
  const double d_alpha = -g / alpha + (y + 0.75 * alpha) / (alpha * root);
  const double d_sigma = 2.0 * sigma / (alpha * root);
  return {g, d_alpha, d_sigma};
}

ImageTensor gat(const ImageTensor& y, const NoiseParams& p) {
  p.validate();
  require(p.alpha > 0.0, ErrorKind::InvalidArgument, "gat needs alpha > 0");
  ImageTensor out(y.height(), y.width(), y.channels());
  const auto offset = static_cast<float>(0.375 * p.alpha * p.alpha + p.sigma1 * p.sigma1);
  simd::active().sqrt_affine_f32(y.size(), y.data().data(), static_cast<float>(p.alpha), offset,
                                 static_cast<float>(2.0 / p.alpha), out.data().data());
  return out;
}

ImageTensor gat_inverse_algebraic(const ImageTensor& g, const NoiseParams& p) {
  p.validate();
  require(p.alpha > 0.0, ErrorKind::InvalidArgument, "gat inverse needs alpha > 0");
  ImageTensor out(g.height(), g.width(), g.channels());
  auto src = g.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(gat_inverse_value(src[i], p.alpha, p.sigma1));
  }
  return out;
}

}  // namespace pgs
