#pragma once

#include "pgs/image.hpp"
#include "pgs/rng.hpp"

namespace pgs {

/// Poisson scale and per-branch Gaussian standard deviations.
/// Synthesis and the variance-stabilizing transform use `sigma1` only and
/// expect sigma1 == sigma2.
struct NoiseParams {
  double alpha = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;

  static NoiseParams single(double alpha, double sigma) { return {alpha, sigma, sigma}; }
  double sigma() const noexcept { return sigma1; }
  void validate() const;
};

/// Named synthetic levels PG1..PG5.
NoiseParams pg_level(int index);

/// y = alpha * Poisson(x / alpha) + N(0, sigma^2); never clipped.
ImageTensor corrupt_exact(const ImageTensor& x, const NoiseParams& p, SeededRng& rng);

/// y = x + N(0, alpha * x + sigma^2).
ImageTensor corrupt_gaussian_approx(const ImageTensor& x, const NoiseParams& p, SeededRng& rng);

/// Generalized Anscombe transform (2/alpha) sqrt(alpha*y + 3/8 alpha^2 + sigma^2).
/// Negative root arguments are clipped to zero.
ImageTensor gat(const ImageTensor& y, const NoiseParams& p);

/// Algebraic inverse (alpha/4) g^2 - 3/8 alpha - sigma^2/alpha.
ImageTensor gat_inverse_algebraic(const ImageTensor& g, const NoiseParams& p);

double gat_value(double y, double alpha, double sigma);
double gat_inverse_value(double g, double alpha, double sigma);

/// Partial derivatives of the transform at one sample.
struct GatPartials {
  double value;
  double d_alpha;
  double d_sigma;
};
GatPartials gat_partials(double y, double alpha, double sigma);

}  // namespace pgs
