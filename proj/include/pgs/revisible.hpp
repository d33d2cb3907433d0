#pragma once

#include <cstddef>
#include <string>

#include "pgs/image.hpp"
#include "pgs/noise_model.hpp"

namespace pgs {

inline constexpr double kVarFloor = 1e-6;
inline constexpr double kLogVarMin = -14.0;
inline constexpr double kLogVarMax = 6.0;

/// Mixture noise models compared in the noise-model ablation.
enum class NoiseModelVariant {
  Original,    // M_O: branch marginals combined
  Enhanced,    // M_E: one Poisson term on the mixture mean, weighted Gaussian terms
  Simplified,  // M_S: one Poisson term, averaged Gaussian variance
};

NoiseModelVariant parse_variant(const std::string& name);
std::string to_string(NoiseModelVariant v);

/// Per-pixel Gaussian belief (mean, diagonal variance) from one branch.
struct BranchBelief {
  ImageTensor mean;
  ImageTensor var;

  /// Enforces matching shapes and var >= kVarFloor.
  static BranchBelief make(ImageTensor mean, ImageTensor var);
};

struct ReVisibleConfig {
  double lambda_start = 3.0;
  double lambda_final = 11.0;
  NoiseModelVariant variant = NoiseModelVariant::Enhanced;
  bool iid = true;
  bool stop_grad_noise_term = true;
  double estimator_loss_weight = 0.01;

  void validate() const;
  /// Linear in epoch index; epoch 0 -> lambda_start, last epoch -> lambda_final.
  double lambda_at(std::size_t epoch, std::size_t epochs) const;
};

inline double blind_factor(double lambda) { return 1.0 / (1.0 + lambda); }
inline double visible_factor(double lambda) { return lambda / (1.0 + lambda); }

struct MixtureBelief {
  ImageTensor mu_y;
  ImageTensor var_y;
  ImageTensor residual;  // y - mu_y; empty when built without an observation
};

/// var' = var + alpha * max(mean, 0) + sigma^2
BranchBelief branch_marginal(const BranchBelief& belief, double alpha, double sigma);

MixtureBelief combine_mixture(const BranchBelief& masked, const BranchBelief& visible, double lambda,
                              NoiseModelVariant variant, const NoiseParams& p);
MixtureBelief combine_mixture(const ImageTensor& y, const BranchBelief& masked, const BranchBelief& visible,
                              double lambda, NoiseModelVariant variant, const NoiseParams& p);

/// Mean over samples of 0.5 * [(y - mu)^2 / var + ln var].
double nll(const ImageTensor& y, const MixtureBelief& mix);

/// d nll / d mu_m. With `stop_grad_noise_term` the alpha * mu_y variance term
/// is treated as a constant; otherwise the full derivative is returned.
ImageTensor nll_grad_mu_m(const ImageTensor& y, const BranchBelief& masked, const BranchBelief& visible,
                          double lambda, NoiseModelVariant variant, const NoiseParams& p,
                          bool stop_grad_noise_term);

/// (mu_m + lambda * mu_v) / (1 + lambda)
ImageTensor optimal_clean(const ImageTensor& masked_mean, const ImageTensor& visible_mean, double lambda);

/// Re-visible squared loss, mean over samples. The visible term is a constant.
double b2u_loss(const ImageTensor& y, const ImageTensor& mapped_masked_mean,
                const ImageTensor& visible_mean_detached, double lambda);
ImageTensor b2u_grad(const ImageTensor& y, const ImageTensor& mapped_masked_mean,
                     const ImageTensor& visible_mean_detached, double lambda);

// Per-sample form used by the trainer and by the image-level functions.

struct GradPolicy {
  bool stop_grad_noise_term = true;
  /// Non-IID: the visible branch receives gradient from the mixture.
  bool visible_grad = false;
};

struct SampleInputs {
  double y;
  double mu_m;
  double var_m;
  double mu_v;
  double var_v;
};

struct SampleGrad {
  double loss = 0.0;
  double mu_y = 0.0;
  double var_y = 0.0;
  double d_mu_m = 0.0;
  double d_var_m = 0.0;
  double d_mu_v = 0.0;
  double d_var_v = 0.0;
  double d_alpha = 0.0;
  double d_sigma1 = 0.0;
  double d_sigma2 = 0.0;
};

/// Loss 0.5 * [(y - mu_y)^2 / var_y + ln var_y] for one sample with its
/// gradients under `policy`.
SampleGrad sample_nll(const SampleInputs& in, double lambda, NoiseModelVariant variant, const NoiseParams& p,
                      const GradPolicy& policy);

}  // namespace pgs
