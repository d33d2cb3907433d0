#pragma once

#include <array>
#include <vector>

#include "pgs/nn.hpp"
#include "pgs/noise_model.hpp"

namespace pgs {

/// Two-level encoder-decoder (16/32/64 features, skip connections) with a
/// mean head and a clamped log-variance head.
class DenoiserNet {
 public:
  static constexpr std::size_t kDownFactor = 4;

  explicit DenoiserNet(std::size_t channels = 1);

  void init(SeededRng& rng);
  std::size_t channels() const noexcept { return channels_; }

  struct Cache {
    nn::Tensor x, a1, a2, a3, a4, a5, a6, c1, c2, logvar_raw;
  };
  struct Heads {
    nn::Tensor mean;
    nn::Tensor logvar;  // clamped to [kLogVarMin, kLogVarMax]
  };

  /// Spatial size must be divisible by kDownFactor. `cache` may be null
  /// when no backward pass follows.
  Heads forward(const nn::Tensor& x, Cache* cache) const;
  void backward(const Cache& cache, const nn::Tensor& dmean, const nn::Tensor& dlogvar);

  std::vector<nn::Param*> params();
  std::size_t parameter_count();

 private:
  std::size_t channels_;
  nn::Conv2d e1a_, e1b_, e2_, mid_, d2_, d1_, head_mean_, head_logvar_;
};

/// Conv trunk, global average pool and a linear layer through softplus,
/// giving strictly positive (alpha, sigma1, sigma2).
class EstimatorNet {
 public:
  explicit EstimatorNet(std::size_t channels = 1);

  void init(SeededRng& rng);

  struct Cache {
    nn::Tensor x, a1, a2, a3, a4;
    std::array<double, 32> pooled{};
    std::array<double, 3> z{};
  };

  NoiseParams forward(const nn::Tensor& x, Cache* cache) const;
  /// Gradients w.r.t. (alpha, sigma1, sigma2).
  void backward(const Cache& cache, const std::array<double, 3>& d_out);

  std::vector<nn::Param*> params();

 private:
  std::size_t channels_;
  nn::Conv2d c1_, c2_, c3_, c4_;
  nn::Param fc_w_;
  nn::Param fc_b_;
};

/// Visible-branch mean of the denoiser; reflect-pads to the down factor and
/// crops back. Touches neither the masker nor the estimator.
ImageTensor infer(const DenoiserNet& net, const ImageTensor& y);

}  // namespace pgs
