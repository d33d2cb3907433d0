#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pgs/cramer_loss.hpp"
#include "pgs/masking.hpp"
#include "pgs/networks.hpp"
#include "pgs/nn.hpp"
#include "pgs/revisible.hpp"

namespace pgs {

/// Where (alpha, sigma1, sigma2) come from during training.
enum class TrainScheme {
  Pretrained,  // T+P: frozen pre-trained estimator
  Fixed,       // T+F: the configured true parameters
  Joint,       // T+J: estimator trained jointly with the denoiser
};

TrainScheme parse_scheme(const std::string& name);
std::string to_string(TrainScheme s);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  std::size_t patch_size = 128;
  /// 0 means one pass over the training images per epoch.
  std::size_t steps_per_epoch = 0;
  double lr_denoiser = 1e-3;
  double lr_estimator = 1e-4;
  std::size_t denoiser_halve_every = 20;
  std::size_t estimator_halve_every = 10;
  double weight_decay = 1e-8;
  std::uint64_t seed = 1;

  ReVisibleConfig revisible{};
  TrainScheme scheme = TrainScheme::Joint;
  NoiseParams noise = NoiseParams::single(0.01, 0.02);
  bool exact_noise = true;

  std::size_t cell_size = 4;
  MaskFill mask_fill = MaskFill::NeighborMean;
  EstimationLossConfig estimation{};
  std::size_t channels = 1;

  std::filesystem::path data_dir;
  std::filesystem::path val_dir;
  /// Held out from the training images when no val_dir is given.
  std::size_t val_count = 4;
  /// Center crop applied to validation images; 0 keeps them whole.
  std::size_t val_crop = 128;
  /// Procedural dataset used when data_dir is empty.
  std::size_t synthetic_count = 24;
  std::size_t synthetic_size = 128;

  /// Checkpoint holding the frozen estimator for T+P. When empty the
  /// estimator is pre-trained on the estimation loss alone.
  std::filesystem::path pretrained_estimator;
  std::size_t pretrain_steps = 100;
  double pretrain_lr = 1e-3;

  void validate() const;
};

struct StepResult {
  double nll = 0.0;
  double est_loss = 0.0;
  double total = 0.0;
  NoiseParams mean_params{};
  /// Sum of |d loss / d visible head| over the batch; exactly 0 under IID.
  double visible_grad_abs = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double nll = 0.0;
  double est_loss = 0.0;
  double psnr_val = 0.0;
  double alpha_hat = 0.0;
  double sigma1_hat = 0.0;
  double sigma2_hat = 0.0;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const noexcept { return cfg_; }
  DenoiserNet& denoiser() noexcept { return denoiser_; }
  EstimatorNet& estimator() noexcept { return estimator_; }

  /// Noise parameters for one noisy image under the configured scheme.
  NoiseParams noise_params(const ImageTensor& y) const;

  /// One optimizer step on a batch of noisy patches. Throws a Numerical error
  /// naming the diverged term when a loss is non-finite; no update happens then.
  StepResult train_step(std::span<const ImageTensor> batch, double lambda);

  /// Sets learning rates for the epoch from the halving schedules.
  void begin_epoch(std::size_t epoch);

  /// Trains the estimator alone on the estimation loss.
  double pretrain_estimator(std::span<const ImageTensor> noisy, std::size_t steps, double lr);

  std::size_t steps() const noexcept { return steps_; }

 private:
  struct SampleOut {
    double nll = 0.0;
    double est = 0.0;
    NoiseParams params{};
    double visible_abs = 0.0;
  };
  SampleOut accumulate_sample(const ImageTensor& y, double lambda, double scale, SeededRng& rng);

  TrainConfig cfg_;
  DenoiserNet denoiser_;
  EstimatorNet estimator_;
  nn::Adam den_opt_;
  nn::Adam est_opt_;
  SeededRng rng_;
  std::size_t steps_ = 0;
};

/// Estimation loss on one image averaged over the two branch sigmas, with
/// gradients w.r.t. (alpha, sigma1, sigma2).
struct JointEstimationLoss {
  double value = 0.0;
  double d_alpha = 0.0;
  double d_sigma1 = 0.0;
  double d_sigma2 = 0.0;
};
JointEstimationLoss estimation_loss(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg,
                                    bool with_grad);

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  double noisy_psnr_val = 0.0;
  double final_psnr_val = 0.0;
  double final_ssim_val = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Full training run. Writes metrics.tsv and a checkpoint into `out_dir`
/// when it is non-empty.
TrainReport run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                         const EpochCallback& on_epoch = {});

/// Same, on already-loaded clean images (train and validation sets).
TrainReport run_training(const TrainConfig& cfg, std::span<const ImageTensor> train_clean,
                         std::span<const ImageTensor> val_clean, const std::filesystem::path& out_dir,
                         const EpochCallback& on_epoch = {}, Trainer* trainer_out = nullptr);

/// Clean training and validation images as described by the config.
struct DataSplit {
  std::vector<ImageTensor> train;
  std::vector<ImageTensor> val;
};
DataSplit load_split(const TrainConfig& cfg);

void save_checkpoint(const std::filesystem::path& dir, Trainer& trainer);
/// Rebuilds the networks from a checkpoint directory; the config comes from
/// the manifest.
struct LoadedCheckpoint {
  TrainConfig config;
  DenoiserNet denoiser;
  EstimatorNet estimator;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace pgs
