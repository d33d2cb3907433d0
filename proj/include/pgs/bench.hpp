#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgs/cramer_loss.hpp"
#include "pgs/noise_model.hpp"
#include "pgs/trainer.hpp"

namespace pgs {

/// Rows of preformatted cells. Text and TSV renderings share the same strings.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;

  std::string text() const;
  std::string tsv() const;
};

enum class EstimationMethod { Gaussian, Cramer };
EstimationMethod parse_method(const std::string& name);
std::string to_string(EstimationMethod m);

/// Estimation loss with (alpha, sigma) gradients for the chosen method.
EstimationLoss method_loss(const ImageTensor& y, const NoiseParams& p, EstimationMethod method,
                           const EstimationLossConfig& cfg, bool with_grad);

struct GridFitConfig {
  double alpha_min = 1e-4;
  double alpha_max = 0.5;
  std::size_t alpha_points = 13;
  double sigma_min = 1e-4;
  double sigma_max = 0.2;
  std::size_t sigma_points = 9;
  std::size_t refinements = 2;
  std::size_t refine_points = 5;
  /// Nelder-Mead polish over (log alpha, sigma) after the grid; 0 disables.
  std::size_t polish_evaluations = 60;
  double polish_sigma_step = 0.01;
};

struct FitResult {
  NoiseParams params{};
  double loss = 0.0;
  std::size_t evaluations = 0;
};

/// Coarse-to-fine search over a log-spaced (alpha, sigma) grid.
FitResult grid_fit(const ImageTensor& y, EstimationMethod method, const EstimationLossConfig& cfg,
                   const GridFitConfig& grid = {});
/// One (alpha, sigma) for a whole set: minimizes the mean loss over the images.
FitResult grid_fit(std::span<const ImageTensor> images, EstimationMethod method, const EstimationLossConfig& cfg,
                   const GridFitConfig& grid = {});

struct NetFitConfig {
  std::size_t steps = 300;
  std::size_t crop = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

/// Trains an EstimatorNet on random crops of `noisy` with the estimation
/// loss alone and returns its mean prediction over the full images.
NoiseParams net_fit(std::span<const ImageTensor> noisy, EstimationMethod method, const EstimationLossConfig& cfg,
                    const NetFitConfig& net = {});

struct NamedLevel {
  std::string name;
  NoiseParams params;
};

/// Comma list of pg1..pg5, `zero`, or `alpha:sigma` pairs.
std::vector<NamedLevel> parse_levels(const std::string& spec);

struct BenchConfig {
  EstimationMethod method = EstimationMethod::Cramer;
  bool train = false;
  EstimationLossConfig loss{};
  GridFitConfig grid{};
  NetFitConfig net{};
  std::uint64_t seed = 7;
  /// Use at most this many images; 0 means all.
  std::size_t max_images = 0;
};

struct BenchRow {
  std::string level;
  NoiseParams truth{};
  double alpha_hat = 0.0;
  double sigma_hat = 0.0;
  double seconds = 0.0;
};

struct BenchReport {
  std::string title;
  std::vector<BenchRow> rows;
  Table table() const;
};

/// Corrupts every clean image at each level and fits the noise parameters.
BenchReport bench_estimation(std::span<const ImageTensor> clean, std::span<const NamedLevel> levels,
                             const BenchConfig& cfg);

enum class AblationAxis { Grain, Weight, Scheme, NoiseModel, Iid, Lambda };
AblationAxis parse_axis(const std::string& name);
std::string to_string(AblationAxis a);

struct AblationRow {
  std::string setting;
  double psnr = 0.0;
  double ssim = 0.0;
  double alpha_hat = 0.0;
  double sigma_hat = 0.0;
  double est_loss = 0.0;
};

struct AblationReport {
  AblationAxis axis = AblationAxis::Iid;
  std::vector<AblationRow> rows;
  std::string expectation;
  bool expectation_met = false;
  Table table() const;
};

/// Settings of one axis applied to `base`, in report order.
std::vector<std::pair<std::string, TrainConfig>> ablation_settings(AblationAxis axis, const TrainConfig& base);

/// Runs one desk-scale experiment per setting. The grain axis fits noise
/// parameters only; every other axis trains. Directional findings are
/// flagged, not asserted.
AblationReport run_ablation(AblationAxis axis, const TrainConfig& base, bool parallel = false,
                            const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace pgs
