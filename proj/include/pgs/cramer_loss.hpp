#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgs/image.hpp"
#include "pgs/noise_model.hpp"
#include "pgs/variance_estimator.hpp"

namespace pgs {

struct BlockRegion {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Four corner-anchored blocks, each ceil(3H/4) x ceil(3W/4).
struct SubBlockSet {
  std::array<BlockRegion, 4> regions;
  std::array<ImageTensor, 4> blocks;
};

std::array<BlockRegion, 4> corner_regions(std::size_t height, std::size_t width);
/// Nine ceil(H/2) x ceil(W/2) blocks on a 3 x 3 anchor grid.
std::array<BlockRegion, 9> half_regions(std::size_t height, std::size_t width);
SubBlockSet crop_corner_blocks(const ImageTensor& img);

/// Which unit-variance terms enter the estimation loss.
struct Grain {
  bool coarse = true;         // whole image
  bool corners = true;        // four 3/4-size blocks
  bool halves = false;        // nine 1/2-size blocks

  static Grain parse(const std::string& name);
  std::string name() const;
};

struct EstimationLossConfig {
  PatchConfig patch{};
  Grain grain{};
  /// Use the literal ordered j != k sum for the cross-channel loss.
  bool literal_multi = false;
  /// Truncation counts per eta term, in evaluation order; empty = adaptive.
  std::vector<std::size_t> fixed_kept;
};

struct EstimationLoss {
  double value = 0.0;
  double d_alpha = 0.0;
  double d_sigma = 0.0;
  std::vector<double> etas;          // every eta term, evaluation order
  std::vector<std::size_t> kept;     // truncation count per eta term
};

/// Mean over channels of (eta(G(y_c)) - 1)^2.
double gaussian_loss(const ImageTensor& y, const NoiseParams& p, const PatchConfig& patch = {});
EstimationLoss gaussian_loss_detail(const ImageTensor& y, const NoiseParams& p,
                                    const EstimationLossConfig& cfg, bool with_grad);

/// Corner-block terms plus the global term (grain-configurable).
double cramer_loss_single(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg = {});
/// Per-channel unit terms plus pairwise agreement terms.
double cramer_loss_multi(const ImageTensor& y, const NoiseParams& p, const EstimationLossConfig& cfg = {});

/// Dispatches on channel count: single-channel -> block loss, else cross-channel.
EstimationLoss cramer_loss_detail(const ImageTensor& y, const NoiseParams& p,
                                  const EstimationLossConfig& cfg, bool with_grad);

struct CrossChannel {
  double value = 0.0;
  std::vector<double> d_eta;
};

/// Cross-channel combination of per-channel eta values.
CrossChannel cross_channel_combine(std::span<const double> etas, bool literal);

}  // namespace pgs
