#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pgs/image.hpp"

namespace pgs {

/// Square patch geometry for the eigenvalue noise estimator.
struct PatchConfig {
  std::size_t patch_size = 8;
  std::size_t stride = 2;

  void validate() const;
  std::size_t dim() const noexcept { return patch_size * patch_size; }
  std::size_t count(std::size_t height, std::size_t width) const;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Read-only single-channel plane in double precision.
struct PlaneView {
  std::span<const double> data;
  std::size_t height = 0;
  std::size_t width = 0;
};

std::vector<double> to_plane(const ImageTensor& img);

/// One vectorized patch per row, taken at `stride` over valid positions.
Matrix extract_patches(const ImageTensor& img, const PatchConfig& cfg);
Matrix extract_patches(PlaneView plane, const PatchConfig& cfg);

/// Sample covariance (divisor n - 1), exactly symmetric.
Matrix patch_covariance(const Matrix& patches);

struct SymEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column i pairs with values[i]
};

/// Cyclic Jacobi. Converges when the off-diagonal Frobenius norm drops
/// below 1e-10 of the matrix norm, or after 100 sweeps.
SymEigen sym_eigen(const Matrix& m);
std::vector<double> sym_eigenvalues(const Matrix& m);

/// How many of the smallest eigenvalues the estimator averages: drop the
/// largest while mean exceeds median * (1 + 1e-3).
std::size_t truncation_count(std::span<const double> ascending);

struct SigmaEstimate {
  double value = 0.0;
  std::size_t kept = 0;  // eigenvalues averaged
  std::vector<double> grad;  // d value / d pixel, empty unless requested
};

struct EstimateOptions {
  /// Freeze the truncation set (used by finite-difference checks).
  std::optional<std::size_t> fixed_kept;
  bool with_grad = false;
};

/// Noise variance of a single-channel image from the low end of the
/// patch-covariance spectrum. Returns 0 for a constant image.
double estimate_sigma2(const ImageTensor& img, const PatchConfig& cfg = {});
SigmaEstimate estimate_sigma2(PlaneView plane, const PatchConfig& cfg, const EstimateOptions& opts);

}  // namespace pgs
