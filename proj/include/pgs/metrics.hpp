#pragma once

#include <string>

#include "pgs/image.hpp"

namespace pgs {

/// PSNR in dB. Identical inputs give `saturated` with `db` pinned to
/// kPsnrCeiling so averages stay finite.
struct Psnr {
  static constexpr double kPsnrCeiling = 100.0;
  double db = 0.0;
  bool saturated = false;

  std::string str() const;
};

Psnr psnr(const ImageTensor& a, const ImageTensor& b, double max_val = 1.0);

struct SsimConfig {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean local SSIM over valid window positions, averaged over channels.
double ssim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg = {});

/// Per-window reference used to cross-check `ssim`.
double ssim_bruteforce(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg = {});

}  // namespace pgs
