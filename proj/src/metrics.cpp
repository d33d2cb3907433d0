#include "pgs/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs {

namespace {

std::vector<double> gaussian_window(const SsimConfig& cfg) {
  std::vector<double> w(cfg.window);
  const double mid = (static_cast<double>(cfg.window) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.window; ++i) {
    const double d = static_cast<double>(i) - mid;
    w[i] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

void check_ssim_inputs(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "ssim inputs differ in shape");
  require(cfg.window >= 1 && cfg.window % 2 == 1, ErrorKind::InvalidArgument, "ssim window must be odd");
  require(a.height() >= cfg.window && a.width() >= cfg.window, ErrorKind::InvalidArgument,
          "image smaller than the ssim window");
}

double ssim_value(double ma, double mb, double va, double vb, double cov, double c1, double c2) {
  return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

// Valid-mode separable filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t wo = w - n + 1;
  const std::size_t ho = h - n + 1;
  std::vector<double> tmp(h * wo, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < wo; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * src[y * w + x + i];
      tmp[y * wo + x] = s;
    }
  }
  std::vector<double> out(ho * wo, 0.0);
  for (std::size_t y = 0; y < ho; ++y) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ki = k[i];
      const double* row = tmp.data() + (y + i) * wo;
      double* dst = out.data() + y * wo;
      for (std::size_t x = 0; x < wo; ++x) dst[x] += ki * row[x];
    }
  }
  return out;
}

}  // namespace

std::string Psnr::str() const {
  if (saturated) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", db);
  return buf;
}

Psnr psnr(const ImageTensor& a, const ImageTensor& b, double max_val) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "psnr inputs differ in shape");
  require(!a.empty(), ErrorKind::InvalidArgument, "psnr of an empty image");
  require(max_val > 0.0, ErrorKind::InvalidArgument, "psnr max value must be positive");
  const double sse = simd::active().sq_diff_sum_f32(a.data().data(), b.data().data(), a.size());
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return {Psnr::kPsnrCeiling, true};
  return {10.0 * std::log10(max_val * max_val / mse), false};
}

double ssim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
  check_ssim_inputs(a, b, cfg);
  const auto k = gaussian_window(cfg);
  const double c1 = (cfg.k1 * cfg.data_range) * (cfg.k1 * cfg.data_range);
  const double c2 = (cfg.k2 * cfg.data_range) * (cfg.k2 * cfg.data_range);
  const std::size_t h = a.height();
  const std::size_t w = a.width();
  const std::size_t n = h * w;
  double total = 0.0;
  for (std::size_t ch = 0; ch < a.channels(); ++ch) {
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double x = a.at(r, c, ch);
        const double y = b.at(r, c, ch);
        const std::size_t i = r * w + c;
        pa[i] = x;
        pb[i] = y;
        paa[i] = x * x;
        pbb[i] = y * y;
        pab[i] = x * y;
      }
    }
    const auto ma = filter_valid(pa, h, w, k);
    const auto mb = filter_valid(pb, h, w, k);
    const auto maa = filter_valid(paa, h, w, k);
    const auto mbb = filter_valid(pbb, h, w, k);
    const auto mab = filter_valid(pab, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
      sum += ssim_value(ma[i], mb[i], maa[i] - ma[i] * ma[i], mbb[i] - mb[i] * mb[i], mab[i] - ma[i] * mb[i], c1,
                        c2);
    }
    total += sum / static_cast<double>(ma.size());
  }
  return total / static_cast<double>(a.channels());
}

double ssim_bruteforce(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg) {
  check_ssim_inputs(a, b, cfg);
  const auto k = gaussian_window(cfg);
  const double c1 = (cfg.k1 * cfg.data_range) * (cfg.k1 * cfg.data_range);
  const double c2 = (cfg.k2 * cfg.data_range) * (cfg.k2 * cfg.data_range);
  const std::size_t n = cfg.window;
  double total = 0.0;
  for (std::size_t ch = 0; ch < a.channels(); ++ch) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + n <= a.height(); ++r) {
      for (std::size_t c = 0; c + n <= a.width(); ++c) {
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            ma += k[i] * k[j] * a.at(r + i, c + j, ch);
            mb += k[i] * k[j] * b.at(r + i, c + j, ch);
          }
        }
        double va = 0, vb = 0, cov = 0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double da = a.at(r + i, c + j, ch) - ma;
            const double db = b.at(r + i, c + j, ch) - mb;
            va += k[i] * k[j] * da * da;
            vb += k[i] * k[j] * db * db;
            cov += k[i] * k[j] * da * db;
          }
        }
        sum += ssim_value(ma, mb, va, vb, cov, c1, c2);
        ++count;
      }
    }
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(a.channels());
}

}  // namespace pgs
