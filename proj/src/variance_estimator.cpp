#include "pgs/variance_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pgs/error.hpp"
#include "pgs/simd.hpp"

namespace pgs {

namespace {

constexpr double kTruncationTol = 1e-3;
constexpr double kJacobiTol = 1e-10;
constexpr int kMaxSweeps = 100;
constexpr double kSymmetryTol = 1e-6;

void check_plane(PlaneView plane, const PatchConfig& cfg) {
  cfg.validate();
  require(plane.data.size() == plane.height * plane.width, ErrorKind::ShapeMismatch,
          "plane buffer does not match its dimensions");
  if (plane.height < cfg.patch_size || plane.width < cfg.patch_size) {
    fail(ErrorKind::InvalidArgument, "image " + std::to_string(plane.height) + "x" +
                                         std::to_string(plane.width) + " smaller than patch " +
                                         std::to_string(cfg.patch_size));
  }
}

// Centered patch matrix X (n x d) and its transpose.
struct Centered {
  Matrix x;
  Matrix xt;
};

Centered center(const Matrix& patches) {
  const auto n = patches.rows;
  const auto d = patches.cols;
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += patches(r, c);
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  Centered out{Matrix(n, d), Matrix(d, n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = patches(r, c) - mean[c];
      out.x(r, c) = v;
      out.xt(c, r) = v;
    }
  }
  return out;
}

Matrix covariance_of(const Centered& cx) {
  const auto n = cx.x.rows;
  const auto d = cx.x.cols;
  Matrix cov(d, d);
  simd::gemm(d, d, n, cx.xt.data.data(), n, cx.x.data.data(), d, cov.data.data(), d);
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double v = 0.5 * (cov(i, j) + cov(j, i)) * inv;
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  return cov;
}

double median_of(std::span<const double> sorted) {
  const auto n = sorted.size();
  return n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

void PatchConfig::validate() const {
  require(patch_size >= 4, ErrorKind::InvalidArgument, "patch_size must be >= 4");
  require(stride >= 1, ErrorKind::InvalidArgument, "stride must be >= 1");
}

std::size_t PatchConfig::count(std::size_t height, std::size_t width) const {
  if (height < patch_size || width < patch_size) return 0;
  return ((height - patch_size) / stride + 1) * ((width - patch_size) / stride + 1);
}

std::vector<double> to_plane(const ImageTensor& img) {
  require(img.channels() == 1, ErrorKind::InvalidArgument, "expected a single-channel image");
  auto src = img.data();
  return {src.begin(), src.end()};
}

Matrix extract_patches(PlaneView plane, const PatchConfig& cfg) {
  check_plane(plane, cfg);
  const auto p = cfg.patch_size;
  const auto rows = (plane.height - p) / cfg.stride + 1;
  const auto cols = (plane.width - p) / cfg.stride + 1;
  Matrix out(rows * cols, p * p);
  std::size_t r = 0;
  for (std::size_t pi = 0; pi < rows; ++pi) {
    for (std::size_t pj = 0; pj < cols; ++pj, ++r) {
      double* dst = &out(r, 0);
      for (std::size_t u = 0; u < p; ++u) {
        const double* src = plane.data.data() + (pi * cfg.stride + u) * plane.width + pj * cfg.stride;
        std::copy(src, src + p, dst + u * p);
      }
    }
  }
  return out;
}

Matrix extract_patches(const ImageTensor& img, const PatchConfig& cfg) {
  const auto plane = to_plane(img);
  return extract_patches(PlaneView{plane, img.height(), img.width()}, cfg);
}

Matrix patch_covariance(const Matrix& patches) {
  require(patches.rows >= 2, ErrorKind::InvalidArgument, "covariance needs at least 2 patches");
  return covariance_of(center(patches));
}

namespace {

SymEigen jacobi(const Matrix& m, bool want_vectors) {
  require(m.rows == m.cols, ErrorKind::InvalidArgument, "eigen decomposition needs a square matrix");
  const auto n = m.rows;
  double max_abs = 0.0;
  for (double v : m.data) max_abs = std::max(max_abs, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > kSymmetryTol * std::max(1.0, max_abs)) {
        fail(ErrorKind::InvalidArgument, "matrix is not symmetric");
      }
    }
  }

  Matrix a = m;
  Matrix v(want_vectors ? n : 0, want_vectors ? n : 0);
  for (std::size_t i = 0; i < v.rows; ++i) v(i, i) = 1.0;

  double total = 0.0;
  for (double x : a.data) total += x * x;
  const double limit = kJacobiTol * std::sqrt(total);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    }
    if (std::sqrt(off) <= limit) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < v.rows; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
  SymEigen out{std::vector<double>(n), Matrix(v.rows, v.cols)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < v.rows; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

}  // namespace

SymEigen sym_eigen(const Matrix& m) { return jacobi(m, true); }

std::vector<double> sym_eigenvalues(const Matrix& m) { return jacobi(m, false).values; }

std::size_t truncation_count(std::span<const double> ascending) {
  std::size_t kept = ascending.size();
  double sum = std::accumulate(ascending.begin(), ascending.end(), 0.0);
  while (kept > 1) {
    const auto head = ascending.first(kept);
    const double mean = sum / static_cast<double>(kept);
    if (mean <= median_of(head) * (1.0 + kTruncationTol)) break;
    sum -= ascending[kept - 1];
    --kept;
  }
  return kept;
}

SigmaEstimate estimate_sigma2(PlaneView plane, const PatchConfig& cfg, const EstimateOptions& opts) {
  check_plane(plane, cfg);
  const auto d = cfg.dim();
  const auto n = cfg.count(plane.height, plane.width);
  if (n < d) {
    fail(ErrorKind::InvalidArgument, std::to_string(n) + " patches cannot support a " +
                                         std::to_string(d) + "-dim covariance");
  }
  const auto patches = extract_patches(plane, cfg);
  const auto cx = center(patches);
  const auto cov = covariance_of(cx);
  const auto eig = opts.with_grad ? sym_eigen(cov) : SymEigen{sym_eigenvalues(cov), {}};

  SigmaEstimate out;
  out.kept = opts.fixed_kept ? std::clamp<std::size_t>(*opts.fixed_kept, 1, d) : truncation_count(eig.values);
  out.value = std::accumulate(eig.values.begin(), eig.values.begin() + out.kept, 0.0) /
              static_cast<double>(out.kept);
  if (!opts.with_grad) return out;

  // d(mean of kept eigenvalues)/dC is the projector onto their eigenspace,
  // divided by the count. Chain through C = X^T X / (n - 1).
  Matrix proj(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < out.kept; ++k) s += eig.vectors(i, k) * eig.vectors(j, k);
      proj(i, j) = s;
    }
  }
  Matrix dx(n, d);
  simd::gemm(n, d, d, cx.x.data.data(), d, proj.data.data(), d, dx.data.data(), d);
  const double scale = 2.0 / (static_cast<double>(n - 1) * static_cast<double>(out.kept));

  out.grad.assign(plane.data.size(), 0.0);
  const auto p = cfg.patch_size;
  const auto cols = (plane.width - p) / cfg.stride + 1;
  for (std::size_t r = 0; r < n; ++r) {
    const auto pi = r / cols;
    const auto pj = r % cols;
    const double* src = &dx(r, 0);
    for (std::size_t u = 0; u < p; ++u) {
      double* dst = out.grad.data() + (pi * cfg.stride + u) * plane.width + pj * cfg.stride;
      for (std::size_t w = 0; w < p; ++w) dst[w] += scale * src[u * p + w];
    }
  }
  return out;
}

double estimate_sigma2(const ImageTensor& img, const PatchConfig& cfg) {
  const auto plane = to_plane(img);
  return estimate_sigma2(PlaneView{plane, img.height(), img.width()}, cfg, {}).value;
}

}  // namespace pgs
