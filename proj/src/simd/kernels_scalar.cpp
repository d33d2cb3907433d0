#include <cmath>

#include "pgs/simd.hpp"

namespace pgs::simd {

namespace {

template <typename T>
void gemm_ref(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
              std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * lda + p];
      if (aip == T(0)) continue;
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt_f32(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                 std::size_t ldb, float* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float s = 0.0f;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[j * ldb + p];
      c[i * ldc + j] += s;
    }
  }
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += double(x[i]) * double(y[i]);
  return static_cast<float>(s);
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sq_diff_sum_f32(const float* x, const float* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(x[i]) - double(y[i]);
    s += d * d;
  }
  return s;
}

void sqrt_affine_f32(std::size_t n, const float* in, float gain, float offset, float scale, float* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const float arg = gain * in[i] + offset;
    out[i] = scale * std::sqrt(arg > 0.0f ? arg : 0.0f);
  }
}

void conv3x3_f32(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* weight,
                 std::size_t cout, float* out) {
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    float* dst = out + o * h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const float* src = padded + ci * pplane;
      const float* k = weight + (o * cin + ci) * 9;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          float s = 0.0f;
          for (std::size_t t = 0; t < 9; ++t) s += k[t] * src[(y + t / 3) * pw + x + t % 3];
          dst[y * w + x] += s;
        }
      }
    }
  }
}

void conv3x3_wgrad_f32(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* dout,
                       std::size_t cout, float* dweight) {
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    const float* d = dout + o * h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const float* src = padded + ci * pplane;
      for (std::size_t t = 0; t < 9; ++t) {
        float s = 0.0f;
        for (std::size_t y = 0; y < h; ++y) {
          const float* row = src + (y + t / 3) * pw + t % 3;
          for (std::size_t x = 0; x < w; ++x) s += d[y * w + x] * row[x];
        }
        dweight[(o * cin + ci) * 9 + t] += s;
      }
    }
  }
}

}  // namespace

namespace detail {
const KernelTable kScalarTable{
    Isa::Scalar, gemm_ref<float>, gemm_nt_f32,     gemm_ref<double>, dot_f32,
    dot_f64,     axpy_f32,        sq_diff_sum_f32, conv3x3_f32,      conv3x3_wgrad_f32,
    sqrt_affine_f32,
};
}  // namespace detail

}  // namespace pgs::simd
