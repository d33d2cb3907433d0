#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pgs/simd.hpp"

namespace pgs::simd {

namespace {

constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 256;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Packed B strips are kStrip columns wide; C is walked in 6 x 16 register tiles.
constexpr std::size_t kStrip = 16;
constexpr std::size_t kRows = 6;
constexpr std::size_t kPackK = 256;
constexpr std::size_t kPackN = 256;

void pack_b(std::size_t kb, std::size_t nb, const float* b, std::size_t ldb, float* out) {
  for (std::size_t j0 = 0; j0 < nb; j0 += kStrip) {
    const std::size_t w = std::min(kStrip, nb - j0);
    float* dst = out + j0 * kb;
    for (std::size_t p = 0; p < kb; ++p) {
      const float* src = b + p * ldb + j0;
      std::size_t j = 0;
      for (; j < w; ++j) dst[p * kStrip + j] = src[j];
      for (; j < kStrip; ++j) dst[p * kStrip + j] = 0.0f;
    }
  }
}

template <std::size_t MR>
void micro_tile(std::size_t kb, const float* a, std::size_t lda, const float* strip, float* c, std::size_t ldc,
                std::size_t w) {
  __m256 acc[MR][2];
  alignas(32) float edge[MR][kStrip];
  if (w == kStrip) {
    for (std::size_t r = 0; r < MR; ++r) {
      acc[r][0] = _mm256_loadu_ps(c + r * ldc);
      acc[r][1] = _mm256_loadu_ps(c + r * ldc + 8);
    }
  } else {
    for (std::size_t r = 0; r < MR; ++r) {
      for (std::size_t j = 0; j < kStrip; ++j) edge[r][j] = j < w ? c[r * ldc + j] : 0.0f;
      acc[r][0] = _mm256_load_ps(edge[r]);
      acc[r][1] = _mm256_load_ps(edge[r] + 8);
    }
  }
  for (std::size_t p = 0; p < kb; ++p) {
    const __m256 b0 = _mm256_loadu_ps(strip + p * kStrip);
    const __m256 b1 = _mm256_loadu_ps(strip + p * kStrip + 8);
    for (std::size_t r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  if (w == kStrip) {
    for (std::size_t r = 0; r < MR; ++r) {
      _mm256_storeu_ps(c + r * ldc, acc[r][0]);
      _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    }
  } else {
    for (std::size_t r = 0; r < MR; ++r) {
      _mm256_store_ps(edge[r], acc[r][0]);
      _mm256_store_ps(edge[r] + 8, acc[r][1]);
      for (std::size_t j = 0; j < w; ++j) c[r * ldc + j] = edge[r][j];
    }
  }
}

template <std::size_t MR>
void row_block(std::size_t nb, std::size_t kb, const float* a, std::size_t lda, const float* packed, float* c,
               std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < nb; j0 += kStrip) {
    micro_tile<MR>(kb, a, lda, packed + j0 * kb, c + j0, ldc, std::min(kStrip, nb - j0));
  }
}

thread_local std::vector<float> t_packed;

void gemm_f32(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  t_packed.resize(kPackK * ((kPackN + kStrip - 1) / kStrip) * kStrip);
  for (std::size_t jc = 0; jc < n; jc += kPackN) {
    const std::size_t nb = std::min(kPackN, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kPackK) {
      const std::size_t kb = std::min(kPackK, k - pc);
      pack_b(kb, nb, b + pc * ldb + jc, ldb, t_packed.data());
      std::size_t i = 0;
      for (; i + kRows <= m; i += kRows) {
        row_block<kRows>(nb, kb, a + i * lda + pc, lda, t_packed.data(), c + i * ldc + jc, ldc);
      }
      const float* ar = a + i * lda + pc;
      float* cr = c + i * ldc + jc;
      switch (m - i) {
        case 5: row_block<5>(nb, kb, ar, lda, t_packed.data(), cr, ldc); break;
        case 4: row_block<4>(nb, kb, ar, lda, t_packed.data(), cr, ldc); break;
        case 3: row_block<3>(nb, kb, ar, lda, t_packed.data(), cr, ldc); break;
        case 2: row_block<2>(nb, kb, ar, lda, t_packed.data(), cr, ldc); break;
        case 1: row_block<1>(nb, kb, ar, lda, t_packed.data(), cr, ldc); break;
        default: break;
      }
    }
  }
}

inline float hsum_ps(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_movehdup_ps(s));
  return _mm_cvtss_f32(s);
}

constexpr std::size_t kNtChunk = 512;

// C[m x n] += A[m x k] * B[n x k]^T, 3 x 4 dot-product tiles over k chunks.
void gemm_nt_f32(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                 const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  for (std::size_t pc = 0; pc < k; pc += kNtChunk) {
    const std::size_t kb = std::min(kNtChunk, k - pc);
    const std::size_t kv = kb / 8 * 8;
    for (std::size_t j = 0; j < n; j += 4) {
      const std::size_t nj = std::min<std::size_t>(4, n - j);
      for (std::size_t i = 0; i < m; i += 3) {
        const std::size_t ni = std::min<std::size_t>(3, m - i);
        if (ni == 3 && nj == 4) {
          __m256 acc[3][4];
          for (auto& row : acc) {
            for (auto& v : row) v = _mm256_setzero_ps();
          }
          const float* a0 = a + i * lda + pc;
          const float* b0 = b + j * ldb + pc;
          for (std::size_t p = 0; p < kv; p += 8) {
            __m256 bv[4];
            for (std::size_t q = 0; q < 4; ++q) bv[q] = _mm256_loadu_ps(b0 + q * ldb + p);
            for (std::size_t r = 0; r < 3; ++r) {
              const __m256 av = _mm256_loadu_ps(a0 + r * lda + p);
              for (std::size_t q = 0; q < 4; ++q) acc[r][q] = _mm256_fmadd_ps(av, bv[q], acc[r][q]);
            }
          }
          for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t q = 0; q < 4; ++q) {
              float s = hsum_ps(acc[r][q]);
              for (std::size_t p = kv; p < kb; ++p) s += a0[r * lda + p] * b0[q * ldb + p];
              c[(i + r) * ldc + j + q] += s;
            }
          }
        } else {
          for (std::size_t r = 0; r < ni; ++r) {
            for (std::size_t q = 0; q < nj; ++q) {
              const float* ar = a + (i + r) * lda + pc;
              const float* br = b + (j + q) * ldb + pc;
              __m256 acc = _mm256_setzero_ps();
              for (std::size_t p = 0; p < kv; p += 8) {
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(ar + p), _mm256_loadu_ps(br + p), acc);
              }
              float s = hsum_ps(acc);
              for (std::size_t p = kv; p < kb; ++p) s += ar[p] * br[p];
              c[(i + r) * ldc + j + q] += s;
            }
          }
        }
      }
    }
  }
}

void gemm_f64_panel(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d acc[4][2];
      for (int r = 0; r < 4; ++r) {
        acc[r][0] = _mm256_loadu_pd(c + (i + r) * ldc + j);
        acc[r][1] = _mm256_loadu_pd(c + (i + r) * ldc + j + 4);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * ldb + j + 4);
        for (int r = 0; r < 4; ++r) {
          const __m256d av = _mm256_broadcast_sd(a + (i + r) * lda + p);
          acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
          acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
        }
      }
      for (int r = 0; r < 4; ++r) {
        _mm256_storeu_pd(c + (i + r) * ldc + j, acc[r][0]);
        _mm256_storeu_pd(c + (i + r) * ldc + j + 4, acc[r][1]);
      }
    }
    for (; j < n; ++j) {
      for (int r = 0; r < 4; ++r) {
        double s = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * lda + p] * b[p * ldb + j];
        c[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const __m256d av = _mm256_set1_pd(aip);
      const double* brow = b + p * ldb;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// Blocks k and n so the active B panel stays cache resident.
template <typename T, typename Panel>
void gemm_blocked(Panel panel, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t jc = 0; jc < n; jc += kBlockN) {
    const std::size_t nb = std::min(kBlockN, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kBlockK) {
      const std::size_t kb = std::min(kBlockK, k - pc);
      panel(m, nb, kb, a + pc, lda, b + pc * ldb + jc, ldb, c + jc, ldc);
    }
  }
}

void gemm_f64(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_blocked(gemm_f64_panel, m, n, k, a, lda, b, ldb, c, ldc);
}

// Widens to double so the result matches the scalar reference to rounding.
float dot_f32(const float* x, const float* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += double(x[i]) * double(y[i]);
  return static_cast<float>(s);
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double sq_diff_sum_f32(const float* x, const float* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                                     _mm256_cvtps_pd(_mm256_castps256_ps128(yv)));
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                                     _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = double(x[i]) - double(y[i]);
    s += d * d;
  }
  return s;
}

void sqrt_affine_f32(std::size_t n, const float* in, float gain, float offset, float scale, float* out) {
  const __m256 g = _mm256_set1_ps(gain);
  const __m256 o = _mm256_set1_ps(offset);
  const __m256 s = _mm256_set1_ps(scale);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // mul then add (no FMA) so rounding matches the scalar reference exactly.
    const __m256 arg = _mm256_max_ps(_mm256_add_ps(_mm256_mul_ps(g, _mm256_loadu_ps(in + i)), o), zero);
    _mm256_storeu_ps(out + i, _mm256_mul_ps(s, _mm256_sqrt_ps(arg)));
  }
  for (; i < n; ++i) {
    const float arg = gain * in[i] + offset;
    out[i] = scale * std::sqrt(arg > 0.0f ? arg : 0.0f);
  }
}

template <std::size_t MR>
void conv_tile(const float* padded, std::size_t cin, std::size_t pw, std::size_t pplane, const float* weight,
               std::size_t kk, float* out, std::size_t plane, std::size_t w, std::size_t y, std::size_t x0) {
  const std::size_t valid = std::min<std::size_t>(16, w - x0);
  __m256 acc[MR][2];
  alignas(32) float edge[MR][16];
  float* base = out + y * w + x0;
  for (std::size_t r = 0; r < MR; ++r) {
    if (valid == 16) {
      acc[r][0] = _mm256_loadu_ps(base + r * plane);
      acc[r][1] = _mm256_loadu_ps(base + r * plane + 8);
    } else {
      for (std::size_t j = 0; j < 16; ++j) edge[r][j] = j < valid ? base[r * plane + j] : 0.0f;
      acc[r][0] = _mm256_load_ps(edge[r]);
      acc[r][1] = _mm256_load_ps(edge[r] + 8);
    }
  }
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const float* src = padded + ci * pplane + y * pw + x0;
    const float* k = weight + ci * 9;
    for (std::size_t t = 0; t < 9; ++t) {
      const float* row = src + (t / 3) * pw + t % 3;
      const __m256 b0 = _mm256_loadu_ps(row);
      const __m256 b1 = _mm256_loadu_ps(row + 8);
      for (std::size_t r = 0; r < MR; ++r) {
        const __m256 av = _mm256_broadcast_ss(k + r * kk + t);
        acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
        acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
      }
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    if (valid == 16) {
      _mm256_storeu_ps(base + r * plane, acc[r][0]);
      _mm256_storeu_ps(base + r * plane + 8, acc[r][1]);
    } else {
      _mm256_store_ps(edge[r], acc[r][0]);
      _mm256_store_ps(edge[r] + 8, acc[r][1]);
      for (std::size_t j = 0; j < valid; ++j) base[r * plane + j] = edge[r][j];
    }
  }
}

template <std::size_t MR>
void conv_rows(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* weight, float* out) {
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  const std::size_t kk = cin * 9;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x0 = 0; x0 < w; x0 += 16) conv_tile<MR>(padded, cin, pw, pplane, weight, kk, out, h * w, w, y, x0);
  }
}

void conv3x3_f32(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* weight,
                 std::size_t cout, float* out) {
  const std::size_t kk = cin * 9;
  const std::size_t plane = h * w;
  std::size_t o = 0;
  for (; o + 6 <= cout; o += 6) conv_rows<6>(padded, cin, h, w, weight + o * kk, out + o * plane);
  switch (cout - o) {
    case 5: conv_rows<5>(padded, cin, h, w, weight + o * kk, out + o * plane); break;
    case 4: conv_rows<4>(padded, cin, h, w, weight + o * kk, out + o * plane); break;
    case 3: conv_rows<3>(padded, cin, h, w, weight + o * kk, out + o * plane); break;
    case 2: conv_rows<2>(padded, cin, h, w, weight + o * kk, out + o * plane); break;
    case 1: conv_rows<1>(padded, cin, h, w, weight + o * kk, out + o * plane); break;
    default: break;
  }
}

// One output channel against one input plane: nine tap accumulators.
void conv3x3_wgrad_f32(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* dout,
                       std::size_t cout, float* dweight) {
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  const std::size_t wv = w / 8 * 8;
  for (std::size_t o = 0; o < cout; ++o) {
    const float* d = dout + o * h * w;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const float* src = padded + ci * pplane;
      __m256 acc[9];
      for (auto& a : acc) a = _mm256_setzero_ps();
      float tail[9] = {};
      for (std::size_t y = 0; y < h; ++y) {
        const float* drow = d + y * w;
        const float* r0 = src + y * pw;
        for (std::size_t x = 0; x < wv; x += 8) {
          const __m256 dv = _mm256_loadu_ps(drow + x);
          for (std::size_t t = 0; t < 9; ++t) {
            acc[t] = _mm256_fmadd_ps(dv, _mm256_loadu_ps(r0 + (t / 3) * pw + t % 3 + x), acc[t]);
          }
        }
        for (std::size_t x = wv; x < w; ++x) {
          for (std::size_t t = 0; t < 9; ++t) tail[t] += drow[x] * r0[(t / 3) * pw + t % 3 + x];
        }
      }
      float* dw = dweight + (o * cin + ci) * 9;
      for (std::size_t t = 0; t < 9; ++t) dw[t] += hsum_ps(acc[t]) + tail[t];
    }
  }
}

}  // namespace

namespace detail {
const KernelTable kAvx2Table{
    Isa::Avx2,       gemm_f32,    gemm_nt_f32,       gemm_f64,        dot_f32, dot_f64,
    axpy_f32,        sq_diff_sum_f32, conv3x3_f32, conv3x3_wgrad_f32, sqrt_affine_f32,
};
}  // namespace detail

}  // namespace pgs::simd
