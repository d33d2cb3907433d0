#pragma once

#include <cstddef>
#include <string_view>

namespace pgs::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Inner-loop kernels. Every entry has a scalar reference implementation;
/// the AVX2 table must agree with it to rounding (see test_simd).
///
/// Matrices are row-major with explicit leading dimensions.
struct KernelTable {
  Isa isa;
  /// C[m x n] += A[m x k] * B[k x n]
  void (*gemm_f32)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                   const float* b, std::size_t ldb, float* c, std::size_t ldc);
  /// C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt_f32)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                      const float* b, std::size_t ldb, float* c, std::size_t ldc);
  void (*gemm_f64)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                   const double* b, std::size_t ldb, double* c, std::size_t ldc);
  float (*dot_f32)(const float* x, const float* y, std::size_t n);
  double (*dot_f64)(const double* x, const double* y, std::size_t n);
  /// y += a * x
  void (*axpy_f32)(std::size_t n, float a, const float* x, float* y);
  /// sum (x - y)^2 accumulated in double
  double (*sq_diff_sum_f32)(const float* x, const float* y, std::size_t n);
  /// 3 x 3 stride-1 correlation accumulated into out[cout][h][w]. `padded`
  /// holds cin planes of (h+2) x (w+2) plus kConvSlack trailing floats.
  void (*conv3x3_f32)(const float* padded, std::size_t cin, std::size_t h, std::size_t w, const float* weight,
                      std::size_t cout, float* out);
  /// dweight[cout][cin][9] += sum over pixels of dout * shifted padded input.
  void (*conv3x3_wgrad_f32)(const float* padded, std::size_t cin, std::size_t h, std::size_t w,
                            const float* dout, std::size_t cout, float* dweight);
  /// out = scale * sqrt(max(gain * in + offset, 0))
  void (*sqrt_affine_f32)(std::size_t n, const float* in, float gain, float offset, float scale,
                          float* out);
};

/// Zero floats required after the last padded plane.
inline constexpr std::size_t kConvSlack = 32;

bool supported(Isa isa) noexcept;
const KernelTable& table(Isa isa);

/// Kernels in use. Picked once from CPUID (AVX2 and FMA required for the
/// vector path); the PGS_SIMD environment variable ("scalar"/"avx2") or
/// `set_active` override the choice.
const KernelTable& active() noexcept;
Isa active_isa() noexcept;
void set_active(Isa isa);

inline void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                 const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  active().gemm_f32(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                    const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  active().gemm_nt_f32(m, n, k, a, lda, b, ldb, c, ldc);
}
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  active().gemm_f64(m, n, k, a, lda, b, ldb, c, ldc);
}
inline float dot(const float* x, const float* y, std::size_t n) { return active().dot_f32(x, y, n); }
inline double dot(const double* x, const double* y, std::size_t n) { return active().dot_f64(x, y, n); }
inline void axpy(std::size_t n, float a, const float* x, float* y) { active().axpy_f32(n, a, x, y); }

namespace detail {
extern const KernelTable kScalarTable;
#if defined(PGS_BUILD_AVX2)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace pgs::simd
