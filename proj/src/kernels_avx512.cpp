#include "kernels_internal.hpp"

#if defined(FREQFLOW_X86_KERNELS)

#include <immintrin.h>

#include <cmath>

// AVX-512F kernels; same bit-exactness contract as the AVX2 set (see
// kernels.hpp): per-element k-ascending single-rounded fma accumulation.

namespace fq::kern {
namespace {

inline void tile_1x32(double* c, const double* a, size_t es, const double* b,
                      size_t k, size_t n, bool acc) {
    __m512d s0, s1, s2, s3;
    if (acc) {
        s0 = _mm512_loadu_pd(c + 0);
        s1 = _mm512_loadu_pd(c + 8);
        s2 = _mm512_loadu_pd(c + 16);
        s3 = _mm512_loadu_pd(c + 24);
    } else {
        s0 = s1 = s2 = s3 = _mm512_setzero_pd();
    }
    for (size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        const __m512d va = _mm512_set1_pd(a[p * es]);
        s0 = _mm512_fmadd_pd(va, _mm512_loadu_pd(bp + 0), s0);
        s1 = _mm512_fmadd_pd(va, _mm512_loadu_pd(bp + 8), s1);
        s2 = _mm512_fmadd_pd(va, _mm512_loadu_pd(bp + 16), s2);
        s3 = _mm512_fmadd_pd(va, _mm512_loadu_pd(bp + 24), s3);
    }
    _mm512_storeu_pd(c + 0, s0);
    _mm512_storeu_pd(c + 8, s1);
    _mm512_storeu_pd(c + 16, s2);
    _mm512_storeu_pd(c + 24, s3);
}

inline void tile_2x32(double* c0, double* c1, const double* a0,
                      const double* a1, size_t es, const double* b, size_t k,
                      size_t n, bool acc) {
    __m512d s00, s01, s02, s03, s10, s11, s12, s13;
    if (acc) {
        s00 = _mm512_loadu_pd(c0 + 0);
        s01 = _mm512_loadu_pd(c0 + 8);
        s02 = _mm512_loadu_pd(c0 + 16);
        s03 = _mm512_loadu_pd(c0 + 24);
        s10 = _mm512_loadu_pd(c1 + 0);
        s11 = _mm512_loadu_pd(c1 + 8);
        s12 = _mm512_loadu_pd(c1 + 16);
        s13 = _mm512_loadu_pd(c1 + 24);
    } else {
        s00 = s01 = s02 = s03 = _mm512_setzero_pd();
        s10 = s11 = s12 = s13 = _mm512_setzero_pd();
    }
    for (size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        const __m512d b0 = _mm512_loadu_pd(bp + 0);
        const __m512d b1 = _mm512_loadu_pd(bp + 8);
        const __m512d b2 = _mm512_loadu_pd(bp + 16);
        const __m512d b3 = _mm512_loadu_pd(bp + 24);
        const __m512d va0 = _mm512_set1_pd(a0[p * es]);
        const __m512d va1 = _mm512_set1_pd(a1[p * es]);
        s00 = _mm512_fmadd_pd(va0, b0, s00);
        s01 = _mm512_fmadd_pd(va0, b1, s01);
        s02 = _mm512_fmadd_pd(va0, b2, s02);
        s03 = _mm512_fmadd_pd(va0, b3, s03);
        s10 = _mm512_fmadd_pd(va1, b0, s10);
        s11 = _mm512_fmadd_pd(va1, b1, s11);
        s12 = _mm512_fmadd_pd(va1, b2, s12);
        s13 = _mm512_fmadd_pd(va1, b3, s13);
    }
    _mm512_storeu_pd(c0 + 0, s00);
    _mm512_storeu_pd(c0 + 8, s01);
    _mm512_storeu_pd(c0 + 16, s02);
    _mm512_storeu_pd(c0 + 24, s03);
    _mm512_storeu_pd(c1 + 0, s10);
    _mm512_storeu_pd(c1 + 8, s11);
    _mm512_storeu_pd(c1 + 16, s12);
    _mm512_storeu_pd(c1 + 24, s13);
}

inline void tile_1x8(double* c, const double* a, size_t es, const double* b,
                     size_t k, size_t n, bool acc) {
    __m512d s = acc ? _mm512_loadu_pd(c) : _mm512_setzero_pd();
    for (size_t p = 0; p < k; ++p) {
        s = _mm512_fmadd_pd(_mm512_set1_pd(a[p * es]), _mm512_loadu_pd(b + p * n), s);
    }
    _mm512_storeu_pd(c, s);
}

inline double cell(const double* a, size_t es, const double* b, size_t k,
                   size_t n, double init) {
    double s = init;
    for (size_t p = 0; p < k; ++p) s = std::fma(a[p * es], b[p * n], s);
    return s;
}

void gemm(double* c, const double* a, size_t rs, size_t es, const double* b,
          size_t m, size_t k, size_t n, bool acc) {
    size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * rs;
        const double* a1 = a + (i + 1) * rs;
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        size_t j = 0;
        for (; j + 32 <= n; j += 32)
            tile_2x32(c0 + j, c1 + j, a0, a1, es, b + j, k, n, acc);
        for (; j + 8 <= n; j += 8) {
            tile_1x8(c0 + j, a0, es, b + j, k, n, acc);
            tile_1x8(c1 + j, a1, es, b + j, k, n, acc);
        }
        for (; j < n; ++j) {
            c0[j] = cell(a0, es, b + j, k, n, acc ? c0[j] : 0.0);
            c1[j] = cell(a1, es, b + j, k, n, acc ? c1[j] : 0.0);
        }
    }
    if (i < m) {
        const double* a0 = a + i * rs;
        double* c0 = c + i * n;
        size_t j = 0;
        for (; j + 32 <= n; j += 32) tile_1x32(c0 + j, a0, es, b + j, k, n, acc);
        for (; j + 8 <= n; j += 8) tile_1x8(c0 + j, a0, es, b + j, k, n, acc);
        for (; j < n; ++j) c0[j] = cell(a0, es, b + j, k, n, acc ? c0[j] : 0.0);
    }
}

void matmul_avx512(double* c, const double* a, const double* b, size_t m,
                   size_t k, size_t n, bool acc) {
    gemm(c, a, k, 1, b, m, k, n, acc);
}

void matmul_at_b_avx512(double* c, const double* a, const double* b, size_t m,
                        size_t k, size_t n, bool acc) {
    gemm(c, a, 1, m, b, m, k, n, acc);
}

void add_avx512(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _mm512_add_pd(_mm512_loadu_pd(a + i),
                                                _mm512_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx512(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _mm512_sub_pd(_mm512_loadu_pd(a + i),
                                                _mm512_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx512(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _mm512_mul_pd(_mm512_loadu_pd(a + i),
                                                _mm512_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx512(double* out, const double* a, double s, size_t n) {
    const __m512d vs = _mm512_set1_pd(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _mm512_mul_pd(_mm512_loadu_pd(a + i), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx512(double* y, const double* x, double s, size_t n) {
    const __m512d vs = _mm512_set1_pd(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(y + i, _mm512_fmadd_pd(vs, _mm512_loadu_pd(x + i),
                                                _mm512_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

void adam_avx512(double* theta, double* m, double* v, const double* g,
                 size_t n, double lr, double b1, double b2, double eps,
                 double c1, double c2) {
    const double omb1 = 1.0 - b1;
    const double omb2 = 1.0 - b2;
    const __m512d vb1 = _mm512_set1_pd(b1);
    const __m512d vb2 = _mm512_set1_pd(b2);
    const __m512d vomb1 = _mm512_set1_pd(omb1);
    const __m512d vomb2 = _mm512_set1_pd(omb2);
    const __m512d vc1 = _mm512_set1_pd(c1);
    const __m512d vc2 = _mm512_set1_pd(c2);
    const __m512d vlr = _mm512_set1_pd(lr);
    const __m512d veps = _mm512_set1_pd(eps);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m512d gi = _mm512_loadu_pd(g + i);
        __m512d mi = _mm512_loadu_pd(m + i);
        __m512d vi = _mm512_loadu_pd(v + i);
        mi = _mm512_fmadd_pd(vb1, mi, _mm512_mul_pd(vomb1, gi));
        vi = _mm512_fmadd_pd(vb2, vi, _mm512_mul_pd(vomb2, _mm512_mul_pd(gi, gi)));
        _mm512_storeu_pd(m + i, mi);
        _mm512_storeu_pd(v + i, vi);
        const __m512d mhat = _mm512_mul_pd(mi, vc1);
        const __m512d vhat = _mm512_mul_pd(vi, vc2);
        const __m512d denom = _mm512_add_pd(_mm512_sqrt_pd(vhat), veps);
        const __m512d step = _mm512_div_pd(_mm512_mul_pd(vlr, mhat), denom);
        _mm512_storeu_pd(theta + i,
                         _mm512_sub_pd(_mm512_loadu_pd(theta + i), step));
    }
    for (; i < n; ++i) {
        m[i] = std::fma(b1, m[i], omb1 * g[i]);
        v[i] = std::fma(b2, v[i], omb2 * (g[i] * g[i]));
        const double mhat = m[i] * c1;
        const double vhat = v[i] * c2;
        theta[i] -= (lr * mhat) / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Ops& avx512_table() {
    static const Ops ops = {matmul_avx512, matmul_at_b_avx512, add_avx512,
                            sub_avx512,    mul_avx512,         scale_avx512,
                            axpy_avx512,   adam_avx512,        "avx512"};
    return ops;
}

}  // namespace fq::kern

#endif  // FREQFLOW_X86_KERNELS
