#include <cmath>

#include "freqflow/kernels.hpp"

// Scalar reference kernels. Accumulation order is the contract the SIMD
// variants must reproduce bit-for-bit: every output element accumulates over
// k in ascending order with one std::fma (single rounding) per term.

namespace fq::kern {
namespace {

void matmul_scalar(double* c, const double* a, const double* b, size_t m,
                   size_t k, size_t n, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (size_t p = 0; p < k; ++p) {
                s = std::fma(a[i * k + p], b[p * n + j], s);
            }
            c[i * n + j] = s;
        }
    }
}

void matmul_at_b_scalar(double* c, const double* a, const double* b, size_t m,
                        size_t k, size_t n, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (size_t p = 0; p < k; ++p) {
                s = std::fma(a[p * m + i], b[p * n + j], s);
            }
            c[i * n + j] = s;
        }
    }
}

void add_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double* out, const double* a, double s, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar(double* y, const double* x, double s, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = std::fma(s, x[i], y[i]);
}

void adam_scalar(double* theta, double* m, double* v, const double* g,
                 size_t n, double lr, double b1, double b2, double eps,
                 double c1, double c2) {
    const double omb1 = 1.0 - b1;
    const double omb2 = 1.0 - b2;
    for (size_t i = 0; i < n; ++i) {
        m[i] = std::fma(b1, m[i], omb1 * g[i]);
        v[i] = std::fma(b2, v[i], omb2 * (g[i] * g[i]));
        const double mhat = m[i] * c1;
        const double vhat = v[i] * c2;
        theta[i] -= (lr * mhat) / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Ops& scalar_table() {
    static const Ops ops = {matmul_scalar, matmul_at_b_scalar, add_scalar,
                            sub_scalar,    mul_scalar,         scale_scalar,
                            axpy_scalar,   adam_scalar,        "scalar"};
    return ops;
}

}  // namespace fq::kern
