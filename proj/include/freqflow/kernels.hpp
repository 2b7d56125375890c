#pragma once

#include <cstddef>

// Low-level dense kernels. Every operation has a scalar reference
// implementation and, on x86-64, AVX2/AVX-512 variants selected at runtime.
//
// The SIMD variants are bit-exact against the scalar references: each output
// element is produced by the same sequence of correctly-rounded operations in
// the same order (fused multiply-adds via std::fma in the scalar path and
// vfmadd in the vector paths, k-ascending accumulation in the matrix
// products). Backend selection therefore never changes results, only speed.

namespace fq::kern {

enum class Backend { scalar, avx2, avx512 };

struct Ops {
    // C (m x n) = A (m x k) * B (k x n); adds into C when accumulate is set.
    void (*matmul)(double* c, const double* a, const double* b, size_t m,
                   size_t k, size_t n, bool accumulate);
    // C (m x n) = A^T * B with A stored (k x m), B (k x n).
    void (*matmul_at_b)(double* c, const double* a, const double* b, size_t m,
                        size_t k, size_t n, bool accumulate);
    void (*add)(double* out, const double* a, const double* b, size_t n);
    void (*sub)(double* out, const double* a, const double* b, size_t n);
    void (*mul)(double* out, const double* a, const double* b, size_t n);
    void (*scale)(double* out, const double* a, double s, size_t n);
    // y += s * x
    void (*axpy)(double* y, const double* x, double s, size_t n);
    // Adam step, elementwise in place; c1 = 1/(1-b1^t), c2 = 1/(1-b2^t).
    void (*adam)(double* theta, double* m, double* v, const double* g,
                 size_t n, double lr, double b1, double b2, double eps,
                 double c1, double c2);
    const char* name;
};

// Best backend this CPU supports.
Backend detect();
bool supported(Backend b);

// Active table. Defaults to detect(); the FREQFLOW_KERNELS environment
// variable (scalar|avx2|avx512) overrides, and select() forces a choice
// (used by the equivalence tests).
const Ops& active();
void select(Backend b);
const Ops& table(Backend b);
const char* backend_name(Backend b);

}  // namespace fq::kern
