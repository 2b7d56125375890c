#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <tuple>
#include <vector>

#include "freqflow/kernels.hpp"
#include "freqflow/rng.hpp"

using fq::kern::Backend;
using fq::kern::Ops;

namespace {

std::vector<double> random_vec(fq::rng::Prng& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Naive triple loop with plain adds; independent of the reference kernel's
// fma formulation, so comparison is at tolerance rather than bitwise.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, size_t m,
                                 size_t k, size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (size_t i = 0; i < m; ++i)
        for (size_t p = 0; p < k; ++p)
            for (size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

std::vector<Backend> available_backends() {
    std::vector<Backend> out{Backend::scalar};
    if (fq::kern::supported(Backend::avx2)) out.push_back(Backend::avx2);
    if (fq::kern::supported(Backend::avx512)) out.push_back(Backend::avx512);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("scalar matmul matches a naive triple loop") {
    fq::rng::Prng rng(7);
    const Ops& ops = fq::kern::table(Backend::scalar);
    for (auto [m, k, n] : {std::tuple<size_t, size_t, size_t>{3, 5, 4},
                           {16, 16, 16},
                           {7, 13, 9},
                           {1, 1, 1}}) {
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        std::vector<double> c(m * n);
        ops.matmul(c.data(), a.data(), b.data(), m, k, n, false);
        auto ref = naive_matmul(a, b, m, k, n);
        for (size_t i = 0; i < c.size(); ++i)
            CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul_at_b agrees with matmul on explicit transpose") {
    fq::rng::Prng rng(11);
    const Ops& ops = fq::kern::table(Backend::scalar);
    const size_t m = 6, k = 9, n = 5;
    auto a = random_vec(rng, k * m);  // stored k x m
    auto b = random_vec(rng, k * n);
    std::vector<double> at(m * k);
    for (size_t p = 0; p < k; ++p)
        for (size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
    std::vector<double> c1(m * n), c2(m * n);
    ops.matmul_at_b(c1.data(), a.data(), b.data(), m, k, n, false);
    ops.matmul(c2.data(), at.data(), b.data(), m, k, n, false);
    CHECK(bit_equal(c1, c2));  // same accumulation order -> identical bits
}

TEST_CASE("SIMD backends are bit-exact against the scalar reference") {
    const auto backends = available_backends();
    REQUIRE(!backends.empty());
    fq::rng::Prng rng(23);

    // Sizes chosen to hit the wide tiles, the narrow tiles and scalar tails.
    const std::vector<std::tuple<size_t, size_t, size_t>> sizes = {
        {1, 1, 1},   {2, 3, 4},    {3, 7, 17},  {5, 12, 33},
        {8, 20, 64}, {13, 31, 37}, {2, 128, 96}, {17, 66, 19}};

    for (auto [m, k, n] : sizes) {
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        auto at = random_vec(rng, k * m);
        auto init = random_vec(rng, m * n);

        for (bool acc : {false, true}) {
            std::vector<double> ref = init;
            fq::kern::table(Backend::scalar)
                .matmul(ref.data(), a.data(), b.data(), m, k, n, acc);
            std::vector<double> ref_t = init;
            fq::kern::table(Backend::scalar)
                .matmul_at_b(ref_t.data(), at.data(), b.data(), m, k, n, acc);

            for (Backend be : backends) {
                std::vector<double> c = init;
                fq::kern::table(be).matmul(c.data(), a.data(), b.data(), m, k, n, acc);
                CAPTURE(fq::kern::backend_name(be));
                CHECK(bit_equal(c, ref));

                std::vector<double> ct = init;
                fq::kern::table(be).matmul_at_b(ct.data(), at.data(), b.data(), m, k,
                                                n, acc);
                CHECK(bit_equal(ct, ref_t));
            }
        }
    }
}

TEST_CASE("elementwise kernels are bit-exact across backends") {
    const auto backends = available_backends();
    fq::rng::Prng rng(31);
    for (size_t n : {1u, 4u, 7u, 64u, 129u, 1000u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        const double s = rng.normal();

        std::vector<double> radd(n), rsub(n), rmul(n), rscale(n), raxpy = b;
        const Ops& sc = fq::kern::table(Backend::scalar);
        sc.add(radd.data(), a.data(), b.data(), n);
        sc.sub(rsub.data(), a.data(), b.data(), n);
        sc.mul(rmul.data(), a.data(), b.data(), n);
        sc.scale(rscale.data(), a.data(), s, n);
        sc.axpy(raxpy.data(), a.data(), s, n);

        for (Backend be : backends) {
            const Ops& ops = fq::kern::table(be);
            std::vector<double> o(n), y = b;
            ops.add(o.data(), a.data(), b.data(), n);
            CHECK(bit_equal(o, radd));
            ops.sub(o.data(), a.data(), b.data(), n);
            CHECK(bit_equal(o, rsub));
            ops.mul(o.data(), a.data(), b.data(), n);
            CHECK(bit_equal(o, rmul));
            ops.scale(o.data(), a.data(), s, n);
            CHECK(bit_equal(o, rscale));
            ops.axpy(y.data(), a.data(), s, n);
            CHECK(bit_equal(y, raxpy));
        }
    }
}

TEST_CASE("adam kernel is bit-exact across backends") {
    const auto backends = available_backends();
    fq::rng::Prng rng(41);
    for (size_t n : {1u, 5u, 8u, 67u, 256u}) {
        auto theta0 = random_vec(rng, n);
        auto m0 = random_vec(rng, n, 0.1);
        std::vector<double> v0(n);
        for (auto& x : v0) x = rng.uniform() + 1e-4;  // second moment >= 0
        auto g = random_vec(rng, n);

        const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 / (1.0 - b1), c2 = 1.0 / (1.0 - b2);

        std::vector<double> tr = theta0, mr = m0, vr = v0;
        fq::kern::table(Backend::scalar)
            .adam(tr.data(), mr.data(), vr.data(), g.data(), n, lr, b1, b2, eps, c1, c2);

        for (Backend be : backends) {
            std::vector<double> t = theta0, m = m0, v = v0;
            fq::kern::table(be).adam(t.data(), m.data(), v.data(), g.data(), n, lr,
                                     b1, b2, eps, c1, c2);
            CAPTURE(fq::kern::backend_name(be));
            CHECK(bit_equal(t, tr));
            CHECK(bit_equal(m, mr));
            CHECK(bit_equal(v, vr));
        }
    }
}

TEST_CASE("runtime selection rejects unsupported backends and honours select()") {
    CHECK(fq::kern::supported(Backend::scalar));
    const Backend best = fq::kern::detect();
    CHECK(fq::kern::supported(best));

    fq::kern::select(Backend::scalar);
    CHECK(std::string(fq::kern::active().name) == "scalar");
    fq::kern::select(best);
    CHECK(std::string(fq::kern::active().name) == fq::kern::backend_name(best));
}

TEST_SUITE_END();
