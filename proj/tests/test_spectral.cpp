#include <doctest.h>

#include <cmath>
#include <vector>

#include "freqflow/rng.hpp"
#include "freqflow/spectral.hpp"
#include "freqflow/tensor.hpp"

using fq::diff::Tape;
using fq::diff::Tensor;
using namespace fq::spectral;

namespace {

// Independent oracle: direct summation of the defining series, no shared code
// with the cached-matrix production path.
std::vector<double> dct2_direct(const std::vector<double>& x) {
    const size_t H = x.size();
    std::vector<double> f(H, 0.0);
    for (size_t k = 0; k < H; ++k) {
        double s = 0.0;
        for (size_t n = 0; n < H; ++n) {
            s += x[n] * std::cos(M_PI / double(H) * (double(n) + 0.5) * double(k));
        }
        f[k] = s;
    }
    return f;
}

std::vector<double> random_signal(fq::rng::Prng& rng, size_t H) {
    std::vector<double> x(H);
    for (auto& v : x) v = rng.normal();
    return x;
}

Tensor random_chunk(fq::rng::Prng& rng, size_t H, size_t D) {
    Tensor t({H, D});
    for (size_t i = 0; i < t.numel(); ++i) t.mutable_data()[i] = rng.normal();
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("spectral");

TEST_CASE("dct2 matches direct summation for H in 1..64") {
    fq::rng::Prng rng(211);
    for (size_t H = 1; H <= 64; ++H) {
        const auto x = random_signal(rng, H);
        const auto got = dct2(x);
        const auto want = dct2_direct(x);
        for (size_t k = 0; k < H; ++k) {
            CHECK(std::abs(got[k] - want[k]) < 1e-9);
        }
    }
}

TEST_CASE("unit impulse at n=0, H=4 has the closed-form spectrum") {
    const auto f = dct2({1.0, 0.0, 0.0, 0.0});
    // cos(pi k / 8 * 1) with (n + 1/2) = 1/2: k=0..3
    REQUIRE(f.size() == 4);
    CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(std::cos(M_PI / 8.0)).epsilon(1e-12));
    CHECK(f[2] == doctest::Approx(std::cos(M_PI / 4.0)).epsilon(1e-12));
    CHECK(f[3] == doctest::Approx(std::cos(3.0 * M_PI / 8.0)).epsilon(1e-12));
    CHECK(f[1] == doctest::Approx(0.9238795).epsilon(1e-6));
    CHECK(f[2] == doctest::Approx(0.7071068).epsilon(1e-6));
    CHECK(f[3] == doctest::Approx(0.3826834).epsilon(1e-6));
}

TEST_CASE("constant signal concentrates all energy in k=0") {
    const size_t H = 16;
    const auto f = dct2(std::vector<double>(H, 2.5));
    CHECK(f[0] == doctest::Approx(2.5 * double(H)).epsilon(1e-12));
    for (size_t k = 1; k < H; ++k) CHECK(std::abs(f[k]) < 1e-10);
}

TEST_CASE("idct2 round trip is exact to 1e-10") {
    fq::rng::Prng rng(223);
    for (size_t H : {1u, 2u, 3u, 8u, 16u, 33u, 64u}) {
        const auto x = random_signal(rng, H);
        const auto back = idct2(dct2(x));
        for (size_t n = 0; n < H; ++n) CHECK(std::abs(back[n] - x[n]) < 1e-10);
    }
}

TEST_CASE("transform is linear to 1e-12") {
    fq::rng::Prng rng(227);
    const size_t H = 24;
    const auto x = random_signal(rng, H);
    const auto y = random_signal(rng, H);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(H);
    for (size_t i = 0; i < H; ++i) mix[i] = a * x[i] + b * y[i];
    const auto fm = dct2(mix);
    const auto fx = dct2(x);
    const auto fy = dct2(y);
    for (size_t k = 0; k < H; ++k) {
        CHECK(std::abs(fm[k] - (a * fx[k] + b * fy[k])) < 1e-12);
    }
}

TEST_CASE("coefficient energy is bounded by H times signal energy") {
    fq::rng::Prng rng(229);
    for (size_t H : {2u, 8u, 32u}) {
        const auto x = random_signal(rng, H);
        const auto f = dct2(x);
        double ex = 0.0, ef = 0.0;
        for (double v : x) ex += v * v;
        for (double v : f) ef += v * v;
        CHECK(ef <= double(H) * ex * (1.0 + 1e-12));
    }
}

TEST_CASE("dct2_chunk transforms each dimension independently") {
    fq::rng::Prng rng(233);
    const size_t H = 8, D = 3;
    Tensor chunk = random_chunk(rng, H, D);
    Tensor f = dct2_chunk_value(chunk);
    for (size_t d = 0; d < D; ++d) {
        std::vector<double> col(H);
        for (size_t h = 0; h < H; ++h) col[h] = chunk.at(h, d);
        const auto want = dct2_direct(col);
        for (size_t k = 0; k < H; ++k) {
            CHECK(f.at(k, d) == doctest::Approx(want[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("dct2_rows agrees with per-chunk transforms on a flattened batch") {
    fq::rng::Prng rng(239);
    const size_t B = 5, H = 8, D = 2;
    Tensor batch({B, H * D});
    for (size_t i = 0; i < batch.numel(); ++i) batch.mutable_data()[i] = rng.normal();

    Tape tape;
    Tensor fb = dct2_rows(tape, tape.constant(batch), H, D);

    for (size_t b = 0; b < B; ++b) {
        Tensor chunk({H, D});
        for (size_t i = 0; i < H * D; ++i) chunk.mutable_data()[i] = batch.at(b, i);
        Tensor fc = dct2_chunk_value(chunk);
        for (size_t i = 0; i < H * D; ++i) {
            CHECK(fb.at(b, i) == doctest::Approx(fc.at(i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("dct2_chunk is differentiable with the transpose adjoint") {
    fq::rng::Prng rng(241);
    const Tensor weights = random_chunk(rng, 6, 2);
    auto f = [&](Tape& t, const Tensor& x) {
        return t.sum(t.mul(dct2_chunk(t, x), t.constant(weights)));
    };
    CHECK(fq::diff::grad_check(f, random_chunk(rng, 6, 2)) < 1e-4);
}

TEST_CASE("default band cutoff is ceil(H/4)") {
    CHECK(default_band_cutoff(16) == 4);
    CHECK(default_band_cutoff(15) == 4);
    CHECK(default_band_cutoff(17) == 5);
    CHECK(default_band_cutoff(32) == 8);
    CHECK(default_band_cutoff(2) == 1);
}

TEST_CASE("sim is zero for identical inputs in every mode") {
    fq::rng::Prng rng(251);
    const Tensor v = random_chunk(rng, 8, 2);
    for (SimMode mode : {SimMode::none, SimMode::spatial, SimMode::freq_low,
                         SimMode::freq_high, SimMode::freq_full, SimMode::freq_adaptive}) {
        Tape tape;
        SimSpec spec;
        spec.mode = mode;
        Tensor s = sim(tape, tape.constant(v), tape.constant(v), spec);
        CAPTURE(sim_mode_name(mode));
        CHECK(s.item() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("low and high band penalties split the full penalty: lo^2 + hi^2 == full^2") {
    fq::rng::Prng rng(257);
    const size_t H = 16, D = 2;
    const Tensor a = random_chunk(rng, H, D);
    const Tensor b = random_chunk(rng, H, D);

    auto eval = [&](SimMode mode) {
        Tape tape;
        SimSpec spec;
        spec.mode = mode;
        return sim(tape, tape.constant(a), tape.constant(b), spec).item();
    };
    const double lo = eval(SimMode::freq_low);
    const double hi = eval(SimMode::freq_high);
    const double full = eval(SimMode::freq_full);
    CHECK(lo * lo + hi * hi == doctest::Approx(full * full).epsilon(1e-12));
}

TEST_CASE("freq_full sim is invariant to negating both inputs") {
    fq::rng::Prng rng(263);
    const Tensor a = random_chunk(rng, 8, 2);
    const Tensor b = random_chunk(rng, 8, 2);
    Tensor na({8, 2}), nb({8, 2});
    for (size_t i = 0; i < a.numel(); ++i) {
        na.mutable_data()[i] = -a.at(i);
        nb.mutable_data()[i] = -b.at(i);
    }
    SimSpec spec;
    spec.mode = SimMode::freq_full;
    Tape t1, t2;
    const double s1 = sim(t1, t1.constant(a), t1.constant(b), spec).item();
    const double s2 = sim(t2, t2.constant(na), t2.constant(nb), spec).item();
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("adaptive weights recover the worked H=2 example") {
    // Coefficient difference norms per k: [0, 1.0986] -> softmax ~ [0.25, 0.75],
    // weighted penalty ~ 0.8240.
    const size_t H = 2, D = 1;
    Tensor fr({1, 2}, {0.0, 1.0986});
    Tensor fs({1, 2}, {0.0, 0.0});
    Tensor w = adaptive_weights(fr, fs, H, D);
    CHECK(w.at(0, 0) == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(w.at(0, 1) == doctest::Approx(0.75).epsilon(1e-4));
    const double want_sim = w.at(0, 0) * 0.0 + w.at(0, 1) * 1.0986;
    CHECK(want_sim == doctest::Approx(0.8240).epsilon(1e-3));

    // And sim(freq_adaptive) on velocities whose coefficient difference is
    // exactly [0, 1.0986]: invert the transform to build them.
    const auto vr = idct2({0.0, 1.0986});
    Tensor vrt({H, D}, vr);
    Tensor zero({H, D}, {0.0, 0.0});
    Tape tape;
    SimSpec spec;
    spec.mode = SimMode::freq_adaptive;
    const double s = sim(tape, tape.constant(vrt), tape.constant(zero), spec).item();
    CHECK(s == doctest::Approx(0.8240).epsilon(1e-3));
}

TEST_CASE("adaptive weights sum to one per sample and are non-negative") {
    fq::rng::Prng rng(269);
    const size_t B = 4, H = 8, D = 2;
    Tensor fr({B, H * D}), fs({B, H * D});
    for (size_t i = 0; i < fr.numel(); ++i) {
        fr.mutable_data()[i] = rng.normal();
        fs.mutable_data()[i] = rng.normal();
    }
    Tensor w = adaptive_weights(fr, fs, H, D);
    REQUIRE(w.shape() == std::vector<size_t>{B, H});
    for (size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (size_t k = 0; k < H; ++k) {
            CHECK(w.at(b, k) >= 0.0);
            s += w.at(b, k);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_FALSE(w.recorded());  // detached by construction
}

TEST_CASE("every differentiable sim mode passes grad_check through both inputs") {
    fq::rng::Prng rng(271);
    const size_t H = 4, D = 2;
    const Tensor other = random_chunk(rng, H, D);
    for (SimMode mode : {SimMode::spatial, SimMode::freq_low, SimMode::freq_high,
                         SimMode::freq_full, SimMode::freq_adaptive}) {
        SimSpec spec;
        spec.mode = mode;
        auto f = [&](Tape& t, const Tensor& x) {
            return t.reshape(sim(t, x, t.constant(other), spec), {1});
        };
        CAPTURE(sim_mode_name(mode));
        CHECK(fq::diff::grad_check(f, random_chunk(rng, H, D)) < 1e-4);
    }
}

TEST_CASE("banded modes reject invalid cutoffs") {
    fq::rng::Prng rng(277);
    const Tensor a = random_chunk(rng, 8, 1);
    Tape tape;
    SimSpec spec;
    spec.mode = SimMode::freq_low;
    spec.band_cutoff = 8;  // leaves the high band empty
    CHECK_THROWS_AS(sim(tape, tape.constant(a), tape.constant(a), spec),
                    std::invalid_argument);
    spec.band_cutoff = 9;
    CHECK_THROWS_AS(sim(tape, tape.constant(a), tape.constant(a), spec),
                    std::invalid_argument);
}

TEST_CASE("sim rejects mismatched shapes") {
    fq::rng::Prng rng(281);
    Tape tape;
    SimSpec spec;
    spec.mode = SimMode::spatial;
    CHECK_THROWS_AS(sim(tape, tape.constant(random_chunk(rng, 4, 2)),
                        tape.constant(random_chunk(rng, 4, 3)), spec),
                    std::invalid_argument);
}

TEST_SUITE_END();
