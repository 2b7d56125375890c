#include "freqflow/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "freqflow/kernels.hpp"

namespace fq::spectral {

using diff::Tape;
using diff::Tensor;

namespace {

// Cached H x H analysis/synthesis matrices and their h-major Kronecker
// expansions for batched use. Guarded so concurrent tapes can share them.
class MatrixCache {
public:
    // C[k][n] = cos((pi/H) (n + 1/2) k)
    std::shared_ptr<const std::vector<double>> analysis(size_t H) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& slot = analysis_[H];
        if (!slot) {
            auto m = std::make_shared<std::vector<double>>(H * H);
            for (size_t k = 0; k < H; ++k)
                for (size_t n = 0; n < H; ++n)
                    (*m)[k * H + n] =
                        std::cos(M_PI / static_cast<double>(H) *
                                 (static_cast<double>(n) + 0.5) * static_cast<double>(k));
            slot = std::move(m);
        }
        return slot;
    }

    // Inverse: x(n) = F_0/H + (2/H) sum_{k>=1} F_k cos((pi/H) (n + 1/2) k)
    std::shared_ptr<const std::vector<double>> synthesis(size_t H) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& slot = synthesis_[H];
        if (!slot) {
            auto m = std::make_shared<std::vector<double>>(H * H);
            for (size_t n = 0; n < H; ++n)
                for (size_t k = 0; k < H; ++k) {
                    const double c =
                        std::cos(M_PI / static_cast<double>(H) *
                                 (static_cast<double>(n) + 0.5) * static_cast<double>(k));
                    (*m)[n * H + k] = (k == 0 ? 1.0 : 2.0) / static_cast<double>(H) * c;
                }
            slot = std::move(m);
        }
        return slot;
    }

    // Right-multiplication matrix for h-major flattened batches:
    // M[(n*D+d)][(k*D+e)] = C[k][n] * (d == e).
    std::shared_ptr<const std::vector<double>> kron(size_t H, size_t D) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& slot = kron_[{H, D}];
        if (!slot) {
            auto cm = analysis_unlocked(H);
            const size_t hd = H * D;
            auto m = std::make_shared<std::vector<double>>(hd * hd, 0.0);
            for (size_t n = 0; n < H; ++n)
                for (size_t k = 0; k < H; ++k)
                    for (size_t d = 0; d < D; ++d)
                        (*m)[(n * D + d) * hd + (k * D + d)] = (*cm)[k * H + n];
            slot = std::move(m);
        }
        return slot;
    }

    // Block sum matrix S[(k*D+d)][k] = 1, collapsing D dims per coefficient.
    std::shared_ptr<const std::vector<double>> blocksum(size_t H, size_t D) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& slot = blocksum_[{H, D}];
        if (!slot) {
            auto m = std::make_shared<std::vector<double>>(H * D * H, 0.0);
            for (size_t k = 0; k < H; ++k)
                for (size_t d = 0; d < D; ++d) (*m)[(k * D + d) * H + k] = 1.0;
            slot = std::move(m);
        }
        return slot;
    }

private:
    std::shared_ptr<const std::vector<double>> analysis_unlocked(size_t H) {
        auto& slot = analysis_[H];
        if (!slot) {
            auto m = std::make_shared<std::vector<double>>(H * H);
            for (size_t k = 0; k < H; ++k)
                for (size_t n = 0; n < H; ++n)
                    (*m)[k * H + n] =
                        std::cos(M_PI / static_cast<double>(H) *
                                 (static_cast<double>(n) + 0.5) * static_cast<double>(k));
            slot = std::move(m);
        }
        return slot;
    }

    std::mutex mu_;
    std::map<size_t, std::shared_ptr<const std::vector<double>>> analysis_;
    std::map<size_t, std::shared_ptr<const std::vector<double>>> synthesis_;
    std::map<std::pair<size_t, size_t>, std::shared_ptr<const std::vector<double>>> kron_;
    std::map<std::pair<size_t, size_t>, std::shared_ptr<const std::vector<double>>> blocksum_;
};

MatrixCache& cache() {
    static MatrixCache c;
    return c;
}

Tensor wrap(std::vector<size_t> shape, std::shared_ptr<const std::vector<double>> data) {
    // Cached matrices are immutable; copying into a Tensor keeps the Tensor
    // contract simple at a small, amortised cost.
    return Tensor(std::move(shape), *data);
}

size_t resolve_cutoff(const SimSpec& spec, size_t H) {
    const size_t k = spec.band_cutoff == 0 ? default_band_cutoff(H) : spec.band_cutoff;
    if (k < 1 || k >= H) {
        throw std::invalid_argument(
            "sim: band cutoff " + std::to_string(k) + " invalid for horizon " +
            std::to_string(H) + " (need 1 <= k* <= H-1)");
    }
    return k;
}

// Per-sample norm of each row -> (B), or squared norm when requested.
Tensor row_penalty(Tape& tape, const Tensor& rows, bool squared) {
    if (!squared) return tape.l2norm_rows(rows);
    const size_t cols = rows.dim(1);
    Tensor ones({cols, 1}, std::vector<double>(cols, 1.0));
    Tensor s = tape.matmul(tape.square(rows), tape.constant(ones));
    return tape.reshape(s, {rows.dim(0)});
}

}  // namespace

SimMode parse_sim_mode(const std::string& name) {
    if (name == "none") return SimMode::none;
    if (name == "spatial") return SimMode::spatial;
    if (name == "freq_low") return SimMode::freq_low;
    if (name == "freq_high") return SimMode::freq_high;
    if (name == "freq_full") return SimMode::freq_full;
    if (name == "freq_adaptive") return SimMode::freq_adaptive;
    throw std::invalid_argument("unknown sim mode '" + name + "'");
}

const char* sim_mode_name(SimMode mode) {
    switch (mode) {
        case SimMode::none: return "none";
        case SimMode::spatial: return "spatial";
        case SimMode::freq_low: return "freq_low";
        case SimMode::freq_high: return "freq_high";
        case SimMode::freq_full: return "freq_full";
        case SimMode::freq_adaptive: return "freq_adaptive";
    }
    return "?";
}

size_t default_band_cutoff(size_t H) { return (H + 3) / 4; }

std::vector<double> dct2(const std::vector<double>& x) {
    const size_t H = x.size();
    if (H == 0) throw std::invalid_argument("dct2: empty signal");
    auto cm = cache().analysis(H);
    std::vector<double> f(H);
    kern::active().matmul(f.data(), cm->data(), x.data(), H, H, 1, false);
    return f;
}

std::vector<double> idct2(const std::vector<double>& f) {
    const size_t H = f.size();
    if (H == 0) throw std::invalid_argument("idct2: empty spectrum");
    auto sm = cache().synthesis(H);
    std::vector<double> x(H);
    kern::active().matmul(x.data(), sm->data(), f.data(), H, H, 1, false);
    return x;
}

Tensor dct2_chunk(Tape& tape, const Tensor& chunk) {
    if (chunk.ndim() != 2) {
        throw std::invalid_argument("dct2_chunk: expected (H x D), got " +
                                    chunk.shape_str());
    }
    const size_t H = chunk.dim(0);
    Tensor cm = wrap({H, H}, cache().analysis(H));
    return tape.matmul(tape.constant(cm), chunk);
}

Tensor dct2_chunk_value(const Tensor& chunk) {
    Tape tape;
    return Tape::detach(dct2_chunk(tape, Tape::detach(chunk)));
}

Tensor dct2_rows(Tape& tape, const Tensor& batch, size_t H, size_t D) {
    if (batch.ndim() != 2 || batch.dim(1) != H * D) {
        throw std::invalid_argument("dct2_rows: expected (B x " +
                                    std::to_string(H * D) + "), got " +
                                    batch.shape_str());
    }
    Tensor m = wrap({H * D, H * D}, cache().kron(H, D));
    return tape.matmul(batch, tape.constant(m));
}

Tensor adaptive_weights(const Tensor& freq_r, const Tensor& freq_s, size_t H,
                        size_t D) {
    if (freq_r.shape() != freq_s.shape() || freq_r.ndim() != 2 ||
        freq_r.dim(1) != H * D) {
        throw std::invalid_argument("adaptive_weights: bad coefficient shapes " +
                                    freq_r.shape_str() + " vs " + freq_s.shape_str());
    }
    const size_t B = freq_r.dim(0);
    Tensor norms({B, H});
    double* out = norms.mutable_data();
    for (size_t b = 0; b < B; ++b) {
        const double* r = freq_r.data() + b * H * D;
        const double* s = freq_s.data() + b * H * D;
        for (size_t k = 0; k < H; ++k) {
            double acc = 0.0;
            for (size_t d = 0; d < D; ++d) {
                const double diff = r[k * D + d] - s[k * D + d];
                acc = std::fma(diff, diff, acc);
            }
            out[b * H + k] = std::sqrt(acc);
        }
    }
    Tape scratch;
    return Tape::detach(scratch.softmax_rows(scratch.constant(norms)));
}

Tensor sim_batch(Tape& tape, const Tensor& vr, const Tensor& vs, size_t H,
                 size_t D, const SimSpec& spec) {
    if (vr.shape() != vs.shape() || vr.ndim() != 2 || vr.dim(1) != H * D) {
        throw std::invalid_argument("sim: shape mismatch (" + vr.shape_str() +
                                    " vs " + vs.shape_str() + ", H*D = " +
                                    std::to_string(H * D) + ")");
    }
    const size_t B = vr.dim(0);

    if (spec.mode == SimMode::none) {
        return tape.constant(Tensor::zeros({B}));
    }

    Tensor diff = tape.sub(vr, vs);
    if (spec.mode == SimMode::spatial) {
        return row_penalty(tape, diff, spec.squared);
    }

    Tensor fd = dct2_rows(tape, diff, H, D);

    switch (spec.mode) {
        case SimMode::freq_full:
            return row_penalty(tape, fd, spec.squared);

        case SimMode::freq_low: {
            const size_t k = resolve_cutoff(spec, H);
            return row_penalty(tape, tape.slice_last(fd, 0, k * D), spec.squared);
        }

        case SimMode::freq_high: {
            const size_t k = resolve_cutoff(spec, H);
            return row_penalty(tape, tape.slice_last(fd, k * D, (H - k) * D),
                               spec.squared);
        }

        case SimMode::freq_adaptive: {
            // Per-coefficient norms (B x H), then a detached softmax weighting.
            // By linearity F(vr) - F(vs) = F(vr - vs), so the weights can be
            // taken from the same coefficient differences.
            Tensor sq = tape.square(fd);
            Tensor bs = wrap({H * D, H}, cache().blocksum(H, D));
            Tensor per_k_sq = tape.matmul(sq, tape.constant(bs));
            Tensor per_k = spec.squared ? per_k_sq : tape.sqrt(per_k_sq);

            Tensor norms({B, H});
            for (size_t i = 0; i < B * H; ++i) {
                norms.mutable_data()[i] = std::sqrt(per_k_sq.at(i));
            }
            Tape scratch;
            Tensor w = Tape::detach(scratch.softmax_rows(scratch.constant(norms)));

            Tensor weighted = tape.mul(per_k, tape.constant(w));
            Tensor ones({H, 1}, std::vector<double>(H, 1.0));
            Tensor s = tape.matmul(weighted, tape.constant(ones));
            return tape.reshape(s, {B});
        }

        default:
            throw std::invalid_argument("sim: unsupported mode");
    }
}

Tensor sim(Tape& tape, const Tensor& vr, const Tensor& vs, const SimSpec& spec) {
    if (vr.ndim() != 2 || vr.shape() != vs.shape()) {
        throw std::invalid_argument("sim: expected matching (H x D) chunks, got " +
                                    vr.shape_str() + " vs " + vs.shape_str());
    }
    const size_t H = vr.dim(0), D = vr.dim(1);
    Tensor rb = tape.reshape(vr, {1, H * D});
    Tensor sb = tape.reshape(vs, {1, H * D});
    Tensor per_sample = sim_batch(tape, rb, sb, H, D, spec);
    return tape.reshape(per_sample, {1});
}

}  // namespace fq::spectral
