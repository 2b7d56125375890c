#include "freqflow/flowloss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fq::loss {

using diff::Tape;
using diff::Tensor;

TimeTriple sample_time_triple(rng::Prng& rng) {
    for (;;) {
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
        if (a > b) std::swap(a, b);
        if (b > c) std::swap(b, c);
        if (a > b) std::swap(a, b);
        if (a < b && b < c) return {a, b, c};
    }
}

BatchDraws draw_batch(rng::Prng& rng, size_t batch, size_t chunk_numel,
                      TimeSampling sampling) {
    if (batch == 0) throw std::invalid_argument("draw_batch: empty batch");
    BatchDraws d;
    Tensor a0({batch, chunk_numel});
    for (size_t i = 0; i < a0.numel(); ++i) a0.mutable_data()[i] = rng.normal();
    d.a0 = std::move(a0);
    d.t.resize(batch);
    for (auto& t : d.t) {
        const double u = rng.uniform();
        t = sampling == TimeSampling::uniform ? u : std::pow(u, 1.0 / 1.5);
    }
    d.triple = sample_time_triple(rng);
    return d;
}

namespace {

void expect_pair(const char* who, const Tensor& a0, const Tensor& a1) {
    if (a0.shape() != a1.shape()) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                    a0.shape_str() + " vs " + a1.shape_str() + ")");
    }
}

void expect_time(const char* who, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument(std::string(who) + ": t must lie in [0,1]");
    }
}

void expect_triple(const TimeTriple& tr) {
    if (!(tr.r >= 0.0 && tr.r < tr.s && tr.s < tr.u && tr.u <= 1.0)) {
        throw std::invalid_argument("loss_freq: triple must satisfy 0 <= r < s < u <= 1");
    }
}

}  // namespace

Tensor interpolate(const Tensor& a0, const Tensor& a1, double t) {
    expect_pair("interpolate", a0, a1);
    expect_time("interpolate", t);
    Tensor out(a0.shape());
    for (size_t i = 0; i < out.numel(); ++i) {
        out.mutable_data()[i] = (1.0 - t) * a0.at(i) + t * a1.at(i);
    }
    return out;
}

Tensor interpolate(Tape& tape, const Tensor& a0, const Tensor& a1, double t) {
    expect_pair("interpolate", a0, a1);
    expect_time("interpolate", t);
    return tape.add(tape.scalar_mul(a0, 1.0 - t), tape.scalar_mul(a1, t));
}

Tensor fm_target(const Tensor& a0, const Tensor& a1) {
    expect_pair("fm_target", a0, a1);
    Tensor out(a0.shape());
    for (size_t i = 0; i < out.numel(); ++i) {
        out.mutable_data()[i] = a1.at(i) - a0.at(i);
    }
    return out;
}

Tensor loss_fm(Tape& tape, const policy::BatchField& field, const policy::Dims& dims,
               const Tensor& obs, const Tensor& a1, const Tensor& a0,
               const std::vector<double>& t) {
    expect_pair("loss_fm", a0, a1);
    if (a1.ndim() != 2 || a1.dim(1) != dims.chunk_numel() || a1.dim(0) == 0) {
        throw std::invalid_argument("loss_fm: actions must be non-empty B x H*D, got " +
                                    a1.shape_str());
    }
    const size_t B = a1.dim(0);
    if (t.size() != B) throw std::invalid_argument("loss_fm: need one t per sample");

    Tensor a_t({B, dims.chunk_numel()});
    for (size_t b = 0; b < B; ++b) {
        expect_time("loss_fm", t[b]);
        for (size_t i = 0; i < dims.chunk_numel(); ++i) {
            a_t.mutable_data()[b * dims.chunk_numel() + i] =
                (1.0 - t[b]) * a0.at(b, i) + t[b] * a1.at(b, i);
        }
    }

    Tensor v = field(tape, tape.constant(a_t), tape.constant(obs), t);
    Tensor diff = tape.sub(v, tape.constant(fm_target(a0, a1)));
    return tape.mean(tape.l2norm_rows(diff));
}

std::pair<Tensor, Tensor> loss_freq(Tape& tape, const policy::BatchField& field,
                                    const policy::Dims& dims, const Tensor& obs,
                                    const Tensor& a1, const Tensor& a0,
                                    const TimeTriple& triple,
                                    const spectral::SimSpec& sim, DetachPolicy detach) {
    expect_pair("loss_freq", a0, a1);
    if (a1.ndim() != 2 || a1.dim(0) == 0) {
        throw std::invalid_argument("loss_freq: actions must be non-empty B x H*D");
    }
    expect_triple(triple);
    const size_t B = a1.dim(0);

    if (sim.mode == spectral::SimMode::none) {
        Tensor z = Tensor::zeros({1});
        return {tape.constant(z), tape.constant(z)};
    }

    const Tensor a_r = interpolate(a0, a1, triple.r);
    const Tensor a_s = interpolate(a0, a1, triple.s);
    Tensor v_r = field(tape, tape.constant(a_r), tape.constant(obs),
                       std::vector<double>(B, triple.r));
    Tensor v_s = field(tape, tape.constant(a_s), tape.constant(obs),
                       std::vector<double>(B, triple.s));
    if (detach == DetachPolicy::detach_larger) v_s = Tape::detach(v_s);

    Tensor vel = tape.mean(spectral::sim_batch(tape, v_r, v_s, dims.horizon,
                                               dims.action_dim, sim));

    Tensor end_r = tape.add(tape.constant(a_r), tape.scalar_mul(v_r, triple.u - triple.r));
    Tensor end_s = tape.add(tape.constant(a_s), tape.scalar_mul(v_s, triple.u - triple.s));
    if (detach == DetachPolicy::detach_larger) end_s = Tape::detach(end_s);
    Tensor traj = tape.mean(spectral::sim_batch(tape, end_r, end_s, dims.horizon,
                                                dims.action_dim, sim));
    return {vel, traj};
}

Tensor loss_total(Tape& tape, const policy::BatchField& field, const policy::Dims& dims,
                  const Tensor& obs, const Tensor& a1, const BatchDraws& draws,
                  const LossConfig& cfg, LossBreakdown* out) {
    if (cfg.lambda < 0.0) throw std::invalid_argument("loss_total: lambda must be >= 0");
    Tensor fm = loss_fm(tape, field, dims, obs, a1, draws.a0, draws.t);
    auto [vel, traj] = loss_freq(tape, field, dims, obs, a1, draws.a0, draws.triple,
                                 cfg.sim, cfg.detach);
    Tensor total = tape.add(fm, tape.scalar_mul(tape.add(vel, traj), cfg.lambda));
    if (out) {
        out->fm = fm.item();
        out->freq_velocity = vel.item();
        out->freq_trajectory = traj.item();
        out->total = total.item();
    }
    return total;
}

}  // namespace fq::loss
