#include "freqflow/sampler.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "freqflow/kernels.hpp"
#include "freqflow/rng.hpp"

namespace fq::sample {

using diff::Tape;
using diff::Tensor;

Tensor draw_start(const policy::Dims& dims, uint64_t seed) {
    rng::Prng prng(seed);
    Tensor a0({dims.horizon, dims.action_dim});
    for (size_t i = 0; i < a0.numel(); ++i) a0.mutable_data()[i] = prng.normal();
    return a0;
}

namespace {

// One Euler step on a B x (H*D) state buffer; the field is evaluated on a
// scratch tape so long integrations stay memory-bounded.
Tensor euler_step(const policy::BatchField& field, const Tensor& state,
                  const Tensor& obs, double t, double dt, Tensor* velocity_out) {
    Tape tape;
    Tensor v = field(tape, tape.constant(state), tape.constant(obs),
                     std::vector<double>(state.dim(0), t));
    if (v.shape() != state.shape()) {
        throw std::invalid_argument("euler_step: field returned " + v.shape_str() +
                                    " for state " + state.shape_str());
    }
    Tensor next(state.shape());
    std::memcpy(next.mutable_data(), state.data(), state.numel() * sizeof(double));
    kern::active().axpy(next.mutable_data(), v.data(), dt, state.numel());
    if (velocity_out) *velocity_out = Tape::detach(v);
    return next;
}

}  // namespace

SampleTrace euler_sample(const policy::BatchField& field, const policy::Dims& dims,
                         const std::vector<double>& obs, size_t n_steps,
                         uint64_t seed) {
    if (n_steps < 1) throw std::invalid_argument("euler_sample: n_steps must be >= 1");
    if (obs.size() != dims.obs_dim) {
        throw std::invalid_argument("euler_sample: obs length mismatch");
    }
    const size_t HD = dims.chunk_numel();
    const double dt = 1.0 / double(n_steps);
    Tensor obs_row({1, dims.obs_dim}, obs);

    SampleTrace trace;
    trace.n_steps = n_steps;
    trace.times.reserve(n_steps + 1);
    trace.states.reserve(n_steps + 1);
    trace.velocities.reserve(n_steps);

    Tensor a0 = draw_start(dims, seed);
    Tensor state({1, HD});
    std::memcpy(state.mutable_data(), a0.data(), HD * sizeof(double));

    auto chunk_of = [&](const Tensor& flat) {
        Tensor c({dims.horizon, dims.action_dim});
        std::memcpy(c.mutable_data(), flat.data(), HD * sizeof(double));
        return c;
    };

    trace.times.push_back(0.0);
    trace.states.push_back(a0);
    for (size_t i = 0; i < n_steps; ++i) {
        const double t = double(i) / double(n_steps);
        Tensor v;
        state = euler_step(field, state, obs_row, t, dt, &v);
        trace.velocities.push_back(chunk_of(v));
        trace.times.push_back(double(i + 1) / double(n_steps));
        trace.states.push_back(chunk_of(state));
    }
    return trace;
}

SampleTrace euler_sample(const policy::VelocityModel& model,
                         const std::vector<double>& obs, size_t n_steps,
                         uint64_t seed) {
    return euler_sample(policy::model_field(model), model.dims, obs, n_steps, seed);
}

Tensor one_step(const policy::BatchField& field, const policy::Dims& dims,
                const std::vector<double>& obs, uint64_t seed) {
    return euler_sample(field, dims, obs, 1, seed).final();
}

Tensor one_step(const policy::VelocityModel& model, const std::vector<double>& obs,
                uint64_t seed) {
    return one_step(policy::model_field(model), model.dims, obs, seed);
}

Tensor euler_batch(const policy::BatchField& field, const policy::Dims& dims,
                   const Tensor& obs, size_t n_steps,
                   const std::vector<uint64_t>& seeds) {
    if (n_steps < 1) throw std::invalid_argument("euler_batch: n_steps must be >= 1");
    if (obs.ndim() != 2 || obs.dim(1) != dims.obs_dim) {
        throw std::invalid_argument("euler_batch: obs must be B x O, got " +
                                    obs.shape_str());
    }
    const size_t B = obs.dim(0);
    if (seeds.size() != B) {
        throw std::invalid_argument("euler_batch: need one seed per row");
    }
    const size_t HD = dims.chunk_numel();
    const double dt = 1.0 / double(n_steps);

    Tensor state({B, HD});
    for (size_t b = 0; b < B; ++b) {
        const Tensor a0 = draw_start(dims, seeds[b]);
        std::memcpy(state.mutable_data() + b * HD, a0.data(), HD * sizeof(double));
    }
    for (size_t i = 0; i < n_steps; ++i) {
        const double t = double(i) / double(n_steps);
        state = euler_step(field, state, obs, t, dt, nullptr);
    }
    return state;
}

double straightness(const SampleTrace& trace) {
    if (trace.n_steps < 1 || trace.states.size() != trace.n_steps + 1 ||
        trace.velocities.size() != trace.n_steps) {
        throw std::invalid_argument("straightness: malformed trace");
    }
    if (trace.n_steps == 1) return 0.0;  // a single segment is its own chord

    const Tensor& first = trace.initial();
    const Tensor& last = trace.final();
    const size_t n = first.numel();
    std::vector<double> chord(n);
    for (size_t i = 0; i < n; ++i) chord[i] = last.at(i) - first.at(i);

    double chord_norm = 0.0;
    for (size_t i = 0; i < n; ++i) chord_norm = std::fma(chord[i], chord[i], chord_norm);
    chord_norm = std::sqrt(chord_norm);
    const double denom = std::max(chord_norm, 1e-8);

    double acc = 0.0;
    for (const Tensor& v : trace.velocities) {
        double d2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double e = v.at(i) - chord[i];
            d2 = std::fma(e, e, d2);
        }
        acc += std::sqrt(d2) / denom;
    }
    return acc / double(trace.n_steps);
}

}  // namespace fq::sample
