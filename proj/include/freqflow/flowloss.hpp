#pragma once

#include <utility>
#include <vector>

#include "freqflow/policynet.hpp"
#include "freqflow/rng.hpp"
#include "freqflow/spectral.hpp"
#include "freqflow/tensor.hpp"

// Training objectives: straight-path flow matching plus a two-term
// velocity/endpoint consistency constraint measured by a configurable
// similarity (spatial or frequency-domain).
namespace fq::loss {

// Strictly ordered times for the consistency terms: 0 <= r < s < u <= 1.
struct TimeTriple {
    double r = 0.0, s = 0.0, u = 0.0;
};

// Three independent uniforms, sorted ascending; ties are resampled.
TimeTriple sample_time_triple(rng::Prng& rng);

enum class DetachPolicy {
    detach_larger,  // the later-time branch is a frozen target (default)
    detach_none,    // optimize through both branches
};

enum class TimeSampling {
    uniform,     // t ~ U(0,1)
    beta_early,  // t ~ Beta(1.5, 1), biased toward later times
};

struct LossConfig {
    spectral::SimSpec sim;
    double lambda = 1.0;
    DetachPolicy detach = DetachPolicy::detach_larger;
    TimeSampling time_sampling = TimeSampling::uniform;
};

struct LossBreakdown {
    double fm = 0.0;
    double freq_velocity = 0.0;
    double freq_trajectory = 0.0;
    double total = 0.0;
};

// Per-step random draws, separated from the loss computation so tests can
// pin them: one noise chunk and one fm time per sample, one triple per batch.
struct BatchDraws {
    diff::Tensor a0;         // B x (H*D), standard normal
    std::vector<double> t;   // length B
    TimeTriple triple;
};

BatchDraws draw_batch(rng::Prng& rng, size_t batch, size_t chunk_numel,
                      TimeSampling sampling);

// (1-t)*a0 + t*a1, elementwise. Value form for plain tensors and a recorded
// form for use on a tape.
diff::Tensor interpolate(const diff::Tensor& a0, const diff::Tensor& a1, double t);
diff::Tensor interpolate(diff::Tape& tape, const diff::Tensor& a0,
                         const diff::Tensor& a1, double t);

// Constant-in-time regression target a1 - a0.
diff::Tensor fm_target(const diff::Tensor& a0, const diff::Tensor& a1);

// Batch mean of the unsquared l2 distance between the predicted velocity at
// the interpolated point and the straight-path target.
diff::Tensor loss_fm(diff::Tape& tape, const policy::BatchField& field,
                     const policy::Dims& dims, const diff::Tensor& obs,
                     const diff::Tensor& a1, const diff::Tensor& a0,
                     const std::vector<double>& t);

// Velocity- and endpoint-consistency penalties between the two earlier times
// of the triple, extrapolated to the latest. Returns (velocity, trajectory)
// means; gradients flow through the r-branch only under detach_larger.
std::pair<diff::Tensor, diff::Tensor> loss_freq(
    diff::Tape& tape, const policy::BatchField& field, const policy::Dims& dims,
    const diff::Tensor& obs, const diff::Tensor& a1, const diff::Tensor& a0,
    const TimeTriple& triple, const spectral::SimSpec& sim, DetachPolicy detach);

// total = fm + lambda * (freq_velocity + freq_trajectory). Returns the
// recorded scalar; fills `out` with the detached component values.
diff::Tensor loss_total(diff::Tape& tape, const policy::BatchField& field,
                        const policy::Dims& dims, const diff::Tensor& obs,
                        const diff::Tensor& a1, const BatchDraws& draws,
                        const LossConfig& cfg, LossBreakdown* out = nullptr);

}  // namespace fq::loss
