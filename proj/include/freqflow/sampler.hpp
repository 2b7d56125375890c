#pragma once

#include <cstdint>
#include <vector>

#include "freqflow/policynet.hpp"
#include "freqflow/tensor.hpp"

// Euler integration of a velocity field from t=0 to t=1 on a uniform grid,
// starting from a seeded standard-normal chunk, plus the flow-straightness
// diagnostic computed from the velocities recorded along the way.
namespace fq::sample {

struct SampleTrace {
    size_t n_steps = 0;
    std::vector<double> times;              // n_steps+1 entries, i/n
    std::vector<diff::Tensor> states;       // n_steps+1 chunks, H x D
    std::vector<diff::Tensor> velocities;   // n_steps chunks, H x D

    const diff::Tensor& initial() const { return states.front(); }
    const diff::Tensor& final() const { return states.back(); }
};

// Seeded standard-normal start in normalized action space.
diff::Tensor draw_start(const policy::Dims& dims, uint64_t seed);

SampleTrace euler_sample(const policy::BatchField& field, const policy::Dims& dims,
                         const std::vector<double>& obs, size_t n_steps,
                         uint64_t seed);
SampleTrace euler_sample(const policy::VelocityModel& model,
                         const std::vector<double>& obs, size_t n_steps,
                         uint64_t seed);

// Single Euler step to t=1; defined as euler_sample(..., 1, ...).final().
diff::Tensor one_step(const policy::BatchField& field, const policy::Dims& dims,
                      const std::vector<double>& obs, uint64_t seed);
diff::Tensor one_step(const policy::VelocityModel& model,
                      const std::vector<double>& obs, uint64_t seed);

// Batched integration: one sample per observation row, each from its own
// seed. Returns the B x (H*D) final chunks; bitwise equal per row to the
// single-trace path.
diff::Tensor euler_batch(const policy::BatchField& field, const policy::Dims& dims,
                         const diff::Tensor& obs, size_t n_steps,
                         const std::vector<uint64_t>& seeds);

// Mean over steps of ||v_i - (final - initial)||_2 / max(||final - initial||_2,
// 1e-8). A one-segment trace is its own chord, hence exactly 0.
double straightness(const SampleTrace& trace);

}  // namespace fq::sample
