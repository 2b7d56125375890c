#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "freqflow/tensor.hpp"

// Time- and observation-conditioned velocity field: a silu MLP over the
// flattened action chunk. The output head starts at exactly zero so the
// initial field is the zero field, which makes step-0 losses analytically
// known.
namespace fq::policy {

struct Dims {
    size_t obs_dim = 0;
    size_t action_dim = 0;
    size_t horizon = 0;
    size_t hidden_width = 256;
    size_t depth = 4;
    size_t time_embed_dim = 32;

    size_t chunk_numel() const { return horizon * action_dim; }
    size_t input_width() const { return chunk_numel() + obs_dim + time_embed_dim; }
};

// Total scalar parameter count implied by the dims.
size_t param_count(const Dims& dims);

// Sinusoidal features [sin(w_1 t), cos(w_1 t), ..., sin(w_{E/2} t), cos(...)]
// with w_j = 2*pi*2^(j-1). Rejects t outside [0,1]; E must be even.
std::vector<double> time_embed(double t, size_t embed_dim);

struct VelocityModel {
    Dims dims;
    // Fixed declaration order: hidden0.weight, hidden0.bias, ...,
    // hidden{depth-1}.weight, hidden{depth-1}.bias, head.weight, head.bias.
    // Weights are stored (fan_in x fan_out) so affine applies them directly.
    std::vector<std::pair<std::string, diff::Tensor>> params;

    const diff::Tensor& blob(const std::string& name) const;
};

// Hidden weights ~ uniform(+-sqrt(6/(fan_in+fan_out))), hidden biases zero,
// head weights and bias exactly zero. Deterministic in the seed.
VelocityModel init_params(const Dims& dims, uint64_t seed);

// Puts every parameter blob on the tape in declaration order: leaves when
// trainable (gradients flow), constants otherwise.
std::vector<diff::Tensor> place(diff::Tape& tape, const VelocityModel& model,
                                bool trainable);

// Batched forward: a_flat is B x (H*D), obs is B x O, t has one entry per
// sample. Returns B x (H*D). Differentiable through the placed blobs and
// a_flat; t enters as plain data.
diff::Tensor forward_batch(diff::Tape& tape, const std::vector<diff::Tensor>& blobs,
                           const Dims& dims, const diff::Tensor& a_flat,
                           const diff::Tensor& obs, const std::vector<double>& t);

// Single-sample convenience: H x D chunk in, H x D velocity out, evaluated on
// a scratch tape with parameters as constants.
diff::Tensor forward_velocity(const VelocityModel& model,
                              const std::vector<double>& obs,
                              const diff::Tensor& a_t, double t);

// The seam the losses and samplers consume. Implementations must be pure:
// the same inputs on the same tape produce the same recorded value.
using BatchField = std::function<diff::Tensor(
    diff::Tape&, const diff::Tensor& a_flat, const diff::Tensor& obs,
    const std::vector<double>& t)>;

// Field that evaluates the model with parameters placed as constants on the
// caller's tape (inference; no parameter gradients).
BatchField model_field(const VelocityModel& model);

}  // namespace fq::policy
