#include "freqflow/policynet.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "freqflow/rng.hpp"

namespace fq::policy {

using diff::Tape;
using diff::Tensor;

namespace {

void check_dims(const Dims& d) {
    if (d.obs_dim == 0 || d.action_dim == 0 || d.horizon == 0 ||
        d.hidden_width == 0 || d.depth == 0 || d.time_embed_dim == 0) {
        throw std::invalid_argument("policynet: all dims must be positive");
    }
    if (d.time_embed_dim % 2 != 0) {
        throw std::invalid_argument("policynet: time_embed_dim must be even");
    }
}

}  // namespace

size_t param_count(const Dims& dims) {
    check_dims(dims);
    const size_t W = dims.hidden_width;
    size_t fan_in = dims.input_width();
    size_t count = 0;
    for (size_t l = 0; l < dims.depth; ++l) {
        count += fan_in * W + W;
        fan_in = W;
    }
    count += W * dims.chunk_numel() + dims.chunk_numel();
    return count;
}

std::vector<double> time_embed(double t, size_t embed_dim) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("time_embed: t must lie in [0,1]");
    }
    if (embed_dim == 0 || embed_dim % 2 != 0) {
        throw std::invalid_argument("time_embed: embed dim must be positive and even");
    }
    std::vector<double> e(embed_dim);
    double omega = 2.0 * M_PI;
    for (size_t j = 0; j < embed_dim / 2; ++j) {
        e[2 * j] = std::sin(omega * t);
        e[2 * j + 1] = std::cos(omega * t);
        omega *= 2.0;
    }
    return e;
}

const Tensor& VelocityModel::blob(const std::string& name) const {
    for (const auto& [n, t] : params) {
        if (n == name) return t;
    }
    throw std::invalid_argument("VelocityModel: no parameter named '" + name + "'");
}

VelocityModel init_params(const Dims& dims, uint64_t seed) {
    check_dims(dims);
    VelocityModel model;
    model.dims = dims;
    rng::Prng prng(seed);

    const size_t W = dims.hidden_width;
    size_t fan_in = dims.input_width();
    for (size_t l = 0; l < dims.depth; ++l) {
        const double limit = std::sqrt(6.0 / double(fan_in + W));
        Tensor w({fan_in, W});
        for (size_t i = 0; i < w.numel(); ++i) {
            w.mutable_data()[i] = prng.uniform(-limit, limit);
        }
        const std::string base = "hidden" + std::to_string(l);
        model.params.emplace_back(base + ".weight", std::move(w));
        model.params.emplace_back(base + ".bias", Tensor::zeros({W}));
        fan_in = W;
    }
    model.params.emplace_back("head.weight", Tensor::zeros({W, dims.chunk_numel()}));
    model.params.emplace_back("head.bias", Tensor::zeros({dims.chunk_numel()}));
    return model;
}

std::vector<Tensor> place(Tape& tape, const VelocityModel& model, bool trainable) {
    std::vector<Tensor> blobs;
    blobs.reserve(model.params.size());
    for (const auto& [name, value] : model.params) {
        blobs.push_back(trainable ? tape.leaf(value) : tape.constant(value));
    }
    return blobs;
}

Tensor forward_batch(Tape& tape, const std::vector<Tensor>& blobs, const Dims& dims,
                     const Tensor& a_flat, const Tensor& obs,
                     const std::vector<double>& t) {
    check_dims(dims);
    if (blobs.size() != 2 * (dims.depth + 1)) {
        throw std::invalid_argument("forward_batch: blob count does not match depth");
    }
    if (a_flat.ndim() != 2 || a_flat.dim(1) != dims.chunk_numel()) {
        throw std::invalid_argument("forward_batch: a_flat must be B x H*D, got " +
                                    a_flat.shape_str());
    }
    const size_t B = a_flat.dim(0);
    if (obs.ndim() != 2 || obs.dim(0) != B || obs.dim(1) != dims.obs_dim) {
        throw std::invalid_argument("forward_batch: obs must be B x O, got " +
                                    obs.shape_str());
    }
    if (t.size() != B) {
        throw std::invalid_argument("forward_batch: need one t per sample");
    }

    Tensor emb({B, dims.time_embed_dim});
    for (size_t b = 0; b < B; ++b) {
        const auto e = time_embed(t[b], dims.time_embed_dim);
        for (size_t j = 0; j < e.size(); ++j) {
            emb.mutable_data()[b * dims.time_embed_dim + j] = e[j];
        }
    }

    Tensor h = tape.concat_last({a_flat, obs, tape.constant(emb)});
    for (size_t l = 0; l < dims.depth; ++l) {
        h = tape.silu(tape.affine(h, blobs[2 * l], blobs[2 * l + 1]));
    }
    return tape.affine(h, blobs[2 * dims.depth], blobs[2 * dims.depth + 1]);
}

Tensor forward_velocity(const VelocityModel& model, const std::vector<double>& obs,
                        const Tensor& a_t, double t) {
    const Dims& d = model.dims;
    if (obs.size() != d.obs_dim) {
        throw std::invalid_argument("forward_velocity: obs length mismatch");
    }
    if (a_t.ndim() != 2 || a_t.dim(0) != d.horizon || a_t.dim(1) != d.action_dim) {
        throw std::invalid_argument("forward_velocity: chunk must be H x D, got " +
                                    a_t.shape_str());
    }
    Tape tape;
    auto blobs = place(tape, model, false);
    Tensor a_flat = tape.reshape(tape.constant(a_t), {1, d.chunk_numel()});
    Tensor ob = tape.constant(Tensor({1, d.obs_dim}, obs));
    Tensor out = forward_batch(tape, blobs, d, a_flat, ob, {t});
    return Tape::detach(tape.reshape(out, {d.horizon, d.action_dim}));
}

BatchField model_field(const VelocityModel& model) {
    // Copy the model so the field stays valid independent of the caller's
    // object lifetime; blobs are placed per call on the caller's tape.
    auto owned = std::make_shared<VelocityModel>(model);
    return [owned](Tape& tape, const Tensor& a_flat, const Tensor& obs,
                   const std::vector<double>& t) {
        auto blobs = place(tape, *owned, false);
        return forward_batch(tape, blobs, owned->dims, a_flat, obs, t);
    };
}

}  // namespace fq::policy
