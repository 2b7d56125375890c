#include "freqflow/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "freqflow/binio.hpp"
#include "freqflow/kernels.hpp"
#include "freqflow/rng.hpp"

namespace fq::train {

using diff::Tensor;
using json = nlohmann::json;

namespace {

// Stream id for parameter init, far above any reachable step index.
constexpr uint64_t kInitStream = 0xffffffff00000001ull;

const char* detach_name(loss::DetachPolicy p) {
    return p == loss::DetachPolicy::detach_larger ? "detach_larger" : "detach_none";
}

const char* sampling_name(loss::TimeSampling s) {
    return s == loss::TimeSampling::uniform ? "uniform" : "beta";
}

loss::DetachPolicy parse_detach(const std::string& s) {
    if (s == "detach_larger") return loss::DetachPolicy::detach_larger;
    if (s == "detach_none") return loss::DetachPolicy::detach_none;
    throw std::invalid_argument("config: detach must be detach_larger or detach_none, got '" +
                                s + "'");
}

loss::TimeSampling parse_sampling(const std::string& s) {
    if (s == "uniform") return loss::TimeSampling::uniform;
    if (s == "beta") return loss::TimeSampling::beta_early;
    throw std::invalid_argument("config: time_sampling must be uniform or beta, got '" + s +
                                "'");
}

std::string want_string(const json& j, const char* key) {
    if (!j.is_string()) {
        throw std::invalid_argument(std::string("config: ") + key + " must be a string");
    }
    return j.get<std::string>();
}

double want_number(const json& j, const char* key) {
    if (!j.is_number()) {
        throw std::invalid_argument(std::string("config: ") + key + " must be a number");
    }
    return j.get<double>();
}

uint64_t want_unsigned(const json& j, const char* key) {
    if (!j.is_number_unsigned()) {
        throw std::invalid_argument(std::string("config: ") + key +
                                    " must be a non-negative integer");
    }
    return j.get<uint64_t>();
}

}  // namespace

TrainConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

    TrainConfig cfg;
    bool saw_task = false, saw_dataset = false, saw_checkpoint = false;
    for (const auto& [key, val] : j.items()) {
        if (key == "task") {
            cfg.task = data::parse_task(want_string(val, "task"));
            saw_task = true;
        } else if (key == "dataset") {
            cfg.dataset = want_string(val, "dataset");
            saw_dataset = true;
        } else if (key == "checkpoint") {
            cfg.checkpoint = want_string(val, "checkpoint");
            saw_checkpoint = true;
        } else if (key == "mode") {
            cfg.mode = spectral::parse_sim_mode(want_string(val, "mode"));
        } else if (key == "lambda") {
            cfg.lambda = want_number(val, "lambda");
            if (cfg.lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
        } else if (key == "steps") {
            cfg.steps = want_unsigned(val, "steps");
        } else if (key == "batch_size") {
            cfg.batch_size = size_t(want_unsigned(val, "batch_size"));
            if (cfg.batch_size < 1) {
                throw std::invalid_argument("config: batch_size must be >= 1");
            }
        } else if (key == "learning_rate") {
            cfg.learning_rate = want_number(val, "learning_rate");
            if (!(cfg.learning_rate > 0.0)) {
                throw std::invalid_argument("config: learning_rate must be > 0");
            }
        } else if (key == "adam_beta1") {
            cfg.adam_beta1 = want_number(val, "adam_beta1");
            if (cfg.adam_beta1 < 0.0 || cfg.adam_beta1 >= 1.0) {
                throw std::invalid_argument("config: adam_beta1 must be in [0, 1)");
            }
        } else if (key == "adam_beta2") {
            cfg.adam_beta2 = want_number(val, "adam_beta2");
            if (cfg.adam_beta2 < 0.0 || cfg.adam_beta2 >= 1.0) {
                throw std::invalid_argument("config: adam_beta2 must be in [0, 1)");
            }
        } else if (key == "adam_eps") {
            cfg.adam_eps = want_number(val, "adam_eps");
            if (!(cfg.adam_eps > 0.0)) {
                throw std::invalid_argument("config: adam_eps must be > 0");
            }
        } else if (key == "seed") {
            cfg.seed = want_unsigned(val, "seed");
        } else if (key == "ema_decay") {
            cfg.ema_decay = want_number(val, "ema_decay");
            if (cfg.ema_decay < 0.0 || cfg.ema_decay >= 1.0) {
                throw std::invalid_argument("config: ema_decay must be in [0, 1)");
            }
        } else if (key == "eval_every") {
            cfg.eval_every = want_unsigned(val, "eval_every");
        } else if (key == "detach") {
            cfg.detach = parse_detach(want_string(val, "detach"));
        } else if (key == "time_sampling") {
            cfg.time_sampling = parse_sampling(want_string(val, "time_sampling"));
        } else if (key == "band_cutoff") {
            cfg.band_cutoff = size_t(want_unsigned(val, "band_cutoff"));
        } else if (key == "hidden_width") {
            cfg.hidden_width = size_t(want_unsigned(val, "hidden_width"));
            if (cfg.hidden_width < 1) {
                throw std::invalid_argument("config: hidden_width must be >= 1");
            }
        } else if (key == "depth") {
            cfg.depth = size_t(want_unsigned(val, "depth"));
            if (cfg.depth < 1) throw std::invalid_argument("config: depth must be >= 1");
        } else if (key == "time_embed_dim") {
            cfg.time_embed_dim = size_t(want_unsigned(val, "time_embed_dim"));
            if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0) {
                throw std::invalid_argument("config: time_embed_dim must be even and >= 2");
            }
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    if (!saw_task) throw std::invalid_argument("config: missing required key 'task'");
    if (!saw_dataset) throw std::invalid_argument("config: missing required key 'dataset'");
    if (!saw_checkpoint) {
        throw std::invalid_argument("config: missing required key 'checkpoint'");
    }
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_json(const TrainConfig& cfg) {
    json j;
    j["task"] = data::task_name(cfg.task);
    j["dataset"] = cfg.dataset;
    j["checkpoint"] = cfg.checkpoint;
    j["mode"] = spectral::sim_mode_name(cfg.mode);
    j["lambda"] = cfg.lambda;
    j["steps"] = cfg.steps;
    j["batch_size"] = uint64_t(cfg.batch_size);
    j["learning_rate"] = cfg.learning_rate;
    j["adam_beta1"] = cfg.adam_beta1;
    j["adam_beta2"] = cfg.adam_beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["seed"] = cfg.seed;
    j["ema_decay"] = cfg.ema_decay;
    j["eval_every"] = cfg.eval_every;
    j["detach"] = detach_name(cfg.detach);
    j["time_sampling"] = sampling_name(cfg.time_sampling);
    j["band_cutoff"] = uint64_t(cfg.band_cutoff);
    j["hidden_width"] = uint64_t(cfg.hidden_width);
    j["depth"] = uint64_t(cfg.depth);
    j["time_embed_dim"] = uint64_t(cfg.time_embed_dim);
    return j.dump();
}

policy::Dims config_dims(const TrainConfig& cfg) {
    const data::TaskSpec spec = data::task_spec(cfg.task);
    policy::Dims dims;
    dims.obs_dim = spec.obs_dim;
    dims.action_dim = spec.action_dim;
    dims.horizon = spec.horizon;
    dims.hidden_width = cfg.hidden_width;
    dims.depth = cfg.depth;
    dims.time_embed_dim = cfg.time_embed_dim;
    return dims;
}

AdamState zero_adam_state(const policy::VelocityModel& model) {
    AdamState state;
    state.m.reserve(model.params.size());
    state.v.reserve(model.params.size());
    for (const auto& [name, value] : model.params) {
        state.m.emplace_back(value.numel(), 0.0);
        state.v.emplace_back(value.numel(), 0.0);
    }
    return state;
}

void adam_step(policy::VelocityModel& model, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps,
               uint64_t step_index) {
    if (step_index < 1) throw std::invalid_argument("adam_step: step_index must be >= 1");
    if (grads.size() != model.params.size() || state.m.size() != model.params.size() ||
        state.v.size() != model.params.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    const double c1 = 1.0 / (1.0 - std::pow(beta1, double(step_index)));
    const double c2 = 1.0 / (1.0 - std::pow(beta2, double(step_index)));
    for (size_t i = 0; i < model.params.size(); ++i) {
        auto& [name, value] = model.params[i];
        const Tensor& g = grads[i];
        if (g.shape() != value.shape()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
        }
        for (size_t k = 0; k < g.numel(); ++k) {
            if (!std::isfinite(g.at(k))) {
                throw std::runtime_error("adam_step: non-finite gradient for parameter " +
                                         name);
            }
        }
        Tensor fresh(value.shape(), value.vec());
        kern::active().adam(fresh.mutable_data(), state.m[i].data(), state.v[i].data(),
                            g.data(), g.numel(), lr, beta1, beta2, eps, c1, c2);
        value = std::move(fresh);
    }
}

void ema_update(policy::VelocityModel& ema, const policy::VelocityModel& model,
                double decay) {
    if (decay < 0.0 || decay >= 1.0) {
        throw std::invalid_argument("ema_update: decay must be in [0, 1)");
    }
    if (ema.params.size() != model.params.size()) {
        throw std::invalid_argument("ema_update: parameter count mismatch");
    }
    for (size_t i = 0; i < model.params.size(); ++i) {
        auto& [ename, evalue] = ema.params[i];
        const auto& [mname, mvalue] = model.params[i];
        if (ename != mname || evalue.shape() != mvalue.shape()) {
            throw std::invalid_argument("ema_update: parameter mismatch at " + ename);
        }
        Tensor fresh(evalue.shape());
        kern::active().scale(fresh.mutable_data(), evalue.data(), decay, evalue.numel());
        kern::active().axpy(fresh.mutable_data(), mvalue.data(), 1.0 - decay,
                            mvalue.numel());
        evalue = std::move(fresh);
    }
}

namespace {

constexpr uint32_t kCheckpointVersion = 1;
const char kCheckpointMagic[4] = {'F', 'Q', 'P', 'C'};

void write_blobs(io::Writer& w, const policy::VelocityModel& model) {
    w.u32(uint32_t(model.params.size()));
    for (const auto& [name, value] : model.params) {
        w.str(name);
        w.u32(uint32_t(value.ndim()));
        for (size_t d = 0; d < value.ndim(); ++d) w.u32(uint32_t(value.dim(d)));
        for (size_t k = 0; k < value.numel(); ++k) w.f32(value.at(k));
    }
}

// Reads blob values into `model`, which already carries the expected
// names/shapes for the config.
void read_blobs(io::Reader& r, policy::VelocityModel& model, const char* section) {
    const uint32_t count = r.u32("blob count");
    if (count != model.params.size()) {
        throw std::runtime_error("load_checkpoint: expected " +
                                 std::to_string(model.params.size()) + " " + section +
                                 " blobs, found " + std::to_string(count));
    }
    for (auto& [name, value] : model.params) {
        const uint32_t len = r.u32("blob name length");
        const std::string got = r.str(len, "blob name");
        if (got != name) {
            throw std::runtime_error("load_checkpoint: expected blob '" + name +
                                     "', found '" + got + "'");
        }
        const uint32_t rank = r.u32("blob rank");
        std::vector<size_t> shape(rank);
        for (auto& d : shape) d = r.u32("blob extent");
        if (shape != value.shape()) {
            throw std::runtime_error("load_checkpoint: shape mismatch for blob '" + name +
                                     "'");
        }
        Tensor fresh(shape);
        for (size_t k = 0; k < fresh.numel(); ++k) {
            fresh.mutable_data()[k] = r.f32("blob data");
        }
        value = std::move(fresh);
    }
}

std::string csv_row(uint64_t step, const loss::LossBreakdown& bd) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g",
                  static_cast<unsigned long long>(step), bd.fm, bd.freq_velocity,
                  bd.freq_trajectory, bd.total);
    return buf;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    io::Writer w(path, "save_checkpoint");
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(config_json(ckpt.config));
    const size_t D = ckpt.stats.min.size();
    if (ckpt.stats.max.size() != D) {
        throw std::invalid_argument("save_checkpoint: stats dimension mismatch");
    }
    w.u32(uint32_t(D));
    for (size_t d = 0; d < D; ++d) {
        w.f32(ckpt.stats.min[d]);
        w.f32(ckpt.stats.max[d]);
    }
    write_blobs(w, ckpt.model);
    w.u32(ckpt.has_ema ? 1 : 0);
    if (ckpt.has_ema) write_blobs(w, ckpt.ema);
    w.u32(ckpt.has_opt ? 1 : 0);
    if (ckpt.has_opt) {
        if (ckpt.opt.m.size() != ckpt.model.params.size() ||
            ckpt.opt.v.size() != ckpt.model.params.size()) {
            throw std::invalid_argument("save_checkpoint: optimizer state count mismatch");
        }
        for (size_t i = 0; i < ckpt.model.params.size(); ++i) {
            const size_t n = ckpt.model.params[i].second.numel();
            if (ckpt.opt.m[i].size() != n || ckpt.opt.v[i].size() != n) {
                throw std::invalid_argument(
                    "save_checkpoint: optimizer state size mismatch for " +
                    ckpt.model.params[i].first);
            }
            for (double x : ckpt.opt.m[i]) w.f32(x);
            for (double x : ckpt.opt.v[i]) w.f32(x);
        }
    }
    w.u64(ckpt.step);
    w.u64(ckpt.rng_state);
    w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
    io::Reader r(path, "load_checkpoint");
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic at byte offset 0");
    }
    const uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version) + " at byte offset 4");
    }
    Checkpoint ck;
    const uint32_t cfg_len = r.u32("config length");
    ck.config = parse_config(r.str(cfg_len, "config"));
    const policy::Dims dims = config_dims(ck.config);

    const uint32_t D = r.u32("stats dimension");
    if (D != dims.action_dim) {
        throw std::runtime_error("load_checkpoint: stats dimension " + std::to_string(D) +
                                 " does not match the task action dimension " +
                                 std::to_string(dims.action_dim));
    }
    ck.stats.min.resize(D);
    ck.stats.max.resize(D);
    for (size_t d = 0; d < D; ++d) {
        ck.stats.min[d] = r.f32("norm stat");
        ck.stats.max[d] = r.f32("norm stat");
        if (!(ck.stats.min[d] < ck.stats.max[d])) {
            throw std::runtime_error("load_checkpoint: norm stats must satisfy min < max");
        }
    }

    // Layout template: names and shapes implied by the config.
    ck.model = policy::init_params(dims, 0);
    read_blobs(r, ck.model, "parameter");
    ck.has_ema = r.u32("ema flag") != 0;
    if (ck.has_ema) {
        ck.ema = policy::init_params(dims, 0);
        read_blobs(r, ck.ema, "ema");
    }
    ck.has_opt = r.u32("optimizer flag") != 0;
    if (ck.has_opt) {
        ck.opt.m.resize(ck.model.params.size());
        ck.opt.v.resize(ck.model.params.size());
        for (size_t i = 0; i < ck.model.params.size(); ++i) {
            const size_t n = ck.model.params[i].second.numel();
            ck.opt.m[i].resize(n);
            ck.opt.v[i].resize(n);
            for (auto& x : ck.opt.m[i]) x = r.f32("optimizer moment");
            for (auto& x : ck.opt.v[i]) x = r.f32("optimizer moment");
        }
    }
    ck.step = r.u64("step");
    ck.rng_state = r.u64("rng state");
    r.expect_end();
    return ck;
}

Checkpoint run_training(const TrainConfig& cfg, bool resume,
                        std::vector<StepLog>* log_out) {
    const data::Dataset ds = data::read_dataset(cfg.dataset);
    if (ds.task != cfg.task) {
        throw std::runtime_error(std::string("train: dataset task '") +
                                 data::task_name(ds.task) + "' does not match config task '" +
                                 data::task_name(cfg.task) + "'");
    }
    const policy::Dims dims = config_dims(cfg);
    if (ds.obs_dim != dims.obs_dim || ds.action_dim != dims.action_dim ||
        ds.horizon != dims.horizon) {
        throw std::runtime_error("train: dataset dimensions do not match the task");
    }
    const size_t n = ds.episodes.size();
    if (cfg.batch_size > n) {
        throw std::invalid_argument("train: batch size " + std::to_string(cfg.batch_size) +
                                    " exceeds dataset size " + std::to_string(n));
    }
    if (cfg.band_cutoff != 0 && cfg.band_cutoff >= dims.horizon) {
        throw std::invalid_argument("train: band_cutoff " + std::to_string(cfg.band_cutoff) +
                                    " must be below the horizon " +
                                    std::to_string(dims.horizon));
    }

    const size_t O = dims.obs_dim;
    const size_t HD = dims.chunk_numel();

    // Normalize every chunk once; training operates in normalized action space.
    std::vector<Tensor> norm_chunks;
    norm_chunks.reserve(n);
    for (const data::Episode& ep : ds.episodes) {
        norm_chunks.push_back(data::normalize(ep.chunk, ds.stats));
    }

    Checkpoint ck;
    uint64_t start_step = 0;
    if (resume) {
        ck = load_checkpoint(cfg.checkpoint);
        TrainConfig stored = ck.config;
        stored.steps = cfg.steps;
        if (config_json(stored) != config_json(cfg)) {
            throw std::runtime_error(
                "train: resume config does not match the checkpoint (only 'steps' may "
                "change)");
        }
        if (!ck.has_opt) {
            throw std::runtime_error(
                "train: checkpoint has no optimizer state; cannot resume");
        }
        ck.config = cfg;
        start_step = ck.step;
    } else {
        ck.config = cfg;
        ck.stats = ds.stats;
        ck.model = policy::init_params(dims, rng::derive(cfg.seed, kInitStream));
        if (cfg.ema_decay > 0.0) {
            ck.has_ema = true;
            ck.ema = ck.model;
        }
        ck.has_opt = true;
        ck.opt = zero_adam_state(ck.model);
        ck.step = 0;
        ck.rng_state = cfg.seed;
    }

    const std::string csv_path = cfg.checkpoint + ".loss.csv";
    std::ofstream csv(csv_path, resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw std::runtime_error("train: cannot open loss log " + csv_path);
    if (!resume) csv << "step,fm,freq_velocity,freq_trajectory,total\n";

    loss::LossConfig lcfg;
    // lambda == 0 disables the consistency branch entirely, so the run is
    // indistinguishable from mode "none".
    lcfg.sim.mode = cfg.lambda == 0.0 ? spectral::SimMode::none : cfg.mode;
    lcfg.sim.band_cutoff = cfg.band_cutoff;
    lcfg.lambda = cfg.lambda;
    lcfg.detach = cfg.detach;
    lcfg.time_sampling = cfg.time_sampling;

    std::vector<size_t> order(n);
    for (uint64_t step = start_step; step < cfg.steps; ++step) {
        rng::Prng prng(rng::derive(cfg.seed, step));

        // Partial Fisher-Yates: the first batch_size entries of `order` become
        // a uniform sample without replacement.
        std::iota(order.begin(), order.end(), size_t(0));
        for (size_t i = 0; i < cfg.batch_size; ++i) {
            size_t j = i + size_t(prng.uniform() * double(n - i));
            if (j >= n) j = n - 1;
            std::swap(order[i], order[j]);
        }

        Tensor obs({cfg.batch_size, O});
        Tensor a1({cfg.batch_size, HD});
        for (size_t i = 0; i < cfg.batch_size; ++i) {
            const size_t e = order[i];
            for (size_t d = 0; d < O; ++d) {
                obs.mutable_data()[i * O + d] = ds.episodes[e].obs[d];
            }
            std::memcpy(a1.mutable_data() + i * HD, norm_chunks[e].data(),
                        HD * sizeof(double));
        }

        const loss::BatchDraws draws =
            loss::draw_batch(prng, cfg.batch_size, HD, cfg.time_sampling);

        diff::Tape tape;
        const std::vector<Tensor> blobs = policy::place(tape, ck.model, true);
        const policy::BatchField field = [&](diff::Tape& t, const Tensor& a,
                                             const Tensor& o,
                                             const std::vector<double>& tv) {
            return policy::forward_batch(t, blobs, dims, a, o, tv);
        };

        loss::LossBreakdown bd;
        Tensor total;
        try {
            total = loss::loss_total(tape, field, dims, obs, a1, draws, lcfg, &bd);
        } catch (const std::invalid_argument& e) {
            // The tape refuses to record non-finite values, so a diverging
            // run surfaces as an op-level error mid-graph.
            if (std::string(e.what()).find("non-finite") != std::string::npos) {
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(step) + " (" + e.what() +
                                         "); last saved checkpoint retained");
            }
            throw;
        }
        if (!std::isfinite(bd.total)) {
            throw std::runtime_error("train: non-finite loss at step " +
                                     std::to_string(step) +
                                     "; last saved checkpoint retained");
        }

        csv << csv_row(step, bd) << "\n";
        if (log_out) log_out->push_back({step, bd});

        tape.backward(total);
        std::vector<Tensor> grads;
        grads.reserve(blobs.size());
        for (const Tensor& b : blobs) grads.push_back(tape.grad(b));
        adam_step(ck.model, grads, ck.opt, cfg.learning_rate, cfg.adam_beta1,
                  cfg.adam_beta2, cfg.adam_eps, step + 1);
        if (ck.has_ema) ema_update(ck.ema, ck.model, cfg.ema_decay);
        ck.step = step + 1;

        if (cfg.eval_every > 0 && ck.step % cfg.eval_every == 0) {
            csv.flush();
            save_checkpoint(ck, cfg.checkpoint);
            save_checkpoint(ck, cfg.checkpoint + ".step" + std::to_string(ck.step));
        }
    }

    csv.flush();
    if (!csv) throw std::runtime_error("train: write failed for loss log " + csv_path);
    save_checkpoint(ck, cfg.checkpoint);
    return ck;
}

}  // namespace fq::train
