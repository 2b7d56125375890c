#include "freqflow/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "freqflow/binio.hpp"
#include "freqflow/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "FQPD I/O assumes a little-endian host");

namespace fq::data {

using diff::Tensor;

Task parse_task(const std::string& name) {
    if (name == "reach") return Task::reach;
    if (name == "bimodal") return Task::bimodal;
    if (name == "gripper") return Task::gripper;
    throw std::invalid_argument("unknown task '" + name +
                                "' (expected reach, bimodal, or gripper)");
}

const char* task_name(Task task) {
    switch (task) {
        case Task::reach: return "reach";
        case Task::bimodal: return "bimodal";
        case Task::gripper: return "gripper";
    }
    throw std::invalid_argument("task_name: invalid task id");
}

TaskSpec task_spec(Task task) {
    switch (task) {
        case Task::reach: return {2, 2, 16};
        case Task::bimodal: return {2, 2, 16};
        case Task::gripper: return {3, 3, 32};
    }
    throw std::invalid_argument("task_spec: invalid task id");
}

namespace {

double snap(double x) { return double(float(x)); }

void snap_all(Tensor& t) {
    for (size_t i = 0; i < t.numel(); ++i) t.mutable_data()[i] = snap(t.at(i));
}

constexpr double kDetourAmplitude = 0.35;

}  // namespace

Tensor reach_chunk(const std::vector<double>& goal, size_t horizon) {
    if (goal.size() != 2) throw std::invalid_argument("reach_chunk: goal must be 2-d");
    if (horizon == 0) throw std::invalid_argument("reach_chunk: horizon must be >= 1");
    Tensor chunk({horizon, 2});
    for (size_t h = 0; h < horizon; ++h) {
        const double f = double(h + 1) / double(horizon);
        chunk.mutable_data()[h * 2 + 0] = f * goal[0];
        chunk.mutable_data()[h * 2 + 1] = f * goal[1];
    }
    return chunk;
}

Tensor bimodal_chunk(const std::vector<double>& goal, size_t horizon,
                     uint32_t mode_id) {
    if (goal.size() != 2) throw std::invalid_argument("bimodal_chunk: goal must be 2-d");
    if (mode_id > 1) throw std::invalid_argument("bimodal_chunk: mode_id must be 0 or 1");
    const double norm = std::sqrt(goal[0] * goal[0] + goal[1] * goal[1]);
    if (norm < 1e-9) {
        throw std::invalid_argument("bimodal_chunk: goal too close to the origin");
    }
    const double px = -goal[1] / norm;
    const double py = goal[0] / norm;
    const double sign = mode_id == 0 ? 1.0 : -1.0;

    Tensor chunk = reach_chunk(goal, horizon);
    for (size_t h = 0; h < horizon; ++h) {
        const double phase = 2.0 * M_PI * double(h + 1) / double(horizon);
        const double lateral =
            sign * kDetourAmplitude * 0.5 * (1.0 - std::cos(phase));
        chunk.mutable_data()[h * 2 + 0] += lateral * px;
        chunk.mutable_data()[h * 2 + 1] += lateral * py;
    }
    // The raised cosine vanishes at h = H-1, so the endpoint is exactly the
    // goal; re-assert to keep the contract independent of rounding.
    chunk.mutable_data()[(horizon - 1) * 2 + 0] = goal[0];
    chunk.mutable_data()[(horizon - 1) * 2 + 1] = goal[1];
    return chunk;
}

Tensor gripper_chunk(const std::vector<double>& obs, size_t horizon) {
    if (obs.size() != 3) {
        throw std::invalid_argument("gripper_chunk: obs must be (x, y, phase)");
    }
    if (horizon == 0) throw std::invalid_argument("gripper_chunk: horizon must be >= 1");
    const double phase = obs[2];
    Tensor chunk({horizon, 3});
    for (size_t h = 0; h < horizon; ++h) {
        const double f = double(h + 1) / double(horizon);
        chunk.mutable_data()[h * 3 + 0] = f * obs[0];
        chunk.mutable_data()[h * 3 + 1] = f * obs[1];
        chunk.mutable_data()[h * 3 + 2] =
            double(h) / double(horizon) < phase ? -1.0 : 1.0;
    }
    return chunk;
}

std::vector<Tensor> expert_chunks(Task task, const std::vector<double>& obs,
                                  size_t horizon) {
    switch (task) {
        case Task::reach: return {reach_chunk(obs, horizon)};
        case Task::bimodal:
            return {bimodal_chunk(obs, horizon, 0), bimodal_chunk(obs, horizon, 1)};
        case Task::gripper: return {gripper_chunk(obs, horizon)};
    }
    throw std::invalid_argument("expert_chunks: invalid task id");
}

Dataset gen_dataset(Task task, size_t n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_dataset: need at least one episode");
    const TaskSpec spec = task_spec(task);

    Dataset ds;
    ds.task = task;
    ds.obs_dim = spec.obs_dim;
    ds.action_dim = spec.action_dim;
    ds.horizon = spec.horizon;
    ds.seed = seed;
    ds.episodes.reserve(n);

    for (size_t i = 0; i < n; ++i) {
        rng::Prng prng(seed ^ uint64_t(i));
        Episode ep;
        switch (task) {
            case Task::reach: {
                ep.obs = {prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0)};
                ep.chunk = reach_chunk(ep.obs, spec.horizon);
                break;
            }
            case Task::bimodal: {
                double gx, gy;
                do {
                    gx = prng.uniform(-1.0, 1.0);
                    gy = prng.uniform(-1.0, 1.0);
                } while (std::sqrt(gx * gx + gy * gy) < 0.5);
                ep.obs = {gx, gy};
                ep.mode_id = prng.uniform() < 0.5 ? 0 : 1;
                ep.chunk = bimodal_chunk(ep.obs, spec.horizon, ep.mode_id);
                break;
            }
            case Task::gripper: {
                ep.obs = {prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0),
                          prng.uniform(0.25, 0.75)};
                ep.chunk = gripper_chunk(ep.obs, spec.horizon);
                break;
            }
        }
        for (auto& o : ep.obs) o = snap(o);
        snap_all(ep.chunk);
        ds.episodes.push_back(std::move(ep));
    }
    ds.stats = compute_stats(ds.episodes, ds.action_dim);
    return ds;
}

NormStats compute_stats(const std::vector<Episode>& episodes, size_t action_dim) {
    if (episodes.empty()) throw std::invalid_argument("compute_stats: no episodes");
    NormStats stats;
    stats.min.assign(action_dim, std::numeric_limits<double>::infinity());
    stats.max.assign(action_dim, -std::numeric_limits<double>::infinity());
    for (const Episode& ep : episodes) {
        if (ep.chunk.ndim() != 2 || ep.chunk.dim(1) != action_dim) {
            throw std::invalid_argument("compute_stats: chunk dimension mismatch");
        }
        for (size_t h = 0; h < ep.chunk.dim(0); ++h) {
            for (size_t d = 0; d < action_dim; ++d) {
                const double v = ep.chunk.at(h, d);
                stats.min[d] = std::min(stats.min[d], v);
                stats.max[d] = std::max(stats.max[d], v);
            }
        }
    }
    for (size_t d = 0; d < action_dim; ++d) {
        if (stats.min[d] == stats.max[d]) {
            stats.min[d] -= 1e-6;
            stats.max[d] += 1e-6;
        }
        stats.min[d] = snap(stats.min[d]);
        stats.max[d] = snap(stats.max[d]);
    }
    return stats;
}

namespace {

void expect_stats(const NormStats& stats, const Tensor& chunk) {
    if (chunk.ndim() != 2 || chunk.dim(1) != stats.min.size() ||
        stats.min.size() != stats.max.size()) {
        throw std::invalid_argument("normalize: chunk/stats dimension mismatch");
    }
    for (size_t d = 0; d < stats.min.size(); ++d) {
        if (!(stats.min[d] < stats.max[d])) {
            throw std::invalid_argument("normalize: stats must satisfy min < max");
        }
    }
}

}  // namespace

Tensor normalize(const Tensor& chunk, const NormStats& stats) {
    expect_stats(stats, chunk);
    Tensor out(chunk.shape());
    const size_t D = stats.min.size();
    for (size_t h = 0; h < chunk.dim(0); ++h) {
        for (size_t d = 0; d < D; ++d) {
            const double span = stats.max[d] - stats.min[d];
            out.mutable_data()[h * D + d] =
                2.0 * (chunk.at(h, d) - stats.min[d]) / span - 1.0;
        }
    }
    return out;
}

Tensor denormalize(const Tensor& chunk, const NormStats& stats) {
    expect_stats(stats, chunk);
    Tensor out(chunk.shape());
    const size_t D = stats.min.size();
    for (size_t h = 0; h < chunk.dim(0); ++h) {
        for (size_t d = 0; d < D; ++d) {
            const double span = stats.max[d] - stats.min[d];
            out.mutable_data()[h * D + d] =
                stats.min[d] + (chunk.at(h, d) + 1.0) * span / 2.0;
        }
    }
    return out;
}

namespace {

constexpr uint32_t kFormatVersion = 1;
const char kMagic[4] = {'F', 'Q', 'P', 'D'};

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    if (ds.stats.min.size() != ds.action_dim || ds.stats.max.size() != ds.action_dim) {
        throw std::invalid_argument("write_dataset: stats dimension mismatch");
    }
    io::Writer w(path, "write_dataset");
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);
    w.u32(uint32_t(ds.task));
    w.u32(uint32_t(ds.obs_dim));
    w.u32(uint32_t(ds.action_dim));
    w.u32(uint32_t(ds.horizon));
    w.u32(uint32_t(ds.episodes.size()));
    w.u64(ds.seed);
    for (size_t d = 0; d < ds.action_dim; ++d) {
        w.f32(ds.stats.min[d]);
        w.f32(ds.stats.max[d]);
    }
    for (const Episode& ep : ds.episodes) {
        if (ep.obs.size() != ds.obs_dim || ep.chunk.ndim() != 2 ||
            ep.chunk.dim(0) != ds.horizon || ep.chunk.dim(1) != ds.action_dim) {
            throw std::invalid_argument("write_dataset: episode shape mismatch");
        }
        w.u32(ep.mode_id);
        for (double o : ep.obs) w.f32(o);
        for (size_t i = 0; i < ep.chunk.numel(); ++i) w.f32(ep.chunk.at(i));
    }
    w.close();
}

Dataset read_dataset(const std::string& path) {
    io::Reader r(path, "read_dataset");
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("read_dataset: bad magic at byte offset 0");
    }
    const uint32_t version = r.u32("version");
    if (version != kFormatVersion) {
        throw std::runtime_error("read_dataset: unsupported format version " +
                                 std::to_string(version) + " at byte offset 4");
    }
    Dataset ds;
    const uint32_t task_id = r.u32("task id");
    if (task_id > uint32_t(Task::gripper)) {
        throw std::runtime_error("read_dataset: invalid task id " +
                                 std::to_string(task_id) + " at byte offset 8");
    }
    ds.task = Task(task_id);
    ds.obs_dim = r.u32("obs dim");
    ds.action_dim = r.u32("action dim");
    ds.horizon = r.u32("horizon");
    const uint32_t count = r.u32("episode count");
    ds.seed = r.u64("seed");
    if (ds.obs_dim == 0 || ds.action_dim == 0 || ds.horizon == 0) {
        throw std::runtime_error("read_dataset: zero dimension in header");
    }

    ds.stats.min.resize(ds.action_dim);
    ds.stats.max.resize(ds.action_dim);
    for (size_t d = 0; d < ds.action_dim; ++d) {
        ds.stats.min[d] = r.f32("norm stat");
        ds.stats.max[d] = r.f32("norm stat");
        if (!(ds.stats.min[d] < ds.stats.max[d])) {
            throw std::runtime_error("read_dataset: norm stats must satisfy min < max");
        }
    }

    ds.episodes.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Episode ep;
        ep.mode_id = r.u32("episode mode id");
        ep.obs.resize(ds.obs_dim);
        for (auto& o : ep.obs) o = r.f32("episode obs");
        Tensor chunk({ds.horizon, ds.action_dim});
        for (size_t j = 0; j < chunk.numel(); ++j) {
            chunk.mutable_data()[j] = r.f32("episode chunk");
        }
        ep.chunk = std::move(chunk);
        ds.episodes.push_back(std::move(ep));
    }
    r.expect_end();
    return ds;
}

}  // namespace fq::data
