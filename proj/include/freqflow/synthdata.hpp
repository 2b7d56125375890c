#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freqflow/tensor.hpp"

// Synthetic expert demonstrations for three desk-scale tasks, min-max action
// normalization, and the FQPD binary dataset format (f32 on disk, f64 in
// memory; every generated value is snapped through f32 so files round-trip
// bit-exactly).
namespace fq::data {

enum class Task : uint32_t {
    reach = 0,    // straight-line positions toward a goal
    bimodal = 1,  // two detour arcs around a midpoint obstacle
    gripper = 2,  // reach plus a per-episode gripper step
};

Task parse_task(const std::string& name);
const char* task_name(Task task);

struct TaskSpec {
    size_t obs_dim;
    size_t action_dim;
    size_t horizon;
};
TaskSpec task_spec(Task task);

struct Episode {
    std::vector<double> obs;
    diff::Tensor chunk;    // H x D, raw units
    uint32_t mode_id = 0;  // expert mode label; evaluation only
};

struct NormStats {
    std::vector<double> min;  // per action dimension
    std::vector<double> max;
};

struct Dataset {
    Task task = Task::reach;
    size_t obs_dim = 0;
    size_t action_dim = 0;
    size_t horizon = 0;
    uint64_t seed = 0;
    NormStats stats;
    std::vector<Episode> episodes;
};

// Closed-form expert chunks in raw units (not f32-snapped; generation snaps).
// reach: row h = ((h+1)/H) * g.
diff::Tensor reach_chunk(const std::vector<double>& goal, size_t horizon);
// bimodal: reach plus a raised-cosine lateral detour of amplitude +-0.35
// perpendicular to the goal, peaking at h = H/2 - 1 and vanishing at the end.
diff::Tensor bimodal_chunk(const std::vector<double>& goal, size_t horizon,
                           uint32_t mode_id);
// gripper: dims 0-1 reach toward (obs[0], obs[1]); dim 2 steps from -1 to +1
// where h/H first reaches the phase obs[2].
diff::Tensor gripper_chunk(const std::vector<double>& obs, size_t horizon);

// Every expert mode for the observation: one chunk for reach/gripper, the two
// detours for bimodal.
std::vector<diff::Tensor> expert_chunks(Task task, const std::vector<double>& obs,
                                        size_t horizon);

// Deterministic in (task, n, seed); episode i draws from its own generator
// seeded with seed XOR i, so parallel generation would reproduce the same
// sequence.
Dataset gen_dataset(Task task, size_t n, uint64_t seed);

// Per-dimension min/max over all chunk rows; constant dimensions are widened
// by +-1e-6 so the affine map below stays invertible.
NormStats compute_stats(const std::vector<Episode>& episodes, size_t action_dim);

// Affine map per dimension sending min -> -1 and max -> +1; denormalize is
// the exact inverse.
diff::Tensor normalize(const diff::Tensor& chunk, const NormStats& stats);
diff::Tensor denormalize(const diff::Tensor& chunk, const NormStats& stats);

// FQPD wire format (little-endian): magic "FQPD", version u32=1, task u32,
// O u32, D u32, H u32, count u32, seed u64, then per action dimension f32
// (min, max), then per episode: mode_id u32, O f32 obs, H*D f32 chunk
// row-major. Truncated or malformed files are rejected with the byte offset.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace fq::data
