#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freqflow/flowloss.hpp"
#include "freqflow/policynet.hpp"
#include "freqflow/spectral.hpp"
#include "freqflow/synthdata.hpp"

// The optimization loop: bias-corrected Adam, optional parameter EMA,
// FQPC checkpoint persistence, and fully seed-deterministic training runs.
namespace fq::train {

struct TrainConfig {
    data::Task task = data::Task::reach;
    std::string dataset;     // FQPD path (required)
    std::string checkpoint;  // FQPC output path (required)
    spectral::SimMode mode = spectral::SimMode::freq_adaptive;
    double lambda = 1.0;
    uint64_t steps = 5000;
    size_t batch_size = 128;
    double learning_rate = 5e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    double ema_decay = 0.999;  // 0 disables the EMA copy
    uint64_t eval_every = 0;   // 0: final checkpoint only; else periodic snapshots
    loss::DetachPolicy detach = loss::DetachPolicy::detach_larger;
    loss::TimeSampling time_sampling = loss::TimeSampling::uniform;
    size_t band_cutoff = 0;  // 0 -> default for the task horizon
    // Network size knobs (desk-scale defaults).
    size_t hidden_width = 256;
    size_t depth = 4;
    size_t time_embed_dim = 32;
};

// Strict JSON object whose keys mirror the TrainConfig field names exactly:
// unknown keys are rejected, `task`, `dataset`, and `checkpoint` are
// required, everything else falls back to the defaults above. Enums are
// spelled as strings ("freq_adaptive", "detach_larger", "uniform" | "beta").
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::string& path);
// Canonical serialization; parse_config(config_json(c)) reproduces c exactly.
std::string config_json(const TrainConfig& cfg);

policy::Dims config_dims(const TrainConfig& cfg);

// Adam first/second moments, one pair per parameter blob in declaration order.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};
AdamState zero_adam_state(const policy::VelocityModel& model);

// One bias-corrected Adam update over every blob (step_index >= 1):
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m/(1-b1^step)) / (sqrt(v/(1-b2^step)) + eps)
// Parameter buffers are replaced, never mutated in place, so tensors already
// recorded on a tape keep their values. Rejects non-finite gradients naming
// the offending parameter.
void adam_step(policy::VelocityModel& model, const std::vector<diff::Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps,
               uint64_t step_index);

// ema <- decay*ema + (1-decay)*theta elementwise; requires 0 <= decay < 1 and
// matching blob names/shapes. Buffers are replaced, not mutated.
void ema_update(policy::VelocityModel& ema, const policy::VelocityModel& model,
                double decay);

// On-disk training state. Parameters (and moments) are stored as f32, so a
// round-trip quantizes them; config and step round-trip exactly. Optimizer
// moments ride along because resuming must reproduce the uninterrupted loss
// sequence, which fresh moments would not.
struct Checkpoint {
    TrainConfig config;
    data::NormStats stats;
    policy::VelocityModel model;
    bool has_ema = false;
    policy::VelocityModel ema;
    bool has_opt = false;
    AdamState opt;
    uint64_t step = 0;       // completed optimization steps
    uint64_t rng_state = 0;  // config seed; step streams derive from (seed, step)
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct StepLog {
    uint64_t step = 0;
    loss::LossBreakdown loss;
};

// Runs the loop: per step draw a batch (seeded shuffle), compute the total
// loss, backprop, Adam update, optional EMA update. Loss components are
// appended per step to CSV `<checkpoint>.loss.csv`; every `eval_every`
// completed steps the state is saved to the checkpoint path plus a snapshot
// copy `<checkpoint>.step<k>`; the final state is saved at the end. With
// `resume` the checkpoint path is loaded and training continues from its
// step (never automatic). A non-finite loss aborts before logging or
// updating, retaining the last saved checkpoint. Deterministic in the
// config: repeated runs produce byte-identical logs and checkpoints.
Checkpoint run_training(const TrainConfig& cfg, bool resume = false,
                        std::vector<StepLog>* log_out = nullptr);

}  // namespace fq::train
