#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "freqflow/policynet.hpp"
#include "freqflow/synthdata.hpp"
#include "freqflow/tensor.hpp"

// Quantitative evaluation: distributional distance between chunk sets, mode
// coverage for the bimodal task, closed-loop rollouts in a planar point-mass
// world, per-dimension spectral profiles, and NFE throughput benchmarks.
namespace fq::eval {

// Energy distance 2 E||a-b|| - E||a-a'|| - E||b-b'|| over flattened chunks,
// with full pairwise means (self-pairs included, brute force). Exactly
// symmetric in its arguments and exactly 0 on identical sets. Both sets must
// be non-empty and share one element count.
double energy_distance(const std::vector<diff::Tensor>& a,
                       const std::vector<diff::Tensor>& b);

struct ModeMetrics {
    double coverage = 0.0;       // fraction of samples within eps of either mode
    double balance = 0.0;        // min/max share among covered samples
    double collapse_rate = 0.0;  // fraction within eps of the modes' average
};

// Generated samples for one observation next to that observation's two expert
// mode chunks, all in normalized action space.
struct ModeSet {
    diff::Tensor mode0;
    diff::Tensor mode1;
    std::vector<diff::Tensor> samples;
};

// Distances are l2 over flattened normalized chunks; a covered sample counts
// toward its nearer mode. eps must be positive; the default 0.1 sits well
// below half the inter-mode separation.
ModeMetrics mode_metrics(const std::vector<ModeSet>& sets, double eps);

// Per-episode ModeSets for a two-mode dataset: each episode's own normalized
// chunk becomes the sample next to the expert chunks for its observation.
// Tasks with a single expert mode are rejected.
std::vector<ModeSet> dataset_mode_sets(const data::Dataset& ds);

// Planar point mass at p (origin start) driven by per-step displacements.
// A circular obstacle sits halfway to the goal; the episode ends on success
// (within success_radius of the goal), collision (within obstacle_radius of
// the obstacle center), or after max_steps.
struct EnvConfig {
    std::array<double, 2> goal{0.0, 0.0};
    bool obstacle = true;  // centered at goal/2 when enabled
    double obstacle_radius = 0.12;
    double success_radius = 0.08;
    size_t max_steps = 64;
};

// Produces one normalized H x 2 chunk for the given observation; the seed
// changes per replanning round.
using ChunkSampler =
    std::function<diff::Tensor(const std::vector<double>& obs, uint64_t seed)>;

struct RolloutResult {
    bool success = false;
    bool collided = false;
    size_t steps = 0;
    std::vector<std::array<double, 2>> trajectory;  // visited positions, start included
};

// Closed loop: observe goal - p, sample a chunk, denormalize it, and execute
// its first exec_horizon rows. Rows are cumulative waypoints relative to the
// current position, so the executed displacement at row h is row_h - row_{h-1}
// (row_{-1} = 0) and a fully executed expert chunk lands on the goal in one
// plan. Replanning seeds derive from (seed, plan index).
RolloutResult rollout(const EnvConfig& env, const ChunkSampler& sampler,
                      const data::NormStats& stats, size_t exec_horizon,
                      uint64_t seed);

// Chunk sampler that integrates the model's field with nfe Euler steps from
// seeded noise.
ChunkSampler model_sampler(const policy::VelocityModel& model, size_t nfe);

// Per-dimension frequency profile of a chunk set: mean absolute coefficient
// and mean squared coefficient (energy) per wavenumber. A dimension is
// non-stationary when the energy outside k=0 exceeds 20% of its total.
struct SpectrumReport {
    size_t horizon = 0;
    size_t dims = 0;
    std::vector<std::vector<double>> mean_abs;  // [dim][k]
    std::vector<std::vector<double>> energy;    // [dim][k], mean squared coefficient
    std::vector<double> offband_share;          // per dim, energy at k>=1 over total
    std::vector<bool> non_stationary;           // per dim, offband_share > 0.20
};

SpectrumReport spectrum_report(const std::vector<diff::Tensor>& chunks);

// Flat CSV with header "k,dim,mean_abs_coeff", wavenumber-major.
std::string spectrum_csv(const SpectrumReport& rep);

struct ThroughputEntry {
    size_t nfe = 0;
    double chunks_per_second = 0.0;
};

struct SpeedReport {
    std::vector<ThroughputEntry> entries;  // one per requested NFE, input order
    size_t samples_per_run = 0;
    size_t repetitions = 0;
    std::string hardware;
};

// One-worker wall-clock throughput of batched sampling. Each setting gets one
// untimed warm-up run, then `repetitions` timed runs of samples_per_run chunks
// (cycling the provided observation rows); the reported number is the median.
// samples_per_run must be at least 100.
SpeedReport speed_benchmark(const policy::VelocityModel& model,
                            const diff::Tensor& obs_rows,
                            const std::vector<size_t>& nfe_list,
                            size_t samples_per_run = 128, size_t repetitions = 5);

// CPU model, hardware thread count, and the active kernel backend.
std::string hardware_descriptor();

// Conditional evaluation protocol: freshly drawn held-out observations, a
// fixed number of sampled chunks per observation, and per-observation
// comparison against the expert chunks for that same observation (normalized
// space throughout). energy_distance is the mean of per-observation values.
struct EvalConfig {
    size_t n_obs = 64;
    size_t samples_per_obs = 16;
    size_t nfe = 1;
    uint64_t seed = 0;            // held-out draws and sampling noise
    double eps = 0.1;             // mode-coverage radius
    double accuracy_radius = 0.05;  // "sample matches an expert chunk" radius
};

struct EvalResult {
    double energy_distance = 0.0;
    double within_accuracy = 0.0;  // fraction of samples within accuracy_radius
                                   // of the nearest expert chunk
    bool has_modes = false;        // mode metrics only exist for two-mode tasks
    ModeMetrics modes;
    size_t n_obs = 0;
    size_t samples_per_obs = 0;
};

// Draws cfg.n_obs fresh held-out observations from the task generator.
EvalResult evaluate_model(const policy::VelocityModel& model,
                          const data::NormStats& stats, data::Task task,
                          const EvalConfig& cfg);

// Same protocol over caller-provided episodes (their observations become the
// held-out set; cfg.n_obs is ignored in favor of the episode count).
EvalResult evaluate_episodes(const policy::VelocityModel& model,
                             const data::NormStats& stats, data::Task task,
                             const std::vector<data::Episode>& episodes,
                             const EvalConfig& cfg);

// Mean flow straightness over one sampled trace per observation; per-trace
// seeds derive from (seed, trace index).
double mean_straightness(const policy::VelocityModel& model,
                         const std::vector<std::vector<double>>& obs_list,
                         size_t n_steps, uint64_t seed);

// Roll-up of the headline numbers, emitted as JSON (keys match field names)
// and flat CSV. Rates must lie in [0,1]; distances must be non-negative.
struct MetricsReport {
    double energy_distance = 0.0;
    double mode_coverage = 0.0;
    double mode_balance = 0.0;
    double collapse_rate = 0.0;
    double straightness = 0.0;
    double success_rate = 0.0;
    std::vector<ThroughputEntry> throughput;
};

std::string metrics_json(const MetricsReport& rep);
std::string metrics_csv(const MetricsReport& rep);

}  // namespace fq::eval
