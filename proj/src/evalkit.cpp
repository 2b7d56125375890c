#include "freqflow/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "freqflow/kernels.hpp"
#include "freqflow/rng.hpp"
#include "freqflow/sampler.hpp"
#include "freqflow/spectral.hpp"

namespace fq::eval {

using diff::Tensor;

namespace {

double l2_diff(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc = std::fma(d, d, acc);
    }
    return std::sqrt(acc);
}

double l2_diff(const Tensor& x, const Tensor& y) { return l2_diff(x.vec(), y.vec()); }

std::vector<std::vector<double>> flatten_set(const std::vector<Tensor>& set,
                                             const char* side, size_t* numel) {
    if (set.empty())
        throw std::invalid_argument(std::string("energy_distance: empty ") + side +
                                    " set");
    std::vector<std::vector<double>> flat;
    flat.reserve(set.size());
    for (const Tensor& t : set) {
        if (*numel == 0) *numel = t.numel();
        if (t.numel() != *numel)
            throw std::invalid_argument(
                "energy_distance: chunks must share one element count");
        flat.push_back(t.vec());
    }
    return flat;
}

// Mean pairwise distance accumulated in row-major order of (outer, inner).
double cross_mean(const std::vector<std::vector<double>>& outer,
                  const std::vector<std::vector<double>>& inner) {
    double acc = 0.0;
    for (const auto& x : outer)
        for (const auto& y : inner) acc += l2_diff(x, y);
    return acc / (double(outer.size()) * double(inner.size()));
}

// Argument-order-independent choice of which set leads the cross-term loop,
// so energy_distance(a, b) and energy_distance(b, a) accumulate identically.
bool a_leads(const std::vector<std::vector<double>>& a,
             const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < a[i].size(); ++j) {
            if (a[i][j] < b[i][j]) return true;
            if (a[i][j] > b[i][j]) return false;
        }
    return true;  // identical contents: either order accumulates the same sum
}

}  // namespace

double energy_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    size_t numel = 0;
    const auto fa = flatten_set(a, "first", &numel);
    const auto fb = flatten_set(b, "second", &numel);
    const double cross =
        a_leads(fa, fb) ? cross_mean(fa, fb) : cross_mean(fb, fa);
    const double self_a = cross_mean(fa, fa);
    const double self_b = cross_mean(fb, fb);
    return 2.0 * cross - (self_a + self_b);
}

ModeMetrics mode_metrics(const std::vector<ModeSet>& sets, double eps) {
    if (sets.empty()) throw std::invalid_argument("mode_metrics: no observation sets");
    if (!(eps > 0.0)) throw std::invalid_argument("mode_metrics: eps must be positive");
    size_t total = 0, cov0 = 0, cov1 = 0, collapsed = 0;
    for (const ModeSet& set : sets) {
        if (set.mode0.shape() != set.mode1.shape())
            throw std::invalid_argument("mode_metrics: mode chunks must share a shape");
        std::vector<double> avg = set.mode0.vec();
        const std::vector<double>& m1 = set.mode1.vec();
        for (size_t i = 0; i < avg.size(); ++i) avg[i] = 0.5 * (avg[i] + m1[i]);
        for (const Tensor& s : set.samples) {
            if (s.shape() != set.mode0.shape())
                throw std::invalid_argument(
                    "mode_metrics: sample shape does not match the mode chunks");
            ++total;
            const double d0 = l2_diff(s, set.mode0);
            const double d1 = l2_diff(s, set.mode1);
            if (std::min(d0, d1) <= eps) (d0 <= d1 ? ++cov0 : ++cov1);
            if (l2_diff(s.vec(), avg) <= eps) ++collapsed;
        }
    }
    if (total == 0) throw std::invalid_argument("mode_metrics: no samples");
    ModeMetrics m;
    m.coverage = double(cov0 + cov1) / double(total);
    const size_t hi = std::max(cov0, cov1);
    m.balance = hi == 0 ? 0.0 : double(std::min(cov0, cov1)) / double(hi);
    m.collapse_rate = double(collapsed) / double(total);
    return m;
}

std::vector<ModeSet> dataset_mode_sets(const data::Dataset& ds) {
    if (ds.episodes.empty())
        throw std::invalid_argument("dataset_mode_sets: empty dataset");
    std::vector<ModeSet> sets;
    sets.reserve(ds.episodes.size());
    for (const data::Episode& ep : ds.episodes) {
        std::vector<Tensor> modes = data::expert_chunks(ds.task, ep.obs, ds.horizon);
        if (modes.size() < 2)
            throw std::invalid_argument(
                std::string("dataset_mode_sets: task '") + data::task_name(ds.task) +
                "' has a single expert mode and no mode labels to cover");
        ModeSet set;
        set.mode0 = data::normalize(modes[0], ds.stats);
        set.mode1 = data::normalize(modes[1], ds.stats);
        set.samples.push_back(data::normalize(ep.chunk, ds.stats));
        sets.push_back(std::move(set));
    }
    return sets;
}

RolloutResult rollout(const EnvConfig& env, const ChunkSampler& sampler,
                      const data::NormStats& stats, size_t exec_horizon,
                      uint64_t seed) {
    if (exec_horizon == 0)
        throw std::invalid_argument("rollout: exec_horizon must be at least 1");
    const std::array<double, 2> g = env.goal;
    const std::array<double, 2> c{0.5 * g[0], 0.5 * g[1]};
    std::array<double, 2> p{0.0, 0.0};
    RolloutResult res;
    res.trajectory.push_back(p);
    auto dist2 = [](const std::array<double, 2>& u, const std::array<double, 2>& v) {
        return std::hypot(u[0] - v[0], u[1] - v[1]);
    };
    uint64_t plan = 0;
    while (res.steps < env.max_steps) {
        const std::vector<double> obs{g[0] - p[0], g[1] - p[1]};
        const Tensor chunk_n = sampler(obs, rng::derive(seed, plan++));
        if (chunk_n.ndim() != 2 || chunk_n.dim(1) != 2)
            throw std::invalid_argument("rollout: sampler must return an H x 2 chunk");
        const size_t H = chunk_n.dim(0);
        if (exec_horizon > H)
            throw std::invalid_argument(
                "rollout: exec_horizon exceeds the chunk horizon");
        const Tensor chunk = data::denormalize(chunk_n, stats);
        double prev0 = 0.0, prev1 = 0.0;  // waypoints are relative to current p
        for (size_t h = 0; h < exec_horizon && res.steps < env.max_steps; ++h) {
            p[0] += chunk.at(h, 0) - prev0;
            p[1] += chunk.at(h, 1) - prev1;
            prev0 = chunk.at(h, 0);
            prev1 = chunk.at(h, 1);
            ++res.steps;
            res.trajectory.push_back(p);
            if (env.obstacle && dist2(p, c) <= env.obstacle_radius) {
                res.collided = true;
                return res;
            }
            if (dist2(p, g) <= env.success_radius) {
                res.success = true;
                return res;
            }
        }
    }
    return res;
}

ChunkSampler model_sampler(const policy::VelocityModel& model, size_t nfe) {
    if (nfe == 0) throw std::invalid_argument("model_sampler: nfe must be at least 1");
    return [model, nfe](const std::vector<double>& obs, uint64_t seed) {
        return sample::euler_sample(model, obs, nfe, seed).final();
    };
}

SpectrumReport spectrum_report(const std::vector<Tensor>& chunks) {
    if (chunks.empty())
        throw std::invalid_argument("spectrum_report: empty chunk set");
    if (chunks.front().ndim() != 2)
        throw std::invalid_argument("spectrum_report: chunks must be H x D");
    const size_t H = chunks.front().dim(0);
    const size_t D = chunks.front().dim(1);
    SpectrumReport rep;
    rep.horizon = H;
    rep.dims = D;
    rep.mean_abs.assign(D, std::vector<double>(H, 0.0));
    rep.energy.assign(D, std::vector<double>(H, 0.0));
    std::vector<double> col(H);
    for (const Tensor& chunk : chunks) {
        if (chunk.ndim() != 2 || chunk.dim(0) != H || chunk.dim(1) != D)
            throw std::invalid_argument("spectrum_report: chunks must share a shape");
        for (size_t d = 0; d < D; ++d) {
            for (size_t h = 0; h < H; ++h) col[h] = chunk.at(h, d);
            const std::vector<double> f = spectral::dct2(col);
            for (size_t k = 0; k < H; ++k) {
                rep.mean_abs[d][k] += std::abs(f[k]);
                rep.energy[d][k] += f[k] * f[k];
            }
        }
    }
    const double n = double(chunks.size());
    for (size_t d = 0; d < D; ++d) {
        double total = 0.0;
        for (size_t k = 0; k < H; ++k) {
            rep.mean_abs[d][k] /= n;
            rep.energy[d][k] /= n;
            total += rep.energy[d][k];
        }
        const double off = total - rep.energy[d][0];
        rep.offband_share.push_back(total > 0.0 ? off / total : 0.0);
        rep.non_stationary.push_back(rep.offband_share.back() > 0.20);
    }
    return rep;
}

std::string spectrum_csv(const SpectrumReport& rep) {
    std::string out = "k,dim,mean_abs_coeff\n";
    char line[96];
    for (size_t k = 0; k < rep.horizon; ++k)
        for (size_t d = 0; d < rep.dims; ++d) {
            std::snprintf(line, sizeof line, "%zu,%zu,%.17g\n", k, d,
                          rep.mean_abs[d][k]);
            out += line;
        }
    return out;
}

std::string hardware_descriptor() {
    std::string model = "unknown cpu";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        const auto colon = line.find(':');
        if (line.rfind("model name", 0) == 0 && colon != std::string::npos) {
            const auto start = line.find_first_not_of(" \t", colon + 1);
            if (start != std::string::npos) model = line.substr(start);
            break;
        }
    }
    return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
           " hardware threads, " + kern::active().name + " kernels";
}

SpeedReport speed_benchmark(const policy::VelocityModel& model,
                            const Tensor& obs_rows,
                            const std::vector<size_t>& nfe_list,
                            size_t samples_per_run, size_t repetitions) {
    if (samples_per_run < 100)
        throw std::invalid_argument(
            "speed_benchmark: needs at least 100 samples per run");
    if (repetitions == 0)
        throw std::invalid_argument("speed_benchmark: needs at least 1 repetition");
    if (nfe_list.empty())
        throw std::invalid_argument("speed_benchmark: empty NFE list");
    if (obs_rows.ndim() != 2 || obs_rows.dim(0) == 0 ||
        obs_rows.dim(1) != model.dims.obs_dim)
        throw std::invalid_argument("speed_benchmark: obs_rows must be B x obs_dim");

    const size_t O = model.dims.obs_dim;
    Tensor batch({samples_per_run, O});
    std::vector<uint64_t> seeds(samples_per_run);
    for (size_t i = 0; i < samples_per_run; ++i) {
        const size_t src = i % obs_rows.dim(0);
        for (size_t j = 0; j < O; ++j)
            batch.mutable_data()[i * O + j] = obs_rows.at(src, j);
        seeds[i] = rng::derive(0x5eedbe4c, i);
    }

    const policy::BatchField field = policy::model_field(model);
    SpeedReport rep;
    rep.samples_per_run = samples_per_run;
    rep.repetitions = repetitions;
    rep.hardware = hardware_descriptor();
    for (size_t nfe : nfe_list) {
        if (nfe == 0)
            throw std::invalid_argument("speed_benchmark: nfe must be at least 1");
        sample::euler_batch(field, model.dims, batch, nfe, seeds);  // warm-up
        std::vector<double> rates;
        rates.reserve(repetitions);
        for (size_t r = 0; r < repetitions; ++r) {
            const auto start = std::chrono::steady_clock::now();
            sample::euler_batch(field, model.dims, batch, nfe, seeds);
            const std::chrono::duration<double> dt =
                std::chrono::steady_clock::now() - start;
            rates.push_back(double(samples_per_run) / std::max(dt.count(), 1e-12));
        }
        std::sort(rates.begin(), rates.end());
        rep.entries.push_back({nfe, rates[rates.size() / 2]});
    }
    return rep;
}

EvalResult evaluate_model(const policy::VelocityModel& model,
                          const data::NormStats& stats, data::Task task,
                          const EvalConfig& cfg) {
    if (cfg.n_obs == 0)
        throw std::invalid_argument("evaluate_model: needs observations");
    const data::Dataset held_out = data::gen_dataset(task, cfg.n_obs, cfg.seed);
    return evaluate_episodes(model, stats, task, held_out.episodes, cfg);
}

EvalResult evaluate_episodes(const policy::VelocityModel& model,
                             const data::NormStats& stats, data::Task task,
                             const std::vector<data::Episode>& episodes,
                             const EvalConfig& cfg) {
    if (episodes.empty() || cfg.samples_per_obs == 0)
        throw std::invalid_argument(
            "evaluate_episodes: needs observations and samples");
    if (cfg.nfe == 0)
        throw std::invalid_argument("evaluate_episodes: nfe must be at least 1");
    const data::TaskSpec spec = data::task_spec(task);
    const policy::Dims& dims = model.dims;
    if (dims.obs_dim != spec.obs_dim || dims.action_dim != spec.action_dim ||
        dims.horizon != spec.horizon)
        throw std::invalid_argument(
            "evaluate_episodes: model dimensions do not match the task");

    const size_t n_obs = episodes.size();
    const size_t B = n_obs * cfg.samples_per_obs;
    const size_t O = spec.obs_dim;
    Tensor obs({B, O});
    std::vector<uint64_t> seeds(B);
    for (size_t i = 0; i < n_obs; ++i) {
        if (episodes[i].obs.size() != O)
            throw std::invalid_argument(
                "evaluate_episodes: observation size does not match the task");
        for (size_t j = 0; j < cfg.samples_per_obs; ++j) {
            const size_t row = i * cfg.samples_per_obs + j;
            for (size_t k = 0; k < O; ++k)
                obs.mutable_data()[row * O + k] = episodes[i].obs[k];
            seeds[row] = rng::derive(cfg.seed, row + 1);
        }
    }
    const Tensor finals = sample::euler_batch(policy::model_field(model), dims, obs,
                                              cfg.nfe, seeds);

    const size_t HD = dims.chunk_numel();
    EvalResult res;
    res.n_obs = n_obs;
    res.samples_per_obs = cfg.samples_per_obs;
    double ed_acc = 0.0;
    size_t within = 0;
    std::vector<ModeSet> mode_sets;
    for (size_t i = 0; i < n_obs; ++i) {
        std::vector<Tensor> experts =
            data::expert_chunks(task, episodes[i].obs, spec.horizon);
        for (Tensor& e : experts) e = data::normalize(e, stats);
        std::vector<Tensor> samples;
        samples.reserve(cfg.samples_per_obs);
        for (size_t j = 0; j < cfg.samples_per_obs; ++j) {
            const size_t row = i * cfg.samples_per_obs + j;
            std::vector<double> flat(HD);
            for (size_t k = 0; k < HD; ++k) flat[k] = finals.at(row, k);
            samples.emplace_back(
                std::vector<size_t>{spec.horizon, spec.action_dim}, std::move(flat));
            double best = l2_diff(samples.back(), experts[0]);
            for (size_t m = 1; m < experts.size(); ++m)
                best = std::min(best, l2_diff(samples.back(), experts[m]));
            if (best <= cfg.accuracy_radius) ++within;
        }
        ed_acc += energy_distance(samples, experts);
        if (experts.size() >= 2) {
            ModeSet set;
            set.mode0 = experts[0];
            set.mode1 = experts[1];
            set.samples = std::move(samples);
            mode_sets.push_back(std::move(set));
        }
    }
    res.energy_distance = ed_acc / double(n_obs);
    res.within_accuracy = double(within) / double(B);
    if (!mode_sets.empty()) {
        res.has_modes = true;
        res.modes = mode_metrics(mode_sets, cfg.eps);
    }
    return res;
}

double mean_straightness(const policy::VelocityModel& model,
                         const std::vector<std::vector<double>>& obs_list,
                         size_t n_steps, uint64_t seed) {
    if (obs_list.empty())
        throw std::invalid_argument("mean_straightness: empty observation list");
    double acc = 0.0;
    for (size_t i = 0; i < obs_list.size(); ++i) {
        const sample::SampleTrace trace =
            sample::euler_sample(model, obs_list[i], n_steps, rng::derive(seed, i));
        acc += sample::straightness(trace);
    }
    return acc / double(obs_list.size());
}

namespace {

void check_rate(const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(std::string("metrics: ") + name +
                                    " must lie in [0,1]");
}

void check_report(const MetricsReport& rep) {
    if (!(rep.energy_distance >= 0.0))
        throw std::invalid_argument("metrics: energy_distance must be non-negative");
    if (!(rep.straightness >= 0.0))
        throw std::invalid_argument("metrics: straightness must be non-negative");
    check_rate("mode_coverage", rep.mode_coverage);
    check_rate("mode_balance", rep.mode_balance);
    check_rate("collapse_rate", rep.collapse_rate);
    check_rate("success_rate", rep.success_rate);
}

}  // namespace

std::string metrics_json(const MetricsReport& rep) {
    check_report(rep);
    nlohmann::json j;
    j["energy_distance"] = rep.energy_distance;
    j["mode_coverage"] = rep.mode_coverage;
    j["mode_balance"] = rep.mode_balance;
    j["collapse_rate"] = rep.collapse_rate;
    j["straightness"] = rep.straightness;
    j["success_rate"] = rep.success_rate;
    j["throughput"] = nlohmann::json::array();
    for (const ThroughputEntry& e : rep.throughput)
        j["throughput"].push_back(
            {{"nfe", e.nfe}, {"chunks_per_second", e.chunks_per_second}});
    return j.dump(2) + "\n";
}

std::string metrics_csv(const MetricsReport& rep) {
    check_report(rep);
    std::string out = "metric,value\n";
    char line[96];
    auto row = [&](const std::string& name, double v) {
        std::snprintf(line, sizeof line, "%s,%.17g\n", name.c_str(), v);
        out += line;
    };
    row("energy_distance", rep.energy_distance);
    row("mode_coverage", rep.mode_coverage);
    row("mode_balance", rep.mode_balance);
    row("collapse_rate", rep.collapse_rate);
    row("straightness", rep.straightness);
    row("success_rate", rep.success_rate);
    for (const ThroughputEntry& e : rep.throughput)
        row("throughput_nfe" + std::to_string(e.nfe), e.chunks_per_second);
    return out;
}

}  // namespace fq::eval
