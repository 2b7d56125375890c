#include "freqflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "freqflow/evalkit.hpp"
#include "freqflow/policynet.hpp"
#include "freqflow/rng.hpp"
#include "freqflow/sampler.hpp"
#include "freqflow/synthdata.hpp"
#include "freqflow/tensor.hpp"
#include "freqflow/trainer.hpp"

namespace fq::cli {

using diff::Tensor;

namespace {

// Scoring and sampling use the averaged parameters whenever the checkpoint
// carries them; the raw parameters are the training-time view.
const policy::VelocityModel& scoring_params(const train::Checkpoint& ck) {
    return ck.has_ema ? ck.ema : ck.model;
}

void write_text(const std::string& path, const std::string& text, const char* cmd) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(std::string(cmd) + ": cannot open " + path);
    f << text;
    f.flush();
    if (!f) throw std::runtime_error(std::string(cmd) + ": write failed for " + path);
}

// Sibling CSV path for a JSON report: swap a .json suffix, else append .csv.
std::string csv_sibling(const std::string& json_path) {
    const std::string suffix = ".json";
    if (json_path.size() > suffix.size() &&
        json_path.compare(json_path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return json_path.substr(0, json_path.size() - suffix.size()) + ".csv";
    return json_path + ".csv";
}

// Dimension-by-dimension comparison so a mismatch names the offending field.
void check_dataset_matches(const data::Dataset& ds, const train::TrainConfig& cfg,
                           const char* cmd) {
    const data::TaskSpec spec = data::task_spec(cfg.task);
    auto mismatch = [&](const char* field, size_t got, size_t want) {
        throw std::runtime_error(std::string(cmd) + ": dataset " + field + " " +
                                 std::to_string(got) + " does not match checkpoint " +
                                 field + " " + std::to_string(want));
    };
    if (ds.obs_dim != spec.obs_dim) mismatch("obs_dim", ds.obs_dim, spec.obs_dim);
    if (ds.action_dim != spec.action_dim)
        mismatch("action_dim", ds.action_dim, spec.action_dim);
    if (ds.horizon != spec.horizon) mismatch("horizon", ds.horizon, spec.horizon);
    if (ds.task != cfg.task)
        throw std::runtime_error(std::string(cmd) + ": dataset task '" +
                                 data::task_name(ds.task) +
                                 "' does not match checkpoint task '" +
                                 data::task_name(cfg.task) + "'");
}

std::vector<std::vector<double>> load_obs_file(const std::string& path,
                                               size_t obs_dim) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("sample: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("sample: " + path + " is not valid JSON (" +
                                 e.what() + ")");
    }
    if (!j.is_array() || j.empty())
        throw std::runtime_error("sample: " + path +
                                 " must hold a non-empty JSON array of observations");
    std::vector<std::vector<double>> obs;
    obs.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        const auto& row = j[i];
        if (!row.is_array() || row.size() != obs_dim)
            throw std::runtime_error("sample: observation " + std::to_string(i) +
                                     " in " + path + " must hold " +
                                     std::to_string(obs_dim) + " numbers");
        std::vector<double> v(obs_dim);
        for (size_t k = 0; k < obs_dim; ++k) {
            if (!row[k].is_number())
                throw std::runtime_error("sample: observation " + std::to_string(i) +
                                         " in " + path + " must hold " +
                                         std::to_string(obs_dim) + " numbers");
            v[k] = row[k].get<double>();
        }
        obs.push_back(std::move(v));
    }
    return obs;
}

std::vector<size_t> parse_nfe_list(const std::string& text) {
    std::vector<size_t> out;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t comma = std::min(text.find(',', pos), text.size());
        const std::string tok = text.substr(pos, comma - pos);
        size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || tok.empty() || v == 0)
            throw std::runtime_error("bench: bad NFE list entry '" + tok + "'");
        out.push_back(size_t(v));
        pos = comma + 1;
        if (comma == text.size()) break;
    }
    if (out.empty()) throw std::runtime_error("bench: empty NFE list");
    return out;
}

// Goal draw matching each task's generator support.
std::array<double, 2> draw_goal(data::Task task, uint64_t seed) {
    rng::Prng prng(seed);
    double gx = 0.0, gy = 0.0;
    do {
        gx = 2.0 * prng.uniform() - 1.0;
        gy = 2.0 * prng.uniform() - 1.0;
    } while (task == data::Task::bimodal && std::hypot(gx, gy) < 0.5);
    return {gx, gy};
}

int cmd_gen_data(const std::string& task_name, uint64_t n, uint64_t seed,
                 const std::string& out_path, std::ostream& out) {
    const data::Dataset ds = data::gen_dataset(data::parse_task(task_name), n, seed);
    data::write_dataset(ds, out_path);
    out << "wrote " << out_path << ": " << ds.episodes.size() << " episodes of task "
        << data::task_name(ds.task) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, bool resume, std::ostream& out) {
    const train::TrainConfig cfg = train::load_config(config_path);
    std::vector<train::StepLog> log;
    const train::Checkpoint ck = train::run_training(cfg, resume, &log);
    out << "trained to step " << ck.step;
    if (!log.empty()) out << ", final total loss " << log.back().loss.total;
    out << " -> " << cfg.checkpoint << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& obs_file,
               const std::string& dataset, size_t nfe, size_t n, uint64_t seed,
               const std::string& out_path, std::ostream& out) {
    if (obs_file.empty() == dataset.empty())
        throw std::runtime_error(
            "sample: provide exactly one of --obs-file or --dataset");
    if (n == 0) throw std::runtime_error("sample: --n must be at least 1");
    const train::Checkpoint ck = train::load_checkpoint(ckpt);
    const policy::VelocityModel& model = scoring_params(ck);
    const size_t O = model.dims.obs_dim;

    std::vector<std::vector<double>> obs_list;
    if (!dataset.empty()) {
        const data::Dataset ds = data::read_dataset(dataset);
        check_dataset_matches(ds, ck.config, "sample");
        for (const auto& ep : ds.episodes) obs_list.push_back(ep.obs);
    } else {
        obs_list = load_obs_file(obs_file, O);
    }

    const size_t B = obs_list.size() * n;
    Tensor obs({B, O});
    std::vector<uint64_t> seeds(B);
    for (size_t i = 0; i < obs_list.size(); ++i)
        for (size_t j = 0; j < n; ++j) {
            const size_t row = i * n + j;
            for (size_t k = 0; k < O; ++k)
                obs.mutable_data()[row * O + k] = obs_list[i][k];
            seeds[row] = rng::derive(seed, row);
        }
    const Tensor finals = sample::euler_batch(policy::model_field(model), model.dims,
                                              obs, nfe, seeds);

    const size_t H = model.dims.horizon;
    const size_t D = model.dims.action_dim;
    std::string csv = "sample,obs_index,h,d,value\n";
    char line[96];
    for (size_t i = 0; i < obs_list.size(); ++i)
        for (size_t j = 0; j < n; ++j) {
            const size_t row = i * n + j;
            std::vector<double> flat(H * D);
            for (size_t k = 0; k < H * D; ++k) flat[k] = finals.at(row, k);
            const Tensor chunk = data::denormalize(
                Tensor({H, D}, std::move(flat)), ck.stats);
            for (size_t h = 0; h < H; ++h)
                for (size_t d = 0; d < D; ++d) {
                    std::snprintf(line, sizeof line, "%zu,%zu,%zu,%zu,%.17g\n", j, i,
                                  h, d, chunk.at(h, d));
                    csv += line;
                }
        }
    write_text(out_path, csv, "sample");
    out << "wrote " << out_path << ": " << B << " chunks (" << obs_list.size()
        << " observations x " << n << " samples, nfe " << nfe << ")\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset, size_t nfe,
             uint64_t seed, const std::string& out_report, std::ostream& out) {
    const train::Checkpoint ck = train::load_checkpoint(ckpt);
    const data::Dataset ds = data::read_dataset(dataset);
    check_dataset_matches(ds, ck.config, "eval");
    const policy::VelocityModel& model = scoring_params(ck);

    eval::EvalConfig ecfg;
    ecfg.samples_per_obs = 16;
    ecfg.nfe = nfe;
    ecfg.seed = seed;
    const size_t n_obs = std::min<size_t>(64, ds.episodes.size());
    const std::vector<data::Episode> held(ds.episodes.begin(),
                                          ds.episodes.begin() + n_obs);
    const eval::EvalResult r =
        eval::evaluate_episodes(model, ck.stats, ck.config.task, held, ecfg);

    // Straightness probes the learned flow with 8-segment traces; one-segment
    // traces are their own chord and always score 0.
    std::vector<std::vector<double>> probe_obs;
    for (size_t i = 0; i < std::min<size_t>(16, n_obs); ++i)
        probe_obs.push_back(held[i].obs);
    const double straight =
        eval::mean_straightness(model, probe_obs, 8, rng::derive(seed, 0x57f1));

    eval::MetricsReport rep;
    rep.energy_distance = r.energy_distance;
    rep.mode_coverage = r.modes.coverage;
    rep.mode_balance = r.modes.balance;
    rep.collapse_rate = r.modes.collapse_rate;
    rep.straightness = straight;
    rep.success_rate = 0.0;  // measured by the rollout command
    write_text(out_report, eval::metrics_json(rep), "eval");
    write_text(csv_sibling(out_report), eval::metrics_csv(rep), "eval");
    out << "energy_distance " << r.energy_distance << ", within_accuracy "
        << r.within_accuracy << ", mode_coverage " << r.modes.coverage
        << ", straightness " << straight << " -> " << out_report << "\n";
    return 0;
}

int cmd_rollout(const std::string& ckpt, size_t n_trials, size_t nfe,
                size_t exec_horizon, uint64_t seed, const std::string& out_report,
                std::ostream& out) {
    if (n_trials == 0) throw std::runtime_error("rollout: --n-trials must be positive");
    const train::Checkpoint ck = train::load_checkpoint(ckpt);
    const data::TaskSpec spec = data::task_spec(ck.config.task);
    if (spec.obs_dim != 2 || spec.action_dim != 2)
        throw std::runtime_error(std::string("rollout: task '") +
                                 data::task_name(ck.config.task) +
                                 "' is not a planar task");
    const eval::ChunkSampler sampler =
        eval::model_sampler(scoring_params(ck), nfe);

    size_t successes = 0, collisions = 0;
    for (size_t t = 0; t < n_trials; ++t) {
        eval::EnvConfig env;
        env.goal = draw_goal(ck.config.task, rng::derive(seed, 2 * t));
        const eval::RolloutResult res =
            eval::rollout(env, sampler, ck.stats, exec_horizon, rng::derive(seed, 2 * t + 1));
        successes += res.success ? 1 : 0;
        collisions += res.collided ? 1 : 0;
    }
    eval::MetricsReport rep;
    rep.success_rate = double(successes) / double(n_trials);
    write_text(out_report, eval::metrics_json(rep), "rollout");
    write_text(csv_sibling(out_report), eval::metrics_csv(rep), "rollout");
    out << "success_rate " << rep.success_rate << " (" << successes << "/" << n_trials
        << ", " << collisions << " collisions, nfe " << nfe << ") -> " << out_report
        << "\n";
    return 0;
}

std::vector<Tensor> load_sample_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("spectrum: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "sample,obs_index,h,d,value")
        throw std::runtime_error("spectrum: " + path +
                                 ":1: expected header sample,obs_index,h,d,value");
    std::map<std::pair<size_t, size_t>, std::map<std::pair<size_t, size_t>, double>>
        cells;
    size_t H = 0, D = 0, lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t s = 0, o = 0, h = 0, d = 0;
        double v = 0.0;
        int consumed = 0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%zu,%lf%n", &s, &o, &h, &d, &v,
                        &consumed) != 5 ||
            size_t(consumed) != line.size())
            throw std::runtime_error("spectrum: " + path + ":" +
                                     std::to_string(lineno) + ": malformed row");
        if (!cells[{o, s}].emplace(std::make_pair(h, d), v).second)
            throw std::runtime_error("spectrum: " + path + ":" +
                                     std::to_string(lineno) + ": duplicate cell");
        H = std::max(H, h + 1);
        D = std::max(D, d + 1);
    }
    if (cells.empty())
        throw std::runtime_error("spectrum: " + path + " holds no sample rows");
    std::vector<Tensor> chunks;
    chunks.reserve(cells.size());
    for (const auto& [key, grid] : cells) {
        if (grid.size() != H * D)
            throw std::runtime_error(
                "spectrum: incomplete chunk for obs_index " +
                std::to_string(key.first) + ", sample " + std::to_string(key.second));
        Tensor chunk({H, D});
        for (const auto& [hd, v] : grid)
            chunk.mutable_data()[hd.first * D + hd.second] = v;
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

int cmd_spectrum(const std::string& dataset, const std::string& samples,
                 const std::string& out_csv, std::ostream& out) {
    if (dataset.empty() == samples.empty())
        throw std::runtime_error(
            "spectrum: provide exactly one of --dataset or --samples");
    std::vector<Tensor> chunks;
    if (!dataset.empty()) {
        const data::Dataset ds = data::read_dataset(dataset);
        for (const auto& ep : ds.episodes) chunks.push_back(ep.chunk);
    } else {
        chunks = load_sample_csv(samples);
    }
    const eval::SpectrumReport rep = eval::spectrum_report(chunks);
    write_text(out_csv, eval::spectrum_csv(rep), "spectrum");
    out << "spectrum over " << chunks.size() << " chunks (H " << rep.horizon << ", D "
        << rep.dims << "):";
    for (size_t d = 0; d < rep.dims; ++d)
        out << " dim" << d << (rep.non_stationary[d] ? " non-stationary" : " stationary");
    out << " -> " << out_csv << "\n";
    return 0;
}

int cmd_bench(const std::string& ckpt, const std::string& nfe_list, uint64_t seed,
              size_t samples, const std::string& out_report, std::ostream& out) {
    const train::Checkpoint ck = train::load_checkpoint(ckpt);
    const std::vector<size_t> nfes = parse_nfe_list(nfe_list);
    const data::Dataset probe = data::gen_dataset(ck.config.task, 16, seed);
    const size_t O = data::task_spec(ck.config.task).obs_dim;
    Tensor obs({probe.episodes.size(), O});
    for (size_t i = 0; i < probe.episodes.size(); ++i)
        for (size_t k = 0; k < O; ++k)
            obs.mutable_data()[i * O + k] = probe.episodes[i].obs[k];
    const eval::SpeedReport rep =
        eval::speed_benchmark(scoring_params(ck), obs, nfes, samples, 5);

    nlohmann::json j;
    j["hardware"] = rep.hardware;
    j["samples_per_run"] = rep.samples_per_run;
    j["repetitions"] = rep.repetitions;
    j["throughput"] = nlohmann::json::array();
    for (const auto& e : rep.entries)
        j["throughput"].push_back(
            {{"nfe", e.nfe}, {"chunks_per_second", e.chunks_per_second}});
    write_text(out_report, j.dump(2) + "\n", "bench");
    out << "throughput:";
    for (const auto& e : rep.entries)
        out << " nfe" << e.nfe << "=" << e.chunks_per_second << "/s";
    out << " -> " << out_report << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"one-step action-chunk generation: data, training, evaluation"};
    app.name("freqflow");
    app.require_subcommand(1);

    std::string gen_task, gen_out;
    uint64_t gen_n = 0, gen_seed = 0;
    CLI::App* gen = app.add_subcommand("gen-data", "generate an expert dataset");
    gen->add_option("--task", gen_task, "reach|bimodal|gripper")->required();
    gen->add_option("--n", gen_n, "episode count")->required();
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("--out", gen_out, "output dataset path")->required();

    std::string train_config;
    bool train_resume = false;
    CLI::App* tr = app.add_subcommand("train", "train a velocity field");
    tr->add_option("--config", train_config, "JSON config path")->required();
    tr->add_flag("--resume", train_resume, "continue from the stored checkpoint");

    std::string smp_ckpt, smp_obs_file, smp_dataset, smp_out;
    size_t smp_nfe = 1, smp_n = 1;
    uint64_t smp_seed = 0;
    CLI::App* smp = app.add_subcommand("sample", "sample action chunks to CSV");
    smp->add_option("--ckpt", smp_ckpt, "checkpoint path")->required();
    smp->add_option("--obs-file", smp_obs_file, "JSON array of observations");
    smp->add_option("--dataset", smp_dataset, "take observations from a dataset");
    smp->add_option("--nfe", smp_nfe, "integration steps (default 1)");
    smp->add_option("--n", smp_n, "samples per observation (default 1)");
    smp->add_option("--seed", smp_seed, "sampling seed")->required();
    smp->add_option("--out", smp_out, "output CSV path")->required();

    std::string ev_ckpt, ev_dataset, ev_report;
    size_t ev_nfe = 1;
    uint64_t ev_seed = 1;
    CLI::App* ev = app.add_subcommand("eval", "conditional evaluation report");
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--dataset", ev_dataset, "held-out dataset path")->required();
    ev->add_option("--nfe", ev_nfe, "integration steps (default 1)");
    ev->add_option("--seed", ev_seed, "sampling seed (default 1)");
    ev->add_option("--out-report", ev_report, "JSON report path (CSV written beside)")
        ->required();

    std::string ro_ckpt, ro_report;
    size_t ro_trials = 100, ro_nfe = 1, ro_exec = 8;
    uint64_t ro_seed = 0;
    CLI::App* ro = app.add_subcommand("rollout", "closed-loop point-mass trials");
    ro->add_option("--ckpt", ro_ckpt, "checkpoint path")->required();
    ro->add_option("--n-trials", ro_trials, "trial count (default 100)");
    ro->add_option("--nfe", ro_nfe, "integration steps (default 1)");
    ro->add_option("--exec-horizon", ro_exec, "steps executed per plan (default 8)");
    ro->add_option("--seed", ro_seed, "trial seed")->required();
    ro->add_option("--out-report", ro_report, "JSON report path (CSV written beside)")
        ->required();

    std::string sp_dataset, sp_samples, sp_out;
    CLI::App* sp = app.add_subcommand("spectrum", "per-dimension frequency profile");
    sp->add_option("--dataset", sp_dataset, "dataset path");
    sp->add_option("--samples", sp_samples, "sample CSV path (from the sample command)");
    sp->add_option("--out-csv", sp_out, "output CSV path")->required();

    std::string be_ckpt, be_nfe_list, be_report;
    uint64_t be_seed = 1;
    size_t be_samples = 128;
    CLI::App* be = app.add_subcommand("bench", "sampling throughput per NFE");
    be->add_option("--ckpt", be_ckpt, "checkpoint path")->required();
    be->add_option("--nfe-list", be_nfe_list, "comma-separated NFE values, e.g. 1,10")
        ->required();
    be->add_option("--seed", be_seed, "observation probe seed (default 1)");
    be->add_option("--samples", be_samples, "chunks per timed run (default 128)");
    be->add_option("--out-report", be_report, "JSON report path")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("freqflow");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);  // help request
        err << "error: usage: " << e.what() << "\n";
        err << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_task, gen_n, gen_seed, gen_out, out);
        if (tr->parsed()) return cmd_train(train_config, train_resume, out);
        if (smp->parsed())
            return cmd_sample(smp_ckpt, smp_obs_file, smp_dataset, smp_nfe, smp_n,
                              smp_seed, smp_out, out);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_dataset, ev_nfe, ev_seed, ev_report, out);
        if (ro->parsed())
            return cmd_rollout(ro_ckpt, ro_trials, ro_nfe, ro_exec, ro_seed,
                               ro_report, out);
        if (sp->parsed()) return cmd_spectrum(sp_dataset, sp_samples, sp_out, out);
        if (be->parsed())
            return cmd_bench(be_ckpt, be_nfe_list, be_seed, be_samples, be_report, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no command dispatched\n";
    return 2;
}

}  // namespace fq::cli
