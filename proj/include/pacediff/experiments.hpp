#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pacediff/analysis.hpp"
#include "pacediff/config.hpp"
#include "pacediff/sampling.hpp"
#include "pacediff/training.hpp"

namespace pacediff {

struct RunSummary {
    std::string strategy;
    std::uint64_t seed = 0;
    long long total_iterations = 0;
    double final_loss = 0.0;      // smoothed loss at the last iteration
    double final_raw_loss = 0.0;
    std::vector<long long> stage_transitions;
    bool budget_exhausted = false;
    double final_distance = 0.0;  // sliced-W2 against the held-out reference
    std::size_t sample_count = 0;
    double wall_clock_seconds = 0.0;
};

inline json to_json(const RunSummary& s) {
    return json{{"strategy", s.strategy},
                {"seed", s.seed},
                {"total_iterations", s.total_iterations},
                {"final_loss", s.final_loss},
                {"final_raw_loss", s.final_raw_loss},
                {"stage_transitions", s.stage_transitions},
                {"budget_exhausted", s.budget_exhausted},
                {"final_distance", s.final_distance},
                {"sample_count", s.sample_count},
                {"wall_clock_seconds", s.wall_clock_seconds}};
}

inline RunSummary summary_from_json(const json& j) {
    RunSummary s;
    s.strategy = j.at("strategy").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.total_iterations = j.at("total_iterations").get<long long>();
    s.final_loss = j.at("final_loss").get<double>();
    s.final_raw_loss = j.at("final_raw_loss").get<double>();
    s.stage_transitions = j.at("stage_transitions").get<std::vector<long long>>();
    s.budget_exhausted = j.at("budget_exhausted").get<bool>();
    s.final_distance = j.at("final_distance").get<double>();
    s.sample_count = j.at("sample_count").get<std::size_t>();
    s.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return s;
}

// Sampler seed 0 means "derive one from the training seed".
inline std::uint64_t effective_sampler_seed(const ExperimentConfig& cfg) {
    return cfg.sampler.seed != 0 ? cfg.sampler.seed : derive_seed(cfg.train.seed, "sampler");
}

inline std::uint64_t effective_analysis_seed(const ExperimentConfig& cfg) {
    return cfg.analysis.seed != 0 ? cfg.analysis.seed : derive_seed(cfg.dataset.seed, "analysis");
}

// Held-out draw from the generating distribution (never the training set).
inline PointSet reference_sample(const ExperimentConfig& cfg) {
    DatasetSpec ref = cfg.dataset;
    ref.size = cfg.sample_count;
    ref.seed = derive_seed(cfg.dataset.seed, "held-out-reference");
    return make_dataset(ref);
}

// A completed run directory contains a config snapshot identical to the
// requested config; its summary can be reused without retraining.
inline bool run_is_cached(const ExperimentConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::ifstream snap(dir / "config.json");
    std::ifstream summ(dir / "summary.json");
    if (!snap || !summ) return false;
    try {
        return json::parse(snap) == to_json(cfg);
    } catch (const json::exception&) {
        return false;
    }
}

// Trains per the config and materializes the run directory: config snapshot,
// schedule/cluster tables, RunLog CSV, checkpoints, final samples, summary.
// A directory already holding this exact config is reused as-is.
inline RunSummary run_train(const ExperimentConfig& cfg, bool force = false) {
    const std::filesystem::path dir(cfg.output_dir);
    if (!force && run_is_cached(cfg)) {
        std::ifstream summ(dir / "summary.json");
        return summary_from_json(json::parse(summ));
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(dir);

    const PointSet data = make_dataset(cfg.dataset);
    const NoiseSchedule schedule = build_schedule(cfg.train.schedule);
    write_schedule_csv(schedule, dir / "schedule.csv");
    if (cfg.train.staged()) {
        const ClusterMode mode = cfg.train.strategy == Strategy::naive_cl ? ClusterMode::uniform
                                                                          : cfg.train.cluster_mode;
        const ClusterSet clusters = mode == ClusterMode::snr
                                        ? snr_clusters(schedule, cfg.train.clusters)
                                        : uniform_clusters(schedule.T, cfg.train.clusters);
        write_clusters_csv(clusters, dir / "clusters.csv", &schedule);
    }

    CheckpointFn rolling = [&](long long, const Denoiser& m, const EmaShadow& e) {
        save_checkpoint(dir / "last.ckpt", m, &e);
    };
    const TrainResult result = train(cfg.train, data, rolling);

    result.log.write_csv(dir / "runlog.csv");
    save_checkpoint(dir / "model_final.ckpt", result.model);
    save_checkpoint(dir / "model_ema.ckpt", result.ema.materialize(result.model));

    SamplerConfig scfg = cfg.sampler;
    scfg.seed = effective_sampler_seed(cfg);
    const Denoiser sampling_model =
        scfg.use_ema ? result.ema.materialize(result.model) : result.model;
    const PointSet samples = ddpm_sample(sampling_model, schedule, scfg, cfg.sample_count);
    write_points_csv(samples, dir / "samples.csv");

    RunSummary s;
    s.strategy = std::string(to_string(cfg.train.strategy));
    s.seed = cfg.train.seed;
    s.total_iterations = cfg.train.total_iterations;
    s.final_raw_loss = result.log.records.back().loss;
    s.final_loss = result.log.records.back().smoothed_loss;
    s.stage_transitions = result.log.stage_transitions;
    s.budget_exhausted = result.log.budget_exhausted;
    s.sample_count = cfg.sample_count;
    s.final_distance = distribution_distance(samples, reference_sample(cfg),
                                             cfg.analysis.projections);
    s.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_config(cfg, dir / "config.json");
    std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
    out << to_json(s).dump(2) << '\n';
    return s;
}

// Runs any configs whose directories are not already cached, a worker pool
// over whole runs. Exceptions are captured per run and rethrown after the
// pool drains unless `errors` collects them.
inline void run_many(const std::vector<ExperimentConfig>& cfgs, int workers,
                     std::vector<std::string>* errors = nullptr) {
    if (workers < 1) workers = 1;
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::vector<std::string> local_errors;
    auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfgs.size()) return;
            try {
                run_train(cfgs[i]);
            } catch (const std::exception& e) {
                std::scoped_lock lock(err_mutex);
                local_errors.push_back(cfgs[i].output_dir + ": " + e.what());
            }
        }
    };
    if (workers == 1 || cfgs.size() < 2) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < std::min<int>(workers, static_cast<int>(cfgs.size())); ++w)
            pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (errors != nullptr) {
        *errors = std::move(local_errors);
    } else if (!local_errors.empty()) {
        std::string msg = "run failures:";
        for (const auto& e : local_errors) msg += "\n  " + e;
        throw std::runtime_error(msg);
    }
}

struct CompareRow {
    std::string label;
    std::string strategy;
    std::uint64_t seed = 0;
    double distance = 0.0;
    double final_loss = 0.0;
};

inline void write_compare_csv(const std::vector<CompareRow>& rows,
                              const std::filesystem::path& path) {
    csv::File f(path, {"label", "strategy", "seed", "distance", "final_loss"});
    for (const auto& r : rows)
        f.row({r.label, std::string(to_string(strategy_from(r.strategy))), csv::num(r.seed),
               csv::num(r.distance), csv::num(r.final_loss)});
}

// Trains (or reuses) every config and ranks them by held-out distance.
// All configs must share the dataset law and the iteration budget so the
// comparison is apples-to-apples.
inline std::vector<CompareRow> run_compare(const std::vector<ExperimentConfig>& cfgs,
                                           int workers = 1) {
    if (cfgs.size() < 2) throw std::invalid_argument("run_compare: need at least two configs");
    const json ref_data = to_json(cfgs.front())["dataset"];
    for (const auto& c : cfgs) {
        if (to_json(c)["dataset"] != ref_data)
            throw std::invalid_argument("run_compare: dataset specs differ (" + c.output_dir +
                                        ")");
        if (c.train.total_iterations != cfgs.front().train.total_iterations)
            throw std::invalid_argument("run_compare: iteration budgets differ (" + c.output_dir +
                                        ")");
    }
    run_many(cfgs, workers);
    std::vector<CompareRow> rows;
    for (const auto& c : cfgs) {
        const RunSummary s = run_train(c);  // cached by now
        rows.push_back({std::filesystem::path(c.output_dir).filename().string(), s.strategy,
                        s.seed, s.final_distance, s.final_loss});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const CompareRow& a, const CompareRow& b) { return a.distance < b.distance; });
    return rows;
}

struct AblateGrid {
    std::vector<int> n_values = {5, 20, 50};
    std::vector<int> tau_values = {50, 200, 800};
    std::vector<ClusterMode> modes = {ClusterMode::snr};
    std::vector<Strategy> directions = {Strategy::curriculum};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    bool vanilla_baseline = true;  // paired vanilla run at every cell budget
    // Cells whose staged phase cannot fit the base budget get it enlarged to
    // stage_budget_multiplier * N * (tau + 2) + final_floor_iterations, and
    // the paired vanilla baseline always runs at the same enlarged budget.
    double stage_budget_multiplier = 1.5;
    long long final_floor_iterations = 10000;
};

inline long long ablate_cell_budget(const AblateGrid& grid, long long base_budget, int n,
                                    int tau) {
    const long long staged = static_cast<long long>(
        grid.stage_budget_multiplier * static_cast<double>(n) * (tau + 2));
    return std::max(base_budget, staged + grid.final_floor_iterations);
}

struct AblateCell {
    int n = 0;
    int tau = 0;
    ClusterMode mode = ClusterMode::uniform;
    Strategy direction = Strategy::curriculum;
    std::uint64_t seed = 0;
    long long budget = 0;
    bool failed = false;
    std::string error;
    RunSummary summary;
};

struct AblateResult {
    std::vector<AblateCell> cells;

    void write_csv(const std::filesystem::path& path) const {
        csv::File f(path, {"direction", "mode", "n", "tau", "seed", "budget", "status",
                           "distance", "final_loss", "budget_exhausted"});
        for (const auto& c : cells)
            f.row({std::string(to_string(c.direction)), std::string(to_string(c.mode)),
                   csv::num(c.n), csv::num(c.tau), csv::num(c.seed), csv::num(c.budget),
                   c.failed ? std::string("failed: ") + c.error : std::string("ok"),
                   csv::num(c.failed ? std::numeric_limits<double>::quiet_NaN()
                                     : c.summary.final_distance),
                   csv::num(c.failed ? std::numeric_limits<double>::quiet_NaN()
                                     : c.summary.final_loss),
                   csv::num(static_cast<int>(!c.failed && c.summary.budget_exhausted))});
    }
};

inline std::string ablate_cell_name(const AblateCell& c) {
    std::ostringstream name;
    name << to_string(c.direction);
    if (c.direction != Strategy::vanilla)
        name << "_N" << c.n << "_tau" << c.tau << "_" << to_string(c.mode);
    name << "_b" << c.budget << "_s" << c.seed;
    return name.str();
}

// Cartesian product over {direction, mode, N, tau} x seeds, plus deduplicated
// vanilla baselines at every distinct cell budget. Cell failures are recorded
// in the result, not thrown.
inline AblateResult run_ablate(const ExperimentConfig& base, const AblateGrid& grid,
                               int workers = 1) {
    if (grid.n_values.empty() || grid.tau_values.empty() || grid.modes.empty() ||
        grid.directions.empty() || grid.seeds.empty())
        throw std::invalid_argument("run_ablate: empty grid axis");

    const std::filesystem::path root = std::filesystem::path(base.output_dir) / "cells";
    AblateResult result;
    std::vector<long long> vanilla_budgets;

    for (Strategy dir : grid.directions)
        for (ClusterMode mode : grid.modes)
            for (int n : grid.n_values)
                for (int tau : grid.tau_values)
                    for (std::uint64_t seed : grid.seeds) {
                        AblateCell cell;
                        cell.n = n;
                        cell.tau = tau;
                        cell.mode = mode;
                        cell.direction = dir;
                        cell.seed = seed;
                        cell.budget =
                            dir == Strategy::vanilla
                                ? base.train.total_iterations
                                : ablate_cell_budget(grid, base.train.total_iterations, n, tau);
                        result.cells.push_back(cell);
                        if (dir != Strategy::vanilla) vanilla_budgets.push_back(cell.budget);
                    }

    if (grid.vanilla_baseline) {
        std::sort(vanilla_budgets.begin(), vanilla_budgets.end());
        vanilla_budgets.erase(std::unique(vanilla_budgets.begin(), vanilla_budgets.end()),
                              vanilla_budgets.end());
        for (long long budget : vanilla_budgets)
            for (std::uint64_t seed : grid.seeds) {
                AblateCell cell;
                cell.direction = Strategy::vanilla;
                cell.seed = seed;
                cell.budget = budget;
                result.cells.push_back(cell);
            }
    }

    auto cell_config = [&](const AblateCell& cell) {
        ExperimentConfig cfg = base;
        cfg.train.strategy = cell.direction;
        cfg.train.seed = cell.seed;
        cfg.train.total_iterations = cell.budget;
        if (cell.direction != Strategy::vanilla) {
            cfg.train.clusters = cell.n;
            cfg.train.tau_max = cell.tau;
            cfg.train.cluster_mode = cell.mode;
        }
        cfg.output_dir = (root / ablate_cell_name(cell)).string();
        return cfg;
    };

    // distinct run directories may repeat when cells coincide; run each once
    std::vector<ExperimentConfig> unique_cfgs;
    std::vector<std::string> seen;
    for (const auto& cell : result.cells) {
        ExperimentConfig cfg = cell_config(cell);
        if (std::find(seen.begin(), seen.end(), cfg.output_dir) == seen.end()) {
            seen.push_back(cfg.output_dir);
            unique_cfgs.push_back(std::move(cfg));
        }
    }
    std::vector<std::string> errors;
    run_many(unique_cfgs, workers, &errors);

    for (auto& cell : result.cells) {
        const ExperimentConfig cfg = cell_config(cell);
        try {
            if (!run_is_cached(cfg)) throw std::runtime_error("run did not complete");
            cell.summary = run_train(cfg);
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
            for (const auto& msg : errors)
                if (msg.rfind(cfg.output_dir + ":", 0) == 0) cell.error = msg;
        }
    }
    return result;
}

struct KlVerdict {
    KlCurve curve;
    double spearman = 0.0;
    bool unreliable = false;
};

// KL curve over the configured timesteps; artifacts land in output_dir.
inline KlVerdict run_analyze_kl(const ExperimentConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const PointSet data = make_dataset(cfg.dataset);
    const NoiseSchedule schedule = build_schedule(cfg.train.schedule);

    KlVerdict v;
    v.curve = estimate_kl_curve(data, schedule, cfg.analysis.kl_timesteps, cfg.analysis.m_samples,
                                cfg.analysis.l_mixture, effective_analysis_seed(cfg));
    v.spearman = v.curve.spearman_vs_t();
    v.unreliable = v.curve.any_unreliable();
    v.curve.write_csv(dir / "kl_curve.csv");

    std::ofstream out(dir / "kl_verdict.json", std::ios::binary | std::ios::trunc);
    out << json{{"spearman", v.spearman},
                {"unreliable", v.unreliable},
                {"m_samples", cfg.analysis.m_samples},
                {"l_mixture", cfg.analysis.l_mixture}}
               .dump(2)
        << '\n';
    return v;
}

struct ConvergenceVerdict {
    ConvergenceStudy study;
    double spearman = 0.0;
};

// Per-interval convergence study; artifacts land in output_dir.
inline ConvergenceVerdict run_analyze_convergence(const ExperimentConfig& cfg) {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const PointSet data = make_dataset(cfg.dataset);

    ConvergenceOptions opts = cfg.analysis.convergence;
    if (opts.seed == 0) opts.seed = derive_seed(cfg.train.seed, "convergence");

    ConvergenceVerdict v;
    v.study = run_convergence_study(cfg.dataset, data, cfg.train, opts);
    v.spearman = v.study.spearman_index_vs_convergence;
    v.study.write_csv(dir / "convergence.csv");

    json intervals = json::array();
    for (const auto& iv : v.study.intervals)
        intervals.push_back({{"interval", iv.index},
                             {"t_lo", iv.t_lo},
                             {"t_hi", iv.t_hi},
                             {"convergence_iteration", iv.convergence_iteration}});
    std::ofstream out(dir / "convergence_verdict.json", std::ios::binary | std::ios::trunc);
    out << json{{"spearman", v.spearman}, {"intervals", intervals}}.dump(2) << '\n';
    return v;
}

}  // namespace pacediff

