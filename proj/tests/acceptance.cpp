// Acceptance gate: ten numbered end-to-end checks, one per invocation
// (argv[1] in 1..10). Each prints diagnostic lines followed by a single
// verdict line "C<k> PASS" or "C<k> FAIL" and exits 0/1 accordingly.
//
// Heavy checks share one run cache under PACEDIFF_ACCEPT_ROOT: run
// directories are keyed by their full config, so C2's default curriculum run
// is reused by C7, whose runs are in turn reused by C8. Wall-clock budgets
// are asserted per check, measured on this process (cache hits count).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pacediff/pacediff.hpp"
#include "testutil.hpp"

#ifndef PACEDIFF_ACCEPT_ROOT
#error "PACEDIFF_ACCEPT_ROOT must point at the shared scratch directory"
#endif
#ifndef PACEDIFF_CLI
#error "PACEDIFF_CLI must point at the command-line binary"
#endif

namespace fs = std::filesystem;
using namespace pacediff;

namespace {

struct Check {
    bool ok = true;

    void expect(bool cond, const std::string& what) {
        std::cout << (cond ? "  ok:   " : "  FAIL: ") << what << "\n";
        if (!cond) ok = false;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

const fs::path kRoot = PACEDIFF_ACCEPT_ROOT;

// The stock experiment: 8-component GMM, linear 1000-step schedule, 30k
// iterations, N=20 SNR clusters, tau=200. Everything below derives from it.
ExperimentConfig base_experiment() {
    ExperimentConfig cfg;
    cfg.output_dir = kRoot.string();
    return cfg;
}

// Mirrors the ablation sweep's per-cell config so directories coincide and
// runs are shared across checks.
ExperimentConfig cell_config(Strategy direction, std::uint64_t seed, long long budget) {
    ExperimentConfig cfg = base_experiment();
    AblateCell cell;
    cell.direction = direction;
    cell.seed = seed;
    cell.budget = budget;
    cfg.train.strategy = direction;
    cfg.train.seed = seed;
    cfg.train.total_iterations = budget;
    if (direction != Strategy::vanilla) {
        cell.n = cfg.train.clusters;
        cell.tau = cfg.train.tau_max;
        cell.mode = cfg.train.cluster_mode;
    }
    cfg.output_dir = (kRoot / "cells" / ablate_cell_name(cell)).string();
    return cfg;
}

// --- C1: pacing state machine, pinned examples plus randomized sweep -------

CurriculumState pacing_oracle(double loss, CurriculumState s) {
    if (loss < s.best_loss) {
        s.patience = 0;
        s.best_loss = loss;
    } else if (s.patience + 1 > s.patience_max) {
        s.stage -= 1;
        s.patience = 0;
        s.best_loss = std::numeric_limits<double>::infinity();
    } else {
        s.patience += 1;
    }
    return s;
}

bool same_state(const CurriculumState& a, const CurriculumState& b) {
    return a.stage == b.stage && a.patience == b.patience && a.patience_max == b.patience_max &&
           ((a.best_loss == b.best_loss) ||
            (std::isinf(a.best_loss) && std::isinf(b.best_loss)));
}

Check c1_pacing() {
    Check c;
    const double inf = std::numeric_limits<double>::infinity();

    CurriculumState s{7, 3, 200, 0.6};
    CurriculumState r = pacing_step(0.5, s);
    c.expect(r.stage == 7 && r.patience == 0 && r.best_loss == 0.5,
             "improving loss resets patience and records the new best");

    s = {7, 200, 200, 0.6};
    r = pacing_step(0.7, s);
    c.expect(r.stage == 6 && r.patience == 0 && std::isinf(r.best_loss),
             "exhausted patience advances the stage and clears the best loss");

    s = {7, 5, 200, 0.6};
    r = pacing_step(0.7, s);
    c.expect(r.stage == 7 && r.patience == 6 && r.best_loss == 0.6,
             "non-improving loss inside the window only bumps patience");

    Rng rng(20260823);
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        CurriculumState st;
        st.stage = 1 + static_cast<int>(rng.below(30));
        st.patience_max = 1 + static_cast<int>(rng.below(300));
        st.patience = static_cast<int>(rng.below(st.patience_max + 1));
        st.best_loss = rng.below(4) == 0 ? inf : 0.25 + rng.uniform();
        // quantized losses force occasional exact ties against best_loss
        const double loss = 0.25 + 0.125 * rng.below(9);
        if (!same_state(pacing_step(loss, st), pacing_oracle(loss, st))) ++mismatches;
    }
    c.expect(mismatches == 0, "100 randomized states match the reference oracle (" +
                                  std::to_string(mismatches) + " mismatches)");
    return c;
}

// --- C2: default curriculum run walks every stage ---------------------------

Check c2_curriculum_structure() {
    Check c;
    const ExperimentConfig cfg = cell_config(Strategy::curriculum, 1, 30000);
    const RunSummary s = run_train(cfg);
    const int n = cfg.train.clusters;

    c.expect(static_cast<int>(s.stage_transitions.size()) == n,
             "exactly " + std::to_string(n) + " stage transitions (got " +
                 std::to_string(s.stage_transitions.size()) + ")");
    c.expect(!s.budget_exhausted, "staged phase finished inside the budget");
    c.expect(std::is_sorted(s.stage_transitions.begin(), s.stage_transitions.end()) &&
                 std::adjacent_find(s.stage_transitions.begin(), s.stage_transitions.end()) ==
                     s.stage_transitions.end(),
             "transition iterations strictly increase");

    const auto log = testutil::read_csv(fs::path(cfg.output_dir) / "runlog.csv");
    bool stages_ok = !log.rows.empty() && log.integer(0, "stage") == n;
    bool union_ok = true;
    long long prev_stage = n, prev_active = -1;
    long long min_stage = n;
    for (std::size_t r = 0; r < log.rows.size(); ++r) {
        const long long stage = log.integer(r, "stage");
        const long long active = log.integer(r, "active_size");
        min_stage = std::min(min_stage, stage);
        if (r > 0) {
            if (stage != prev_stage && stage != prev_stage - 1) stages_ok = false;
            if (stage == prev_stage && active != prev_active) union_ok = false;
            // every transition into a staged phase adds a cluster; the final
            // 1 -> 0 hop keeps the full set, which stage 1 already spans
            if (stage == prev_stage - 1 && stage >= 1 && active <= prev_active) union_ok = false;
            if (stage == prev_stage - 1 && stage == 0 && active != prev_active) union_ok = false;
        }
        prev_stage = stage;
        prev_active = active;
    }
    c.expect(stages_ok, "stage sequence starts at N and steps down one stage at a time");
    c.expect(min_stage == 0, "stage 0 (all clusters) is reached and trained");
    c.expect(union_ok, "active-cluster union strictly grows at every transition");
    return c;
}

// --- C3: analytic gradients against central differences ----------------------

Check c3_gradients() {
    Check c;
    Rng rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const int dim = 1 + static_cast<int>(rng.below(3));
        const int embed = 2 * (1 + static_cast<int>(rng.below(3)));
        const int t_count = 50;
        // silu only: central differences are meaningless within h of relu's
        // corner, and across 20 nets some pre-activation always lands there
        const Activation act = Activation::silu;
        std::vector<int> hidden(1 + rng.below(2));
        for (int& h : hidden) h = 4 + static_cast<int>(rng.below(9));

        const NoiseSchedule s = build_schedule(ScheduleKind::linear, t_count);
        const EmbeddingTable emb = EmbeddingTable::build(t_count, embed);
        Denoiser m = Denoiser::init(dim, embed, hidden, act, rng);

        TrainBatch batch;
        batch.dim = dim;
        batch.batch = 4 + static_cast<int>(rng.below(5));
        batch.x0.resize(static_cast<std::size_t>(batch.batch) * dim);
        batch.noise.resize(batch.x0.size());
        rng.fill_normal(batch.x0);
        rng.fill_normal(batch.noise);
        batch.t.resize(batch.batch);
        for (int& t : batch.t) t = static_cast<int>(rng.below(t_count));

        const WeightFn w = i % 3 == 0 ? make_weight_fn(WeightKind::minsnr, s, 5.0)
                                      : make_weight_fn(WeightKind::uniform, s);
        const double err = testutil::fd_max_rel_error(m, s, emb, batch, w);
        std::cout << "    net " << i << " (dim " << dim << ", batch " << batch.batch
                  << "): max rel error " << fmt(err) << "\n";
        worst = std::max(worst, err);
    }
    c.expect(worst <= 1e-4,
             "max relative gradient error over 20 nets = " + fmt(worst) + " (<= 1e-4)");
    return c;
}

// --- C4: inter-marginal KL decays with t on the stock GMM --------------------

Check c4_kl_trend() {
    Check c;
    ExperimentConfig cfg = base_experiment();
    cfg.output_dir = (kRoot / "kl").string();
    const KlVerdict v = run_analyze_kl(cfg);
    for (const auto& p : v.curve.points)
        std::cout << "    t=" << p.t << "  kl=" << fmt(p.estimate) << "  se=" << fmt(p.stderr_)
                  << "  degenerate=" << p.degenerate << "\n";
    c.expect(!v.unreliable, "fewer than 10% degenerate terms at every t");
    c.expect(v.spearman < -0.8,
             "spearman(t, KL) = " + fmt(v.spearman) + " (< -0.8)");
    return c;
}

// --- C5: Monte-Carlo KL against the closed Gaussian form ---------------------

Check c5_kl_oracle() {
    Check c;
    PointSet one(2, 1);
    one.data = {1.5, -0.5};
    const NoiseSchedule s = build_schedule(ScheduleKind::linear, 1000);
    const int m_samples = 5000;
    Rng rng(derive_seed(42, "kl-oracle"));

    for (int t : {10, 50, 100, 200, 400, 600, 800, 999}) {
        const KlEstimate e = estimate_kl(t, one, s, m_samples, 0, rng);
        // both marginals are exact Gaussians N(sqrt(abar) x0, (1-abar) I)
        const double v_prev = 1.0 - s.alpha_bar[t - 1];
        const double v_cur = 1.0 - s.alpha_bar[t];
        double analytic = 2.0 * 0.5 * (std::log(v_cur / v_prev) + v_prev / v_cur - 1.0);
        const double shift = std::sqrt(s.alpha_bar[t - 1]) - std::sqrt(s.alpha_bar[t]);
        analytic += shift * shift * (1.5 * 1.5 + 0.5 * 0.5) / (2.0 * v_cur);
        const double gap = std::abs(e.estimate - analytic);
        c.expect(e.stderr_ > 0.0 && gap <= 3.0 * e.stderr_,
                 "t=" + std::to_string(t) + ": |" + fmt(e.estimate) + " - " + fmt(analytic) +
                     "| = " + fmt(gap) + " <= 3*se = " + fmt(3.0 * e.stderr_));
    }
    return c;
}

// --- C6: later (noisier) timestep intervals converge earlier -----------------

Check c6_convergence_order() {
    Check c;
    ExperimentConfig cfg = base_experiment();
    cfg.output_dir = (kRoot / "convergence").string();
    const ConvergenceVerdict v = run_analyze_convergence(cfg);

    const auto& ivs = v.study.intervals;
    c.expect(ivs.size() == 20, "20 interval models trained");
    for (const auto& iv : ivs)
        std::cout << "    interval " << iv.index << " [" << iv.t_lo << "," << iv.t_hi
                  << ")  converged at " << iv.convergence_iteration << "  final metric "
                  << fmt(iv.task_metric.empty() ? 0.0 : iv.task_metric.back()) << "\n";
    c.expect(v.spearman < -0.5,
             "spearman(interval, convergence iteration) = " + fmt(v.spearman) + " (< -0.5)");
    if (!ivs.empty()) {
        const auto& first = ivs.front();
        const auto& last = ivs.back();
        c.expect(last.convergence_iteration <= first.convergence_iteration,
                 "interval " + std::to_string(last.index) + " converges no later than interval " +
                     std::to_string(first.index));
    }
    return c;
}

// --- C7: curriculum beats vanilla and anti-curriculum at equal budget --------

Check c7_comparative() {
    Check c;
    const long long budget = 30000;
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<ExperimentConfig> cfgs;
    for (Strategy strat : {Strategy::curriculum, Strategy::vanilla, Strategy::anti_curriculum})
        for (std::uint64_t seed : seeds) cfgs.push_back(cell_config(strat, seed, budget));
    run_many(cfgs, 1);

    std::map<Strategy, std::vector<double>> dist;
    for (Strategy strat : {Strategy::curriculum, Strategy::vanilla, Strategy::anti_curriculum})
        for (std::uint64_t seed : seeds) {
            const RunSummary s = run_train(cell_config(strat, seed, budget));
            dist[strat].push_back(s.final_distance);
            std::cout << "    " << to_string(strat) << " seed " << seed << "  distance "
                      << fmt(s.final_distance) << "\n";
        }
    const double med_cur = median(dist[Strategy::curriculum]);
    const double med_van = median(dist[Strategy::vanilla]);
    const double med_anti = median(dist[Strategy::anti_curriculum]);
    c.expect(med_cur < med_van, "median curriculum " + fmt(med_cur) + " < median vanilla " +
                                    fmt(med_van));
    c.expect(med_cur < med_anti, "median curriculum " + fmt(med_cur) +
                                     " < median anti-curriculum " + fmt(med_anti));
    return c;
}

// --- C8: curriculum never loses to vanilla across the (N, tau) grid ----------

Check c8_ablation() {
    Check c;
    const ExperimentConfig base = base_experiment();
    AblateGrid grid;  // stock grid: {5,20,50} x {50,200,800}, snr, 3 seeds
    const AblateResult result = run_ablate(base, grid, 1);
    result.write_csv(kRoot / "ablation.csv");

    int failures = 0;
    std::map<std::pair<int, int>, std::vector<double>> cur;
    std::map<std::pair<int, int>, long long> cell_budget;
    std::map<long long, std::vector<double>> van;
    for (const auto& cell : result.cells) {
        if (cell.failed) {
            ++failures;
            std::cout << "    failed cell " << ablate_cell_name(cell) << ": " << cell.error
                      << "\n";
            continue;
        }
        if (cell.direction == Strategy::vanilla) {
            van[cell.budget].push_back(cell.summary.final_distance);
        } else {
            cur[{cell.n, cell.tau}].push_back(cell.summary.final_distance);
            cell_budget[{cell.n, cell.tau}] = cell.budget;
        }
    }
    c.expect(failures == 0, "all grid cells completed");
    c.expect(cur.size() == 9, "9 (N, tau) cells present");
    for (const auto& [key, dists] : cur) {
        const long long budget = cell_budget[key];
        const double med_c = median(dists);
        const double med_v = median(van[budget]);
        c.expect(med_c <= med_v, "N=" + std::to_string(key.first) +
                                     " tau=" + std::to_string(key.second) + " (budget " +
                                     std::to_string(budget) + "): curriculum " + fmt(med_c) +
                                     " <= vanilla " + fmt(med_v));
    }
    return c;
}

// --- C9: curriculum stacks with MinSNR weighting -----------------------------

Check c9_minsnr() {
    Check c;
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<ExperimentConfig> cfgs;
    auto minsnr_cfg = [&](Strategy strat, std::uint64_t seed) {
        ExperimentConfig cfg = cell_config(strat, seed, 30000);
        cfg.train.weighting = WeightKind::minsnr;
        cfg.output_dir =
            (kRoot / "minsnr" / (std::string(to_string(strat)) + "_s" + std::to_string(seed)))
                .string();
        return cfg;
    };
    for (Strategy strat : {Strategy::curriculum, Strategy::vanilla})
        for (std::uint64_t seed : seeds) cfgs.push_back(minsnr_cfg(strat, seed));
    run_many(cfgs, 1);

    std::vector<double> with_curriculum, alone;
    for (std::uint64_t seed : seeds) {
        const double dc = run_train(minsnr_cfg(Strategy::curriculum, seed)).final_distance;
        const double dv = run_train(minsnr_cfg(Strategy::vanilla, seed)).final_distance;
        with_curriculum.push_back(dc);
        alone.push_back(dv);
        std::cout << "    seed " << seed << "  curriculum+minsnr " << fmt(dc)
                  << "  minsnr alone " << fmt(dv) << "\n";
    }
    c.expect(median(with_curriculum) <= median(alone),
             "median curriculum+minsnr " + fmt(median(with_curriculum)) +
                 " <= median minsnr alone " + fmt(median(alone)));
    return c;
}

// --- C10: identical command + seed reproduces the run log byte for byte ------

Check c10_determinism() {
    Check c;
    const fs::path dir = kRoot / "determinism";
    fs::create_directories(dir);
    const fs::path cfg_path = dir / "run.toml";
    {
        std::ofstream cfg(cfg_path, std::ios::binary | std::ios::trunc);
        cfg << "output_dir = \"" << (dir / "run").string() << "\"\n\n"
            << "[dataset]\nsize = 1024\n\n"
            << "[schedule]\ntimesteps = 300\n\n"
            << "[train]\nstrategy = \"curriculum\"\ntotal_iterations = 3000\nbatch_size = 64\n"
            << "clusters = 8\ntau_max = 30\nsmoothing_window = 20\nhidden = [32, 32]\n"
            << "embed_width = 16\nseed = 5\n\n"
            << "[sampler]\nsteps = 50\ncount = 512\n";
    }
    const std::string cli = PACEDIFF_CLI;
    const std::string cmd =
        "\"" + cli + "\" train -c \"" + cfg_path.string() + "\" --force > /dev/null";
    c.expect(std::system(cmd.c_str()) == 0, "first training run exits cleanly");
    fs::copy_file(dir / "run" / "runlog.csv", dir / "runlog_first.csv",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(dir / "run" / "samples.csv", dir / "samples_first.csv",
                  fs::copy_options::overwrite_existing);
    c.expect(std::system(cmd.c_str()) == 0, "second training run exits cleanly");
    c.expect(testutil::files_equal(dir / "runlog_first.csv", dir / "run" / "runlog.csv"),
             "run logs are byte-identical across reruns");
    c.expect(testutil::files_equal(dir / "samples_first.csv", dir / "run" / "samples.csv"),
             "sample sets are byte-identical across reruns");

    const std::string data_cmd = "\"" + cli + "\" dataset -o \"" + (dir / "points.csv").string() +
                                 "\" > /dev/null";
    c.expect(std::system(data_cmd.c_str()) == 0, "dataset command exits cleanly");
    fs::copy_file(dir / "points.csv", dir / "points_first.csv",
                  fs::copy_options::overwrite_existing);
    c.expect(std::system(data_cmd.c_str()) == 0, "dataset command reruns cleanly");
    c.expect(testutil::files_equal(dir / "points_first.csv", dir / "points.csv"),
             "dataset export is byte-identical across reruns");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: " << argv[0] << " <criterion 1..10>\n";
        return 2;
    }
    const int k = std::atoi(argv[1]);
    if (k < 1 || k > 10) {
        std::cerr << "usage: " << argv[0] << " <criterion 1..10>\n";
        return 2;
    }
    // wall-clock ceilings in seconds; 0 means no stated budget
    const double budgets[10] = {1, 600, 30, 300, 60, 3600, 7200, 14400, 0, 0};

    fs::create_directories(kRoot);
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
        switch (k) {
            case 1: c = c1_pacing(); break;
            case 2: c = c2_curriculum_structure(); break;
            case 3: c = c3_gradients(); break;
            case 4: c = c4_kl_trend(); break;
            case 5: c = c5_kl_oracle(); break;
            case 6: c = c6_convergence_order(); break;
            case 7: c = c7_comparative(); break;
            case 8: c = c8_ablation(); break;
            case 9: c = c9_minsnr(); break;
            case 10: c = c10_determinism(); break;
        }
    } catch (const std::exception& e) {
        c.expect(false, std::string("unexpected exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budgets[k - 1] > 0.0)
        c.expect(secs < budgets[k - 1], "runtime " + fmt(secs) + "s inside the " +
                                            fmt(budgets[k - 1]) + "s budget");
    std::printf("C%d %s (%.1fs)\n", k, c.ok ? "PASS" : "FAIL", secs);
    return c.ok ? 0 : 1;
}
