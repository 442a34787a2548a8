// Command-line front end: train / compare / ablate / analyze / dataset.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pacediff/pacediff.hpp"

namespace {

using pacediff::ExperimentConfig;
using pacediff::json;

// Config file (JSON or TOML) merged with --set overrides; defaults when no
// file is given.
ExperimentConfig resolve_config(const std::string& path,
                                const std::vector<std::string>& overrides) {
    json j;
    if (path.empty()) {
        j = pacediff::to_json(ExperimentConfig{});
    } else if (std::filesystem::path(path).extension() == ".toml") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        j = pacediff::toml_to_json(ss.str());
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument(path + ": " + e.what());
        }
    }
    for (const auto& o : overrides) pacediff::apply_override(j, o);
    try {
        return pacediff::config_from_json(j);
    } catch (const std::exception& e) {
        throw std::invalid_argument((path.empty() ? std::string("<defaults>") : path) + ": " +
                                    e.what());
    }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool force) {
    const ExperimentConfig cfg = resolve_config(config_path, overrides);
    const bool cached = !force && pacediff::run_is_cached(cfg);
    const pacediff::RunSummary s = pacediff::run_train(cfg, force);
    if (cached) std::cout << "reusing completed run in " << cfg.output_dir << "\n";
    std::cout << pacediff::to_json(s).dump(2) << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths,
                const std::vector<std::string>& overrides, const std::string& out_csv,
                int workers) {
    std::vector<ExperimentConfig> cfgs;
    for (const auto& p : config_paths) cfgs.push_back(resolve_config(p, overrides));
    const auto rows = pacediff::run_compare(cfgs, workers);
    std::printf("%-28s %-16s %6s %14s %14s\n", "label", "strategy", "seed", "distance",
                "final_loss");
    for (const auto& r : rows)
        std::printf("%-28s %-16s %6llu %14.6f %14.6f\n", r.label.c_str(), r.strategy.c_str(),
                    static_cast<unsigned long long>(r.seed), r.distance, r.final_loss);
    if (!out_csv.empty()) pacediff::write_compare_csv(rows, out_csv);
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               pacediff::AblateGrid grid, const std::vector<std::string>& modes,
               const std::vector<std::string>& directions, const std::string& out_csv,
               int workers) {
    const ExperimentConfig base = resolve_config(config_path, overrides);
    if (!modes.empty()) {
        grid.modes.clear();
        for (const auto& m : modes) grid.modes.push_back(pacediff::cluster_mode_from(m));
    }
    if (!directions.empty()) {
        grid.directions.clear();
        for (const auto& d : directions) grid.directions.push_back(pacediff::strategy_from(d));
    }
    const auto result = pacediff::run_ablate(base, grid, workers);
    const std::string path =
        out_csv.empty() ? (std::filesystem::path(base.output_dir) / "ablation.csv").string()
                        : out_csv;
    result.write_csv(path);
    int failures = 0;
    for (const auto& c : result.cells) failures += c.failed ? 1 : 0;
    std::cout << "ablation grid: " << result.cells.size() << " cells, " << failures
              << " failed; results in " << path << "\n";
    return failures == 0 ? 0 : 1;
}

int cmd_analyze(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& which) {
    const ExperimentConfig cfg = resolve_config(config_path, overrides);
    if (which == "kl") {
        const auto v = pacediff::run_analyze_kl(cfg);
        std::cout << "kl spearman(t, estimate) = " << v.spearman
                  << (v.unreliable ? "  [UNRELIABLE: degenerate terms above 10%]" : "") << "\n";
        return v.unreliable ? 2 : 0;
    }
    if (which == "convergence") {
        const auto v = pacediff::run_analyze_convergence(cfg);
        std::cout << "convergence spearman(interval, iteration) = " << v.spearman << "\n";
        return 0;
    }
    throw std::invalid_argument("analyze: --which must be kl or convergence");
}

int cmd_dataset(const std::string& config_path, const std::vector<std::string>& overrides,
                const std::string& out_csv) {
    const ExperimentConfig cfg = resolve_config(config_path, overrides);
    const pacediff::PointSet ps = pacediff::make_dataset(cfg.dataset);
    const std::string path =
        out_csv.empty() ? (std::filesystem::path(cfg.output_dir) / "points.csv").string()
                        : out_csv;
    if (std::filesystem::path(path).has_parent_path())
        std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    pacediff::write_points_csv(ps, path);
    std::cout << ps.size() << " points (" << ps.dim << "-D) written to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-model curriculum training laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_csv, which = "kl";
    std::vector<std::string> overrides, compare_paths, modes, directions;
    bool force = false;
    int workers = 1;
    pacediff::AblateGrid grid;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("-c,--config", config_path, "config file (.json or .toml)")
            ->check(CLI::ExistingFile)
            ->required(config_required);
        sub->add_option("--set", overrides,
                        "override a config key, e.g. --set train.seed=3")
            ->take_all();
    };

    auto* train = app.add_subcommand("train", "train one model per the config");
    add_common(train, false);
    train->add_flag("--force", force, "retrain even when the run directory is complete");

    auto* compare = app.add_subcommand("compare", "rank completed runs by held-out distance");
    compare->add_option("-c,--config", compare_paths, "config files (two or more)")
        ->check(CLI::ExistingFile)
        ->required()
        ->expected(2, -1);
    compare->add_option("--set", overrides, "override applied to every config")->take_all();
    compare->add_option("-o,--out", out_csv, "write the ranked table as CSV");
    compare->add_option("--workers", workers, "concurrent runs");

    auto* ablate = app.add_subcommand("ablate", "grid over clusters / patience / mode / direction");
    add_common(ablate, false);
    ablate->add_option("--n", grid.n_values, "cluster counts")->take_all();
    ablate->add_option("--tau", grid.tau_values, "patience values")->take_all();
    ablate->add_option("--mode", modes, "cluster modes (uniform, snr)")->take_all();
    ablate->add_option("--direction", directions,
                       "strategies (curriculum, anti_curriculum, vanilla)")
        ->take_all();
    ablate->add_option("--seeds", grid.seeds, "seeds per cell")->take_all();
    ablate->add_flag("!--no-vanilla", grid.vanilla_baseline, "skip paired vanilla baselines");
    ablate->add_option("--budget-multiplier", grid.stage_budget_multiplier,
                       "staged-phase budget headroom per cell");
    ablate->add_option("--final-floor", grid.final_floor_iterations,
                       "iterations reserved for the final stage when budgets grow");
    ablate->add_option("-o,--out", out_csv, "grid results CSV (default <output_dir>/ablation.csv)");
    ablate->add_option("--workers", workers, "concurrent cells");

    auto* analyze = app.add_subcommand("analyze", "KL curve or convergence study");
    add_common(analyze, false);
    analyze->add_option("--which", which, "kl or convergence")
        ->check(CLI::IsMember({"kl", "convergence"}));

    auto* dataset = app.add_subcommand("dataset", "synthesize the configured dataset as CSV");
    add_common(dataset, false);
    dataset->add_option("-o,--out", out_csv, "points CSV (default <output_dir>/points.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, force);
        if (compare->parsed()) return cmd_compare(compare_paths, overrides, out_csv, workers);
        if (ablate->parsed())
            return cmd_ablate(config_path, overrides, grid, modes, directions, out_csv, workers);
        if (analyze->parsed()) return cmd_analyze(config_path, overrides, which);
        if (dataset->parsed()) return cmd_dataset(config_path, overrides, out_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
