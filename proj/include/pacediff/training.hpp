#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pacediff/clustering.hpp"
#include "pacediff/csv.hpp"
#include "pacediff/dataset.hpp"
#include "pacediff/model.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/schedule.hpp"

namespace pacediff {

enum class Strategy { vanilla, curriculum, naive_cl, anti_curriculum };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::vanilla: return "vanilla";
        case Strategy::curriculum: return "curriculum";
        case Strategy::naive_cl: return "naive_cl";
        case Strategy::anti_curriculum: return "anti_curriculum";
    }
    throw std::invalid_argument("unknown strategy");
}

inline Strategy strategy_from(std::string_view s) {
    if (s == "vanilla") return Strategy::vanilla;
    if (s == "curriculum") return Strategy::curriculum;
    if (s == "naive_cl") return Strategy::naive_cl;
    if (s == "anti_curriculum") return Strategy::anti_curriculum;
    throw std::invalid_argument("unknown strategy: " + std::string(s));
}

enum class WeightKind { uniform, minsnr };

inline std::string_view to_string(WeightKind w) {
    switch (w) {
        case WeightKind::uniform: return "uniform";
        case WeightKind::minsnr: return "minsnr";
    }
    throw std::invalid_argument("unknown weighting");
}

inline WeightKind weight_kind_from(std::string_view s) {
    if (s == "uniform") return WeightKind::uniform;
    if (s == "minsnr") return WeightKind::minsnr;
    throw std::invalid_argument("unknown weighting: " + std::string(s));
}

// Loss weight as a function of timestep. MinSNR truncates the SNR at gamma:
// w(t) = min(snr[t], gamma) / snr[t].
inline WeightFn make_weight_fn(WeightKind kind, const NoiseSchedule& s, double gamma = 5.0) {
    if (kind == WeightKind::uniform) return [](int) { return 1.0; };
    if (!(gamma > 0.0)) throw std::invalid_argument("make_weight_fn: gamma must be > 0");
    std::vector<double> w(s.snr.size());
    for (std::size_t t = 0; t < w.size(); ++t) w[t] = std::min(s.snr[t], gamma) / s.snr[t];
    return [w = std::move(w)](int t) { return w[static_cast<std::size_t>(t)]; };
}

// Patience state machine driving stage transitions. Stage I runs from N
// (easiest cluster only) down to 0 (all timesteps).
struct CurriculumState {
    int stage = 0;           // I_cur
    int patience = 0;        // tau_cur
    int patience_max = 200;  // tau_max
    double best_loss = std::numeric_limits<double>::infinity();  // L_best
};

// One pacing decision per observed loss: an improvement resets patience, an
// exhausted patience budget advances the stage and forgets the best loss,
// anything else just burns patience.
inline CurriculumState pacing_step(double loss, CurriculumState state) {
    if (!std::isfinite(loss)) throw std::invalid_argument("pacing_step: non-finite loss");
    if (state.patience_max < 1) throw std::invalid_argument("pacing_step: patience_max < 1");
    if (state.patience < 0 || state.patience > state.patience_max)
        throw std::invalid_argument("pacing_step: patience out of range");
    if (loss < state.best_loss) {
        state.patience = 0;
        state.best_loss = loss;
    } else if (state.patience + 1 > state.patience_max) {
        state.patience = 0;
        state.stage -= 1;
        state.best_loss = std::numeric_limits<double>::infinity();
    } else {
        state.patience += 1;
    }
    return state;
}

// Active cluster indices for a stage. Curriculum accumulates from the easiest
// cluster C_N downward; anti-curriculum mirrors it from C_1 upward; stage 0
// (and vanilla) activates everything.
inline std::vector<int> active_clusters(Strategy strategy, int stage, int N) {
    if (N < 1) throw std::invalid_argument("active_clusters: N must be >= 1");
    if (stage < 0 || stage > N) throw std::invalid_argument("active_clusters: invalid stage");
    std::vector<int> out;
    if (stage == 0 || strategy == Strategy::vanilla) {
        out.resize(N);
        std::iota(out.begin(), out.end(), 1);
    } else if (strategy == Strategy::anti_curriculum) {
        out.resize(N - stage + 1);
        std::iota(out.begin(), out.end(), 1);
    } else {
        out.resize(N - stage + 1);
        std::iota(out.begin(), out.end(), stage);
    }
    return out;
}

// Mean of the last `window` observations; deterministic re-summation each
// query so a reset leaves no floating-point residue.
class RollingMean {
public:
    explicit RollingMean(int window) : window_(window) {
        if (window < 1) throw std::invalid_argument("RollingMean: window must be >= 1");
        buf_.reserve(window);
    }

    void push(double v) {
        if (static_cast<int>(buf_.size()) < window_) {
            buf_.push_back(v);
        } else {
            buf_[head_] = v;
            head_ = (head_ + 1) % window_;
        }
    }

    double mean() const {
        if (buf_.empty()) throw std::logic_error("RollingMean: no observations");
        double acc = 0.0;
        for (double v : buf_) acc += v;
        return acc / static_cast<double>(buf_.size());
    }

    void reset() {
        buf_.clear();
        head_ = 0;
    }

private:
    int window_;
    std::vector<double> buf_;
    std::size_t head_ = 0;
};

struct TrainConfig {
    Strategy strategy = Strategy::curriculum;
    ScheduleSpec schedule;
    long long total_iterations = 30000;
    int batch_size = 256;
    int clusters = 20;  // N
    int tau_max = 200;
    ClusterMode cluster_mode = ClusterMode::snr;
    WeightKind weighting = WeightKind::uniform;
    double minsnr_gamma = 5.0;
    std::uint64_t seed = 1;
    int smoothing_window = 50;
    long long final_stage_iterations = 0;  // naive_cl; 0 = even share of the budget
    long long checkpoint_every = 1000;
    std::vector<int> hidden = {128, 128, 128};
    int embed_width = 32;
    Activation activation = Activation::silu;
    double learning_rate = 1e-4;
    double ema_decay = 0.9999;

    bool staged() const {
        return strategy == Strategy::curriculum || strategy == Strategy::naive_cl ||
               strategy == Strategy::anti_curriculum;
    }

    void validate() const {
        if (total_iterations < 1)
            throw std::invalid_argument("TrainConfig: total_iterations must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (smoothing_window < 1)
            throw std::invalid_argument("TrainConfig: smoothing_window must be >= 1");
        if (checkpoint_every < 1)
            throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
        if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
            throw std::invalid_argument("TrainConfig: ema_decay must lie in [0, 1]");
        if (staged()) {
            if (clusters < 1 || clusters > schedule.timesteps)
                throw std::invalid_argument("TrainConfig: clusters must lie in [1, T]");
            if (tau_max < 1) throw std::invalid_argument("TrainConfig: tau_max must be >= 1");
            if (cluster_mode == ClusterMode::quantile)
                throw std::invalid_argument(
                    "TrainConfig: quantile clusters are noise-level intervals and cannot drive "
                    "the discrete-timestep trainer; use uniform or snr");
            if (final_stage_iterations < 0 || final_stage_iterations > total_iterations)
                throw std::invalid_argument(
                    "TrainConfig: final_stage_iterations must lie in [0, total_iterations]");
        }
    }
};

struct RunRecord {
    long long iteration;
    int stage;
    int active_size;  // timesteps covered by the active union
    double loss;
    double smoothed_loss;
};

struct RunLog {
    std::vector<RunRecord> records;
    std::vector<long long> stage_transitions;  // first iteration of each new stage
    bool budget_exhausted = false;  // stages still pending when the budget ran out

    void write_csv(const std::filesystem::path& path) const {
        csv::File f(path, {"iteration", "stage", "active_size", "loss", "smoothed_loss"});
        for (const auto& r : records)
            f.row({csv::num(r.iteration), csv::num(r.stage), csv::num(r.active_size),
                   csv::num(r.loss), csv::num(r.smoothed_loss)});
    }
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(long long iteration, int stage)
        : std::runtime_error("training diverged: non-finite loss at iteration " +
                             std::to_string(iteration) + " (stage " + std::to_string(stage) + ")"),
          iteration(iteration),
          stage(stage) {}

    long long iteration;
    int stage;
};

// Everything one optimizer step needs, bundled so strategy loops and ad-hoc
// studies share the identical step implementation.
struct TrainerCore {
    TrainConfig cfg;
    NoiseSchedule schedule;
    EmbeddingTable embeddings;
    ClusterSet clusters;
    Denoiser model;
    OptimizerState opt;
    EmaShadow ema;
    WeightFn weight_fn;
    const PointSet* data = nullptr;
    TrainBatch batch;
    BatchBuffers buffers;
    Rng data_rng{0};
    Gradients grads;

    static TrainerCore create(const TrainConfig& cfg, const PointSet& dataset) {
        cfg.validate();
        if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

        TrainerCore core;
        core.cfg = cfg;
        core.schedule = build_schedule(cfg.schedule);
        core.embeddings = EmbeddingTable::build(cfg.schedule.timesteps, cfg.embed_width);
        if (cfg.staged()) {
            const ClusterMode mode =
                cfg.strategy == Strategy::naive_cl ? ClusterMode::uniform : cfg.cluster_mode;
            core.clusters = mode == ClusterMode::snr ? snr_clusters(core.schedule, cfg.clusters)
                                                     : uniform_clusters(core.schedule.T, cfg.clusters);
        } else {
            core.clusters = uniform_clusters(core.schedule.T, 1);
        }

        Rng init_rng(derive_seed(cfg.seed, "model-init"));
        core.model = Denoiser::init(dataset.dim, cfg.embed_width, cfg.hidden, cfg.activation,
                                    init_rng);
        core.opt = OptimizerState::init(core.model, cfg.learning_rate);
        core.ema = EmaShadow::init(core.model, cfg.ema_decay);
        core.weight_fn = make_weight_fn(cfg.weighting, core.schedule, cfg.minsnr_gamma);
        core.data = &dataset;
        core.buffers.configure(core.model, cfg.batch_size);
        core.data_rng = Rng(derive_seed(cfg.seed, "train-data"));
        core.grads = Gradients::like(core.model);
        core.batch.dim = dataset.dim;
        core.batch.batch = cfg.batch_size;
        core.batch.x0.resize(static_cast<std::size_t>(cfg.batch_size) * dataset.dim);
        core.batch.t.resize(cfg.batch_size);
        core.batch.noise.resize(static_cast<std::size_t>(cfg.batch_size) * dataset.dim);
        return core;
    }

    // One optimizer step; timesteps drawn per sample by `draw_t`.
    double step(const std::function<int(Rng&)>& draw_t) {
        const int d = batch.dim;
        for (int b = 0; b < batch.batch; ++b) {
            const auto src = (*data)[data_rng.index(data->size())];
            std::copy(src.begin(), src.end(), batch.x0.begin() + static_cast<std::size_t>(b) * d);
            batch.t[b] = draw_t(data_rng);
            for (int j = 0; j < d; ++j)
                batch.noise[static_cast<std::size_t>(b) * d + j] = data_rng.normal();
        }
        const double loss =
            loss_and_grads(model, schedule, embeddings, batch, weight_fn, grads, buffers);
        if (!std::isfinite(loss)) return loss;  // caller reports the divergence; no update
        adam_step(model, opt, grads);
        ema.update(model);
        return loss;
    }
};

struct TrainResult {
    Denoiser model;
    EmaShadow ema;
    RunLog log;
};

// Invoked every checkpoint_every iterations and once after the final step.
using CheckpointFn =
    std::function<void(long long iteration, const Denoiser&, const EmaShadow&)>;

// Full training run under the configured strategy. Pacing consumes the
// smoothed loss; the smoothing window restarts at each stage transition so a
// new stage's patience is judged only against its own losses.
inline TrainResult train(const TrainConfig& cfg, const PointSet& dataset,
                         const CheckpointFn& on_checkpoint = {}) {
    TrainerCore core = TrainerCore::create(cfg, dataset);
    const int N = cfg.staged() ? cfg.clusters : 1;
    const int T = core.schedule.T;

    CurriculumState state{.stage = cfg.staged() ? N : 0,
                          .patience = 0,
                          .patience_max = cfg.staged() ? cfg.tau_max : 1,
                          .best_loss = std::numeric_limits<double>::infinity()};

    // naive_cl ignores pacing: stages take fixed even shares of the budget.
    long long naive_per_stage = 0;
    if (cfg.strategy == Strategy::naive_cl) {
        long long final_its = cfg.final_stage_iterations;
        if (final_its == 0) final_its = cfg.total_iterations / (N + 1);
        naive_per_stage = (cfg.total_iterations - final_its) / N;
        if (naive_per_stage < 1)
            throw std::invalid_argument("train: naive_cl budget leaves empty stages");
    }

    RollingMean roll(cfg.smoothing_window);
    RunLog log;
    log.records.reserve(static_cast<std::size_t>(cfg.total_iterations));

    std::vector<int> active = active_clusters(cfg.strategy, state.stage, N);
    long long active_size = 0;
    for (int i : active) active_size += core.clusters.size(i);

    const bool paced =
        cfg.strategy == Strategy::curriculum || cfg.strategy == Strategy::anti_curriculum;

    auto draw_full = [T](Rng& r) { return static_cast<int>(r.below(static_cast<std::uint64_t>(T))); };
    auto draw_active = [&core, &active](Rng& r) {
        return sample_timestep(core.clusters, active, r);
    };

    for (long long iter = 0; iter < cfg.total_iterations; ++iter) {
        // naive_cl transitions are scheduled, not paced
        if (cfg.strategy == Strategy::naive_cl && state.stage > 0 &&
            iter == naive_per_stage * (N - state.stage + 1)) {
            state.stage -= 1;
            log.stage_transitions.push_back(iter);
            roll.reset();
            active = active_clusters(cfg.strategy, state.stage, N);
            active_size = 0;
            for (int i : active) active_size += core.clusters.size(i);
        }

        const int stage_used = state.stage;
        const double loss = core.step(state.stage > 0 ? std::function<int(Rng&)>(draw_active)
                                                      : std::function<int(Rng&)>(draw_full));
        if (!std::isfinite(loss)) throw TrainingDiverged(iter, stage_used);

        roll.push(loss);
        const double smoothed = roll.mean();
        log.records.push_back({iter, stage_used, static_cast<int>(stage_used > 0 ? active_size : T),
                               loss, smoothed});

        if (paced && state.stage > 0) {
            state = pacing_step(smoothed, state);
            if (state.stage != stage_used) {
                log.stage_transitions.push_back(iter + 1);
                roll.reset();
                active = active_clusters(cfg.strategy, state.stage, N);
                active_size = 0;
                for (int i : active) active_size += core.clusters.size(i);
            }
        }

        if (on_checkpoint && ((iter + 1) % cfg.checkpoint_every == 0))
            on_checkpoint(iter + 1, core.model, core.ema);
    }

    log.budget_exhausted = cfg.staged() && state.stage > 0;
    if (on_checkpoint && (cfg.total_iterations % cfg.checkpoint_every != 0))
        on_checkpoint(cfg.total_iterations, core.model, core.ema);

    return TrainResult{std::move(core.model), std::move(core.ema), std::move(log)};
}

}  // namespace pacediff
