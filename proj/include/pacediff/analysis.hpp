#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pacediff/csv.hpp"
#include "pacediff/dataset.hpp"
#include "pacediff/point_set.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/sampling.hpp"
#include "pacediff/schedule.hpp"
#include "pacediff/stats.hpp"
#include "pacediff/training.hpp"

namespace pacediff {

// Smallest log a double can represent; densities below it count as underflow.
inline constexpr double kLogDoubleMin = -708.396418532264078;

struct DensityEstimate {
    double log_density = -std::numeric_limits<double>::infinity();
    bool underflowed = false;

    double density() const { return std::exp(log_density); }
};

// Log marginal density of the forward process at timestep t: a uniform
// mixture of Gaussians N(sqrt(abar_t) y, (1 - abar_t) I) over dataset points
// y. L >= 1 subsamples that many mixture components with replacement; L == 0
// sweeps the whole dataset (exact under the empirical data distribution).
inline DensityEstimate estimate_marginal_density(std::span<const double> x, int t,
                                                 const PointSet& dataset,
                                                 const NoiseSchedule& s, int L, Rng& rng) {
    check_timestep(s, t);
    if (dataset.empty()) throw std::invalid_argument("estimate_marginal_density: empty dataset");
    if (static_cast<int>(x.size()) != dataset.dim)
        throw std::invalid_argument("estimate_marginal_density: dimension mismatch");
    if (L < 0) throw std::invalid_argument("estimate_marginal_density: L must be >= 0");

    const double abar = s.alpha_bar[t];
    const double var = 1.0 - abar;
    const double root_abar = std::sqrt(abar);
    const int d = dataset.dim;
    const double log_norm = -0.5 * d * std::log(6.283185307179586476925286766559 * var);
    const double inv_2var = 0.5 / var;

    const std::size_t n = L == 0 ? dataset.size() : static_cast<std::size_t>(L);
    double max_lk = -std::numeric_limits<double>::infinity();
    std::vector<double> lks(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto y = dataset[L == 0 ? j : rng.index(dataset.size())];
        double sq = 0.0;
        for (int k = 0; k < d; ++k) {
            const double diff = x[k] - root_abar * y[k];
            sq += diff * diff;
        }
        lks[j] = log_norm - sq * inv_2var;
        max_lk = std::max(max_lk, lks[j]);
    }
    double acc = 0.0;
    for (double lk : lks) acc += std::exp(lk - max_lk);
    DensityEstimate r;
    r.log_density = max_lk + std::log(acc) - std::log(static_cast<double>(n));
    r.underflowed = !(r.log_density >= kLogDoubleMin);
    return r;
}

struct KlEstimate {
    int t = 0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    int samples_used = 0;
    int degenerate = 0;       // terms dropped because p_t underflowed
    bool unreliable = false;  // more than 10% of terms degenerate
};

namespace detail {

// Van der Corput radical inverse: digit-reversed i in the given base.
inline double radical_inverse(std::uint64_t i, int base) {
    const auto b = static_cast<std::uint64_t>(base);
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (i) {
        r += f * static_cast<double>(i % b);
        i /= b;
        f *= inv;
    }
    return r;
}

inline std::vector<int> first_primes(int count) {
    std::vector<int> primes;
    for (int v = 2; static_cast<int>(primes.size()) < count; ++v) {
        bool ok = true;
        for (int p : primes) {
            if (p * p > v) break;
            if (v % p == 0) { ok = false; break; }
        }
        if (ok) primes.push_back(v);
    }
    return primes;
}

// Distance along a Hilbert curve of order k through the quantized cell
// (hx, hy); consecutive distances are spatially adjacent cells.
inline std::uint64_t hilbert_index(std::uint32_t hx, std::uint32_t hy, int k) {
    std::uint64_t d = 0;
    for (std::uint32_t sbit = 1u << (k - 1); sbit; sbit >>= 1) {
        const std::uint32_t rx = (hx & sbit) ? 1u : 0u;
        const std::uint32_t ry = (hy & sbit) ? 1u : 0u;
        d += static_cast<std::uint64_t>(sbit) * sbit * ((3u * rx) ^ ry);
        if (ry == 0) {
            if (rx == 1) {
                hx = sbit - 1 - hx;
                hy = sbit - 1 - hy;
            }
            std::swap(hx, hy);
        }
    }
    return d;
}

// Dataset traversal order that keeps spatial neighbours adjacent (Hilbert
// curve over the first two coordinates; 1-D: coordinate order). A smooth
// index -> point map is what lets a low-discrepancy sweep of the index cancel
// noise; any order is valid.
inline std::vector<std::size_t> coherent_tour(const PointSet& data) {
    std::vector<std::size_t> tour(data.size());
    for (std::size_t i = 0; i < tour.size(); ++i) tour[i] = i;
    if (data.dim == 1) {
        std::sort(tour.begin(), tour.end(),
                  [&](std::size_t a, std::size_t b) { return data[a][0] < data[b][0]; });
        return tour;
    }
    double lo0 = data[0][0], hi0 = lo0, lo1 = data[0][1], hi1 = lo1;
    for (std::size_t i = 1; i < data.size(); ++i) {
        lo0 = std::min(lo0, data[i][0]);
        hi0 = std::max(hi0, data[i][0]);
        lo1 = std::min(lo1, data[i][1]);
        hi1 = std::max(hi1, data[i][1]);
    }
    const int k = 10;  // 1024 x 1024 cells: far finer than any practical dataset
    const double g = static_cast<double>((1u << k) - 1);
    const double sx = hi0 > lo0 ? g / (hi0 - lo0) : 0.0;
    const double sy = hi1 > lo1 ? g / (hi1 - lo1) : 0.0;
    std::vector<std::uint64_t> key(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto qx = static_cast<std::uint32_t>((data[i][0] - lo0) * sx);
        const auto qy = static_cast<std::uint32_t>((data[i][1] - lo1) * sy);
        key[i] = hilbert_index(qx, qy, k);
    }
    std::sort(tour.begin(), tour.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) return key[a] < key[b];
        return a < b;
    });
    return tour;
}

}  // namespace detail

// Monte-Carlo estimate of KL(p_{t-1} || p_t): mean log-density ratio over M
// points forward-sampled at t-1. Underflowing p_t terms are excluded from the
// mean and counted.
//
// Adjacent-step KL shrinks far below iid Monte-Carlo noise at practical M
// (per-term sd is about sqrt(2 KL), so the relative error blows up as KL
// falls), so the M draws are arranged for variance cancellation: antithetic
// +/-eps pairs over a randomly shifted Halton sweep of (dataset tour, eps
// quantiles). Every x_i is still an exact draw from p_{t-1}; only the joint
// layout is structured. The rng's sole job is the random shift, which keeps
// the estimator unbiased over seeds.
inline KlEstimate estimate_kl(int t, const PointSet& dataset, const NoiseSchedule& s, int M,
                              int L, Rng& rng) {
    if (t < 1 || t >= s.T) throw std::invalid_argument("estimate_kl: need 1 <= t < T");
    if (M < 1) throw std::invalid_argument("estimate_kl: M must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("estimate_kl: empty dataset");

    const int d = dataset.dim;
    const std::size_t n = dataset.size();
    const std::vector<std::size_t> tour = detail::coherent_tour(dataset);
    const std::vector<int> bases = detail::first_primes(d + 1);
    std::vector<double> shift(static_cast<std::size_t>(d) + 1);
    for (auto& v : shift) v = rng.uniform();

    std::vector<double> x(d), eps(d), noise(d), terms, group_means;
    terms.reserve(static_cast<std::size_t>(M));
    KlEstimate r;
    r.t = t;
    const int pairs = M / 2;
    for (int i = 0; i < pairs + (M % 2); ++i) {
        double u0 = detail::radical_inverse(static_cast<std::uint64_t>(i), bases[0]) + shift[0];
        u0 -= std::floor(u0);
        const auto cell = std::min(static_cast<std::size_t>(u0 * static_cast<double>(n)), n - 1);
        const auto y = dataset[tour[cell]];
        for (int k = 0; k < d; ++k) {
            double u = detail::radical_inverse(static_cast<std::uint64_t>(i), bases[k + 1]) +
                       shift[static_cast<std::size_t>(k) + 1];
            u -= std::floor(u);
            eps[k] = normal_quantile(std::min(std::max(u, 1e-16), 1.0 - 1e-16));
        }
        double group_sum = 0.0;
        int group_count = 0;
        const int signs = i < pairs ? 2 : 1;  // odd M: one unpaired trailing draw
        for (int sg = 0; sg < signs; ++sg) {
            for (int k = 0; k < d; ++k) noise[k] = sg == 0 ? eps[k] : -eps[k];
            forward_sample_into(s, t - 1, y, noise, x);
            const DensityEstimate prev = estimate_marginal_density(x, t - 1, dataset, s, L, rng);
            const DensityEstimate cur = estimate_marginal_density(x, t, dataset, s, L, rng);
            if (cur.underflowed) {
                r.degenerate += 1;
                continue;
            }
            terms.push_back(prev.log_density - cur.log_density);
            group_sum += prev.log_density - cur.log_density;
            group_count += 1;
        }
        if (group_count > 0)
            group_means.push_back(group_sum / static_cast<double>(group_count));
    }
    r.samples_used = static_cast<int>(terms.size());
    if (!terms.empty()) {
        r.estimate = mean(terms);
        // spread taken over pair means: members of a +/- pair are dependent
        r.stderr_ = mean_stderr(group_means).stderr_;
    } else {
        r.estimate = std::numeric_limits<double>::quiet_NaN();
        r.stderr_ = std::numeric_limits<double>::quiet_NaN();
    }
    r.unreliable = 10LL * r.degenerate > M;
    return r;
}

struct KlCurve {
    std::vector<KlEstimate> points;
    int m = 0;
    int l = 0;

    bool any_unreliable() const {
        return std::any_of(points.begin(), points.end(),
                           [](const KlEstimate& p) { return p.unreliable; });
    }

    // Rank correlation between t and the KL estimate.
    double spearman_vs_t() const {
        std::vector<double> ts, vals;
        for (const auto& p : points) {
            ts.push_back(static_cast<double>(p.t));
            vals.push_back(p.estimate);
        }
        return spearman(ts, vals);
    }

    void write_csv(const std::filesystem::path& path) const {
        csv::File f(path, {"t", "estimate", "stderr", "degenerate_count"});
        for (const auto& p : points)
            f.row({csv::num(p.t), csv::num(p.estimate), csv::num(p.stderr_),
                   csv::num(p.degenerate)});
    }
};

// One estimate per requested timestep, each on its own stream derived from
// the seed and t, so the result is independent of evaluation order and of
// which other timesteps were requested.
inline KlCurve estimate_kl_curve(const PointSet& dataset, const NoiseSchedule& s,
                                 std::span<const int> timesteps, int M, int L,
                                 std::uint64_t seed) {
    KlCurve curve;
    curve.m = M;
    curve.l = L;
    const std::uint64_t base = derive_seed(seed, "kl-curve");
    for (int t : timesteps) {
        Rng rng(derive_seed(base, static_cast<std::uint64_t>(t)));
        curve.points.push_back(estimate_kl(t, dataset, s, M, L, rng));
    }
    return curve;
}

// Sliced Wasserstein-2: mean 1-D W2 over random unit projections. The
// projection directions come from an internal fixed-seed stream, so the
// metric is deterministic and exactly symmetric in its arguments.
inline double distribution_distance(const PointSet& a, const PointSet& b, int projections = 128,
                                    std::uint64_t seed = 0x51ced) {
    if (a.empty() || b.empty()) throw std::invalid_argument("distribution_distance: empty input");
    if (a.dim != b.dim) throw std::invalid_argument("distribution_distance: dimension mismatch");
    if (projections < 1)
        throw std::invalid_argument("distribution_distance: projections must be >= 1");

    const int d = a.dim;
    Rng rng(derive_seed(seed, "sliced-w2"));
    std::vector<double> dir(d), va(a.size()), vb(b.size());
    double total = 0.0;
    for (int p = 0; p < projections; ++p) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& c : dir) {
                c = rng.normal();
                norm += c * c;
            }
        } while (norm == 0.0);
        const double inv = 1.0 / std::sqrt(norm);
        for (double& c : dir) c *= inv;

        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto row = a[i];
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += dir[k] * row[k];
            va[i] = acc;
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            const auto row = b[i];
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += dir[k] * row[k];
            vb[i] = acc;
        }
        std::sort(va.begin(), va.end());
        std::sort(vb.begin(), vb.end());

        // quantile-function quadrature over the merged mass breakpoints
        const double na = static_cast<double>(va.size()), nb = static_cast<double>(vb.size());
        std::size_t ia = 0, ib = 0;
        double q = 0.0, w2sq = 0.0;
        while (ia < va.size() && ib < vb.size()) {
            const double nexta = static_cast<double>(ia + 1) / na;
            const double nextb = static_cast<double>(ib + 1) / nb;
            const double next = std::min(nexta, nextb);
            const double diff = va[ia] - vb[ib];
            w2sq += (next - q) * diff * diff;
            q = next;
            if (nexta == next) ++ia;
            if (nextb == next) ++ib;
        }
        total += std::sqrt(w2sq);
    }
    return total / projections;
}

struct IntervalTrace {
    int index = 0;  // 1-based interval number
    int t_lo = 0;
    int t_hi = 0;
    std::vector<double> raw_loss;       // one entry per iteration
    std::vector<double> smoothed_loss;  // rolling mean, same length
    std::vector<double> norm_loss;      // min-max of smoothed, same length
    std::vector<long long> eval_iterations;
    std::vector<double> task_metric;  // distance at each eval point
    long long convergence_iteration = 0;
};

struct ConvergenceStudy {
    std::vector<IntervalTrace> intervals;
    double spearman_index_vs_convergence = 0.0;

    void write_csv(const std::filesystem::path& path) const {
        csv::File f(path, {"interval", "iteration", "raw_loss", "norm_loss", "task_metric"});
        for (const auto& iv : intervals)
            for (std::size_t e = 0; e < iv.eval_iterations.size(); ++e) {
                const auto it = iv.eval_iterations[e];
                f.row({csv::num(iv.index), csv::num(it), csv::num(iv.raw_loss[it - 1]),
                       csv::num(iv.norm_loss[it - 1]), csv::num(iv.task_metric[e])});
            }
    }
};

struct ConvergenceOptions {
    int intervals = 20;
    long long iterations = 6000;  // budget per interval model (and the reference)
    long long eval_every = 500;
    int eval_count = 1024;      // sample size per task-metric evaluation
    int eval_steps = 100;       // sampler steps during evaluation
    int projections = 64;
    std::uint64_t seed = 0;     // 0 = derive from the training seed
};

// Trains one model per uniform timestep interval, tracking how fast each
// one's loss settles and how well hybrid samples (interval model inside its
// interval, reference model elsewhere) match a fresh draw from the data law.
// The convergence iteration is the last time the min-max-normalized smoothed
// loss exceeds 0.1.
inline ConvergenceStudy run_convergence_study(const DatasetSpec& data_spec,
                                              const PointSet& dataset,
                                              const TrainConfig& base,
                                              const ConvergenceOptions& opts) {
    if (opts.intervals < 2) throw std::invalid_argument("run_convergence_study: need >= 2 intervals");
    if (opts.iterations < 1 || opts.eval_every < 1 || opts.eval_every > opts.iterations)
        throw std::invalid_argument("run_convergence_study: bad iteration/eval cadence");

    const std::uint64_t seed = opts.seed != 0 ? opts.seed : derive_seed(base.seed, "convergence");
    const int T = base.schedule.timesteps;
    const ClusterSet grid = uniform_clusters(T, opts.intervals);

    // fresh reference sample from the generating distribution
    DatasetSpec ref_spec = data_spec;
    ref_spec.size = static_cast<std::size_t>(opts.eval_count);
    ref_spec.seed = derive_seed(seed, "reference-sample");
    const PointSet ref_sample = make_dataset(ref_spec);

    // reference model: vanilla training at the same per-model budget
    TrainConfig ref_cfg = base;
    ref_cfg.strategy = Strategy::vanilla;
    ref_cfg.total_iterations = opts.iterations;
    ref_cfg.seed = derive_seed(seed, "reference-model");
    const TrainResult ref = train(ref_cfg, dataset);
    const Denoiser ref_model = ref.ema.materialize(ref.model);
    const EmbeddingTable emb = EmbeddingTable::build(T, ref_model.embed_width);
    const NoisePredictor ref_predict = make_predictor(ref_model, emb);

    ConvergenceStudy study;
    for (int i = 1; i <= opts.intervals; ++i) {
        IntervalTrace trace;
        trace.index = i;
        trace.t_lo = grid.lo(i);
        trace.t_hi = grid.hi(i);

        TrainConfig cfg = base;
        cfg.strategy = Strategy::vanilla;
        cfg.total_iterations = opts.iterations;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        TrainerCore core = TrainerCore::create(cfg, dataset);

        const int lo = trace.t_lo, width = trace.t_hi - trace.t_lo;
        auto draw = [lo, width](Rng& r) {
            return lo + static_cast<int>(r.below(static_cast<std::uint64_t>(width)));
        };

        RollingMean roll(cfg.smoothing_window);
        for (long long iter = 0; iter < opts.iterations; ++iter) {
            const double loss = core.step(draw);
            if (!std::isfinite(loss)) throw TrainingDiverged(iter, i);
            trace.raw_loss.push_back(loss);
            roll.push(loss);
            trace.smoothed_loss.push_back(roll.mean());

            if ((iter + 1) % opts.eval_every == 0) {
                const Denoiser snapshot = core.ema.materialize(core.model);
                SamplerConfig scfg;
                scfg.steps = opts.eval_steps;
                scfg.seed = derive_seed(seed, derive_seed(static_cast<std::uint64_t>(i),
                                                          static_cast<std::uint64_t>(iter)));
                const PointSet samples =
                    hybrid_sample(make_predictor(snapshot, emb), trace.t_lo, trace.t_hi,
                                  ref_predict, snapshot.data_dim, core.schedule, scfg,
                                  static_cast<std::size_t>(opts.eval_count));
                trace.eval_iterations.push_back(iter + 1);
                trace.task_metric.push_back(
                    distribution_distance(samples, ref_sample, opts.projections));
            }
        }

        const auto [mn_it, mx_it] =
            std::minmax_element(trace.smoothed_loss.begin(), trace.smoothed_loss.end());
        const double mn = *mn_it, mx = *mx_it;
        trace.norm_loss.resize(trace.smoothed_loss.size());
        for (std::size_t k = 0; k < trace.smoothed_loss.size(); ++k)
            trace.norm_loss[k] = mx > mn ? (trace.smoothed_loss[k] - mn) / (mx - mn) : 0.0;

        trace.convergence_iteration = 0;
        for (std::size_t k = trace.norm_loss.size(); k-- > 0;)
            if (trace.norm_loss[k] > 0.1) {
                trace.convergence_iteration = static_cast<long long>(k) + 1;
                break;
            }

        study.intervals.push_back(std::move(trace));
    }

    std::vector<double> idx, conv;
    for (const auto& iv : study.intervals) {
        idx.push_back(static_cast<double>(iv.index));
        conv.push_back(static_cast<double>(iv.convergence_iteration));
    }
    study.spearman_index_vs_convergence = spearman(idx, conv);
    return study;
}

}  // namespace pacediff
