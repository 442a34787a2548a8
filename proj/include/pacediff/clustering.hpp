#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pacediff/csv.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/schedule.hpp"

namespace pacediff {

enum class ClusterMode { uniform, snr, quantile };

inline std::string_view to_string(ClusterMode m) {
    switch (m) {
        case ClusterMode::uniform: return "uniform";
        case ClusterMode::snr: return "snr";
        case ClusterMode::quantile: return "quantile";
    }
    throw std::invalid_argument("unknown cluster mode");
}

inline ClusterMode cluster_mode_from(std::string_view s) {
    if (s == "uniform") return ClusterMode::uniform;
    if (s == "snr") return ClusterMode::snr;
    if (s == "quantile") return ClusterMode::quantile;
    throw std::invalid_argument("unknown cluster mode: " + std::string(s));
}

// Ordered partition into N clusters C_i = [boundaries[i-1], boundaries[i]),
// i = 1..N. For uniform/snr modes the boundaries are integral timesteps with
// boundaries[0] = 0 and boundaries[N] = T; for quantile mode they are log-sigma
// noise levels.
struct ClusterSet {
    ClusterMode mode = ClusterMode::uniform;
    int N = 0;
    std::vector<double> boundaries;  // N+1 strictly increasing edges

    bool timestep_mode() const { return mode != ClusterMode::quantile; }
    int timesteps() const { return static_cast<int>(boundaries.back()); }
    int lo(int i) const { return static_cast<int>(boundaries[i - 1]); }  // 1-based cluster index
    int hi(int i) const { return static_cast<int>(boundaries[i]); }
    int size(int i) const { return hi(i) - lo(i); }
};

namespace detail {

inline void validate_edges(const ClusterSet& c) {
    if (static_cast<int>(c.boundaries.size()) != c.N + 1)
        throw std::logic_error("cluster boundaries: wrong count");
    for (int i = 0; i < c.N; ++i)
        if (!(c.boundaries[i] < c.boundaries[i + 1]))
            throw std::runtime_error("cluster boundaries not strictly increasing");
}

}  // namespace detail

inline ClusterSet uniform_clusters(int T, int N) {
    if (N < 1) throw std::invalid_argument("uniform_clusters: N must be >= 1");
    if (N > T) throw std::invalid_argument("uniform_clusters: N must not exceed T");
    ClusterSet c;
    c.mode = ClusterMode::uniform;
    c.N = N;
    c.boundaries.resize(N + 1);
    for (int i = 0; i <= N; ++i)
        c.boundaries[i] = static_cast<double>(static_cast<long long>(i) * T / N);
    detail::validate_edges(c);
    return c;
}

// Equal spans of log-SNR. Boundary l_i is the first timestep whose log-SNR has
// dropped below i-1 N-ths of the total log-SNR range; empty intervals are
// repaired by nudging boundaries so every cluster keeps at least one timestep.
inline ClusterSet snr_clusters(const NoiseSchedule& s, int N) {
    if (N < 1) throw std::invalid_argument("snr_clusters: N must be >= 1");
    if (N > s.T) throw std::invalid_argument("snr_clusters: N must not exceed T");
    for (int t = 0; t + 1 < s.T; ++t)
        if (!(s.snr[t] > s.snr[t + 1]))
            throw std::invalid_argument("snr_clusters: snr table must be strictly decreasing");

    const double top = std::log(s.snr[0]);
    const double span = top - std::log(s.snr[s.T - 1]);

    ClusterSet c;
    c.mode = ClusterMode::snr;
    c.N = N;
    c.boundaries.resize(N + 1);
    c.boundaries[0] = 0.0;
    c.boundaries[N] = static_cast<double>(s.T);
    for (int i = 1; i < N; ++i) {
        const double level = top - span * i / static_cast<double>(N);
        int t = 0;
        while (t < s.T && std::log(s.snr[t]) > level) ++t;
        c.boundaries[i] = static_cast<double>(t);
    }
    for (int i = 1; i < N; ++i)  // forward repair: no empty cluster on the left
        c.boundaries[i] = std::max(c.boundaries[i], c.boundaries[i - 1] + 1.0);
    for (int i = N - 1; i >= 1; --i)  // backward repair: no empty cluster on the right
        c.boundaries[i] = std::min(c.boundaries[i], c.boundaries[i + 1] - 1.0);
    detail::validate_edges(c);
    return c;
}

inline ClusterSet quantile_clusters(const LogNormalNoiseDist& d, int N,
                                    double tail_epsilon = 1e-4) {
    if (N < 1) throw std::invalid_argument("quantile_clusters: N must be >= 1");
    ClusterSet c;
    c.mode = ClusterMode::quantile;
    c.N = N;
    c.boundaries.resize(N + 1);
    c.boundaries[0] = quantile(d, tail_epsilon);
    c.boundaries[N] = quantile(d, 1.0 - tail_epsilon);
    for (int i = 1; i < N; ++i) c.boundaries[i] = quantile(d, i / static_cast<double>(N));
    detail::validate_edges(c);  // fails when 1/N falls inside the truncated tails
    return c;
}

// Cluster index (1-based) containing timestep t.
inline int cluster_of(const ClusterSet& c, int t) {
    if (!c.timestep_mode())
        throw std::invalid_argument("cluster_of: timestep lookup on noise-level clusters");
    if (t < 0 || t >= c.timesteps())
        throw std::out_of_range("cluster_of: timestep out of range: " + std::to_string(t));
    const auto it = std::upper_bound(c.boundaries.begin(), c.boundaries.end(),
                                     static_cast<double>(t));
    return static_cast<int>(it - c.boundaries.begin());
}

// Cluster index containing a log-sigma level; values beyond the truncated
// tails fall into the first or last cluster.
inline int cluster_of_level(const ClusterSet& c, double log_sigma) {
    if (c.timestep_mode())
        throw std::invalid_argument("cluster_of_level: level lookup on timestep clusters");
    const auto it = std::upper_bound(c.boundaries.begin(), c.boundaries.end(), log_sigma);
    const int i = static_cast<int>(it - c.boundaries.begin());
    return std::clamp(i, 1, c.N);
}

// Uniform draw over the union of the active clusters (1-based indices).
inline int sample_timestep(const ClusterSet& c, const std::vector<int>& active, Rng& rng) {
    if (!c.timestep_mode())
        throw std::invalid_argument("sample_timestep: requires timestep clusters");
    if (active.empty()) throw std::invalid_argument("sample_timestep: empty active set");
    long long total = 0;
    for (int i : active) {
        if (i < 1 || i > c.N)
            throw std::out_of_range("sample_timestep: cluster index out of range");
        total += c.size(i);
    }
    long long k = static_cast<long long>(rng.below(static_cast<std::uint64_t>(total)));
    for (int i : active) {
        const long long w = c.size(i);
        if (k < w) return c.lo(i) + static_cast<int>(k);
        k -= w;
    }
    throw std::logic_error("sample_timestep: unreachable");
}

// Mean SNR over cluster i. Timestep modes average the schedule table; quantile
// mode reports the SNR implied by the interval's midpoint noise level.
inline double mean_snr(const ClusterSet& c, int i, const NoiseSchedule* s = nullptr) {
    if (i < 1 || i > c.N) throw std::out_of_range("mean_snr: cluster index out of range");
    if (c.timestep_mode()) {
        if (s == nullptr) throw std::invalid_argument("mean_snr: schedule required");
        double acc = 0.0;
        for (int t = c.lo(i); t < c.hi(i); ++t) acc += s->snr[t];
        return acc / c.size(i);
    }
    const double mid = 0.5 * (c.boundaries[i - 1] + c.boundaries[i]);
    return std::exp(-2.0 * mid);  // snr(sigma) = 1 / sigma^2
}

inline void write_clusters_csv(const ClusterSet& c, const std::filesystem::path& path,
                               const NoiseSchedule* s = nullptr) {
    csv::File f(path, {"i", "l_i", "l_ip1", "mean_snr"});
    for (int i = 1; i <= c.N; ++i)
        f.row({csv::num(i), csv::num(c.boundaries[i - 1]), csv::num(c.boundaries[i]),
               csv::num(mean_snr(c, i, s))});
}

}  // namespace pacediff
