#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pacediff/csv.hpp"
#include "pacediff/stats.hpp"

namespace pacediff {

enum class ScheduleKind { linear, cosine };

inline std::string_view to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::cosine: return "cosine";
    }
    throw std::invalid_argument("unknown schedule kind");
}

inline ScheduleKind schedule_kind_from(std::string_view s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw std::invalid_argument("unknown schedule kind: " + std::string(s));
}

// Discrete forward-process tables. beta[t] is the per-step variance,
// alpha_bar[t] the cumulative product of (1 - beta), snr[t] their ratio
// alpha_bar / (1 - alpha_bar). All three are index-aligned over t = 0..T-1
// and alpha_bar / snr are strictly decreasing.
struct NoiseSchedule {
    int T = 0;
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
    std::vector<double> snr;
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_min = 1e-4,
                                    double beta_max = 0.02) {
    if (T < 2) throw std::invalid_argument("build_schedule: T must be >= 2");

    NoiseSchedule s;
    s.T = T;
    s.kind = kind;
    s.beta.resize(T);

    if (kind == ScheduleKind::linear) {
        if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
            throw std::invalid_argument("build_schedule: need 0 < beta_min <= beta_max < 1");
        for (int t = 0; t < T; ++t)
            s.beta[t] = beta_min + (beta_max - beta_min) * t / static_cast<double>(T - 1);
    } else {
        // Squared-cosine alpha_bar profile with offset 0.008; beta comes from
        // consecutive ratios and is capped at 0.999 (the profile reaches zero
        // at the right edge).
        constexpr double offset = 0.008;
        auto profile = [](double u) {
            const double z = (u + offset) / (1.0 + offset) * 1.5707963267948966;
            const double c = std::cos(z);
            return c * c;
        };
        for (int t = 0; t < T; ++t) {
            const double ratio = profile((t + 1) / static_cast<double>(T)) /
                                 profile(t / static_cast<double>(T));
            s.beta[t] = std::min(1.0 - ratio, 0.999);
        }
    }

    s.alpha_bar.resize(T);
    s.snr.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
        s.snr[t] = prod / (1.0 - prod);
    }
    return s;
}

// Schedule parameters as they appear in config files. Linear with the
// standard [1e-4, 0.02] beta ramp is the stock setup; under it the
// adjacent-step KL decays cleanly with t, which the analysis tooling leans on.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::linear;
    int timesteps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
};

inline NoiseSchedule build_schedule(const ScheduleSpec& spec) {
    return build_schedule(spec.kind, spec.timesteps, spec.beta_min, spec.beta_max);
}

inline void check_timestep(const NoiseSchedule& s, int t) {
    if (t < 0 || t >= s.T) throw std::out_of_range("timestep out of range: " + std::to_string(t));
}

inline void forward_sample_into(const NoiseSchedule& s, int t, std::span<const double> x0,
                                std::span<const double> noise, std::span<double> out) {
    check_timestep(s, t);
    if (x0.size() != noise.size() || x0.size() != out.size())
        throw std::invalid_argument("forward_sample: dimension mismatch");
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * noise[i];
}

inline std::vector<double> forward_sample(const NoiseSchedule& s, std::span<const double> x0,
                                          int t, std::span<const double> noise) {
    std::vector<double> out(x0.size());
    forward_sample_into(s, t, x0, noise, out);
    return out;
}

inline void write_schedule_csv(const NoiseSchedule& s, const std::filesystem::path& path) {
    csv::File f(path, {"t", "beta", "alpha_bar", "snr"});
    for (int t = 0; t < s.T; ++t)
        f.row({csv::num(t), csv::num(s.beta[t]), csv::num(s.alpha_bar[t]), csv::num(s.snr[t])});
}

// Log-normal noise-level law: log(sigma) ~ N(p_mean, p_std^2).
struct LogNormalNoiseDist {
    double p_mean = -1.2;
    double p_std = 1.2;
};

// Quantile in log-sigma space.
inline double quantile(const LogNormalNoiseDist& d, double q) {
    if (!(d.p_std > 0.0)) throw std::invalid_argument("LogNormalNoiseDist: p_std must be > 0");
    return d.p_mean + d.p_std * normal_quantile(q);  // rejects q outside (0,1)
}

inline double cdf(const LogNormalNoiseDist& d, double log_sigma) {
    if (!(d.p_std > 0.0)) throw std::invalid_argument("LogNormalNoiseDist: p_std must be > 0");
    return normal_cdf((log_sigma - d.p_mean) / d.p_std);
}

}  // namespace pacediff
