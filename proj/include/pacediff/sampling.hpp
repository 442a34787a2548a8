#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pacediff/model.hpp"
#include "pacediff/point_set.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/schedule.hpp"

namespace pacediff {

struct SamplerConfig {
    int steps = 250;
    bool use_ema = true;
    std::uint64_t seed = 1234;
};

// Batched noise predictor: fills eps with the model output for every row of x
// at shared timestep t. An abstraction point so tests can plug in analytic
// predictors.
using NoisePredictor = std::function<void(const PointSet& x, int t, PointSet& eps)>;

namespace detail {

// Unit-major forward pass over row-major points, in fixed-size column blocks.
class BatchedPredictor {
public:
    BatchedPredictor(const Denoiser& model, const EmbeddingTable& emb)
        : model_(model), emb_(emb) {
        if (emb.width != model.embed_width)
            throw std::invalid_argument("BatchedPredictor: embedding width mismatch");
    }

    void operator()(const PointSet& x, int t, PointSet& eps) {
        const int d = model_.data_dim;
        if (x.dim != d || eps.dim != d || x.size() != eps.size())
            throw std::invalid_argument("BatchedPredictor: shape mismatch");
        const auto erow = emb_.row(t);
        std::size_t done = 0;
        while (done < x.size()) {
            const int B = static_cast<int>(std::min<std::size_t>(kBlock, x.size() - done));
            // full blocks and the tail block keep separate buffers so repeated
            // calls do not reallocate
            BatchBuffers& buffers_ = B == static_cast<int>(kBlock) ? block_ : tail_;
            if (buffers_.batch != B) buffers_.configure(model_, B);
            double* A0 = buffers_.a[0].data();
            for (int b = 0; b < B; ++b) {
                const auto row = x[done + b];
                for (int j = 0; j < d; ++j) A0[static_cast<std::size_t>(j) * B + b] = row[j];
                for (int j = 0; j < model_.embed_width; ++j)
                    A0[static_cast<std::size_t>(d + j) * B + b] = erow[j];
            }
            forward_batch(model_, buffers_);
            const double* out = buffers_.a[model_.layers()].data();
            for (int b = 0; b < B; ++b) {
                auto row = eps[done + b];
                for (int j = 0; j < d; ++j) row[j] = out[static_cast<std::size_t>(j) * B + b];
            }
            done += B;
        }
    }

private:
    static constexpr std::size_t kBlock = 1024;
    Denoiser model_;
    EmbeddingTable emb_;
    BatchBuffers block_, tail_;
};

}  // namespace detail

inline NoisePredictor make_predictor(const Denoiser& model, const EmbeddingTable& emb) {
    return detail::BatchedPredictor(model, emb);
}

// Evenly spaced sampling timesteps from T-1 down to 0 inclusive; a single
// step collapses to {T-1}.
inline std::vector<int> strided_timesteps(int T, int steps) {
    if (steps < 1) throw std::invalid_argument("strided_timesteps: steps must be >= 1");
    if (steps > T) throw std::invalid_argument("strided_timesteps: steps must not exceed T");
    if (steps == 1) return {T - 1};
    std::vector<int> ts(steps);
    for (int k = 0; k < steps; ++k)
        ts[k] = static_cast<int>(
            std::lround(static_cast<double>(T - 1) * (steps - 1 - k) / (steps - 1)));
    return ts;
}

// Ancestral sampler. Each visited timestep applies the posterior-mean update
// with coefficients respaced to the stride (alpha_eff is the alpha_bar ratio
// between consecutive visited steps), adds sqrt(beta_eff) noise on all but
// the final step, and returns `count` points.
inline PointSet ddpm_sample(const NoisePredictor& predict, int dim, const NoiseSchedule& s,
                            const SamplerConfig& cfg, std::size_t count) {
    if (dim < 1) throw std::invalid_argument("ddpm_sample: dim must be >= 1");
    if (count < 1) throw std::invalid_argument("ddpm_sample: count must be >= 1");
    const std::vector<int> ts = strided_timesteps(s.T, cfg.steps);

    Rng rng(cfg.seed);
    PointSet x(dim, count);
    rng.fill_normal(x.data);
    PointSet eps(dim, count);

    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const double abar = s.alpha_bar[t];
        const double abar_prev = k + 1 < ts.size() ? s.alpha_bar[ts[k + 1]] : 1.0;
        const double alpha_eff = abar / abar_prev;
        const double beta_eff = 1.0 - alpha_eff;
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);
        const double eps_coef = beta_eff / std::sqrt(1.0 - abar);
        const bool add_noise = k + 1 < ts.size();
        const double sigma = add_noise ? std::sqrt(beta_eff) : 0.0;

        predict(x, t, eps);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            double v = inv_sqrt_alpha * (x.data[i] - eps_coef * eps.data[i]);
            if (add_noise) v += sigma * rng.normal();
            x.data[i] = v;
        }
        for (double v : x.data)
            if (!std::isfinite(v))
                throw std::runtime_error("ddpm_sample: non-finite state at t = " +
                                         std::to_string(t));
    }
    return x;
}

inline PointSet ddpm_sample(const Denoiser& model, const NoiseSchedule& s,
                            const SamplerConfig& cfg, std::size_t count) {
    const EmbeddingTable emb = EmbeddingTable::build(s.T, model.embed_width);
    return ddpm_sample(make_predictor(model, emb), model.data_dim, s, cfg, count);
}

// As ddpm_sample, but the interval predictor handles t in [t_lo, t_hi) and
// the reference predictor every other timestep. Identical RNG consumption, so
// the trivial interval choices reproduce ddpm_sample bit-exactly.
inline PointSet hybrid_sample(const NoisePredictor& interval_predict, int t_lo, int t_hi,
                              const NoisePredictor& reference_predict, int dim,
                              const NoiseSchedule& s, const SamplerConfig& cfg,
                              std::size_t count) {
    if (t_lo < 0 || t_hi > s.T || t_lo > t_hi)
        throw std::invalid_argument("hybrid_sample: bad interval");
    NoisePredictor dispatch = [&](const PointSet& x, int t, PointSet& eps) {
        if (t >= t_lo && t < t_hi)
            interval_predict(x, t, eps);
        else
            reference_predict(x, t, eps);
    };
    return ddpm_sample(dispatch, dim, s, cfg, count);
}

inline PointSet hybrid_sample(const Denoiser& interval_model, int t_lo, int t_hi,
                              const Denoiser& reference_model, const NoiseSchedule& s,
                              const SamplerConfig& cfg, std::size_t count) {
    if (interval_model.data_dim != reference_model.data_dim)
        throw std::invalid_argument("hybrid_sample: model dimension mismatch");
    const EmbeddingTable emb_i = EmbeddingTable::build(s.T, interval_model.embed_width);
    const EmbeddingTable emb_r = EmbeddingTable::build(s.T, reference_model.embed_width);
    return hybrid_sample(make_predictor(interval_model, emb_i), t_lo, t_hi,
                         make_predictor(reference_model, emb_r), reference_model.data_dim, s,
                         cfg, count);
}

}  // namespace pacediff
