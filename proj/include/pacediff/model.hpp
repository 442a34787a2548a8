#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pacediff/point_set.hpp"
#include "pacediff/rng.hpp"
#include "pacediff/schedule.hpp"

namespace pacediff {

enum class Activation { relu, silu };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::silu: return "silu";
    }
    throw std::invalid_argument("unknown activation");
}

inline Activation activation_from(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "silu") return Activation::silu;
    throw std::invalid_argument("unknown activation: " + std::string(s));
}

// Sinusoidal timestep features, interleaved [sin(t*w_k), cos(t*w_k)] pairs
// with w_k = 10000^(-2k/width), k = 1..width/2.
inline void embed_timestep_into(int t, int width, std::span<double> out) {
    for (int k = 1; 2 * k <= width; ++k) {
        const double w = std::pow(10000.0, -2.0 * k / width);
        out[2 * (k - 1)] = std::sin(t * w);
        out[2 * (k - 1) + 1] = std::cos(t * w);
    }
}

inline std::vector<double> embed_timestep(int t, int T, int width) {
    if (width < 2 || width % 2 != 0)
        throw std::invalid_argument("embed_timestep: width must be a positive even number");
    if (t < 0 || t >= T) throw std::out_of_range("embed_timestep: t out of range");
    std::vector<double> out(width);
    embed_timestep_into(t, width, out);
    return out;
}

// Precomputed embeddings for every timestep of a schedule.
struct EmbeddingTable {
    int T = 0;
    int width = 0;
    std::vector<double> values;  // T x width row-major

    static EmbeddingTable build(int T, int width) {
        EmbeddingTable e;
        e.T = T;
        e.width = width;
        e.values.resize(static_cast<std::size_t>(T) * width);
        for (int t = 0; t < T; ++t)
            embed_timestep_into(t, width, {e.values.data() + static_cast<std::size_t>(t) * width,
                                           static_cast<std::size_t>(width)});
        return e;
    }

    std::span<const double> row(int t) const {
        if (t < 0 || t >= T) throw std::out_of_range("EmbeddingTable: t out of range");
        return {values.data() + static_cast<std::size_t>(t) * width,
                static_cast<std::size_t>(width)};
    }
};

// Fully connected epsilon-prediction network. Input is the noisy point
// concatenated with its timestep embedding; hidden layers share one
// activation, the output layer is linear with width equal to the data
// dimension.
struct Denoiser {
    int data_dim = 0;
    int embed_width = 0;
    Activation activation = Activation::silu;
    std::vector<int> sizes;                   // [data_dim + embed_width, hidden..., data_dim]
    std::vector<std::vector<double>> weights; // per layer, out x in row-major
    std::vector<std::vector<double>> biases;  // per layer, out

    int layers() const { return static_cast<int>(weights.size()); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += w.size();
        for (const auto& b : biases) n += b.size();
        return n;
    }

    // He-normal weights, zero biases.
    static Denoiser init(int data_dim, int embed_width, std::span<const int> hidden,
                         Activation act, Rng& rng) {
        if (data_dim < 1) throw std::invalid_argument("Denoiser: data_dim must be >= 1");
        if (embed_width < 2 || embed_width % 2 != 0)
            throw std::invalid_argument("Denoiser: embed_width must be a positive even number");
        Denoiser m;
        m.data_dim = data_dim;
        m.embed_width = embed_width;
        m.activation = act;
        m.sizes.push_back(data_dim + embed_width);
        for (int h : hidden) {
            if (h < 1) throw std::invalid_argument("Denoiser: hidden width must be >= 1");
            m.sizes.push_back(h);
        }
        m.sizes.push_back(data_dim);
        for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
            const int in = m.sizes[l], out = m.sizes[l + 1];
            const double scale = std::sqrt(2.0 / in);
            auto& w = m.weights.emplace_back(static_cast<std::size_t>(out) * in);
            for (double& v : w) v = scale * rng.normal();
            m.biases.emplace_back(out, 0.0);
        }
        return m;
    }

    // Straightforward single-point forward pass.
    std::vector<double> predict(std::span<const double> x, int t) const {
        if (static_cast<int>(x.size()) != data_dim)
            throw std::invalid_argument("predict: dimension mismatch");
        for (double v : x)
            if (!std::isfinite(v)) throw std::invalid_argument("predict: non-finite input");
        if (t < 0) throw std::out_of_range("predict: negative timestep");

        std::vector<double> cur(sizes[0]);
        std::copy(x.begin(), x.end(), cur.begin());
        embed_timestep_into(t, embed_width, {cur.data() + data_dim,
                                             static_cast<std::size_t>(embed_width)});
        std::vector<double> next;
        for (int l = 0; l < layers(); ++l) {
            const int in = sizes[l], out = sizes[l + 1];
            next.assign(out, 0.0);
            const double* w = weights[l].data();
            for (int o = 0; o < out; ++o) {
                double acc = biases[l][o];
                for (int i = 0; i < in; ++i) acc += w[o * in + i] * cur[i];
                next[o] = acc;
            }
            if (l + 1 < layers()) {
                if (activation == Activation::relu) {
                    for (double& v : next) v = v > 0.0 ? v : 0.0;
                } else {
                    for (double& v : next) v = v / (1.0 + std::exp(-v));
                }
            }
            cur.swap(next);
        }
        for (double v : cur)
            if (!std::isfinite(v)) throw std::runtime_error("predict: non-finite output");
        return cur;
    }
};

// Gradient accumulators congruent to Denoiser parameters.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static Gradients like(const Denoiser& m) {
        Gradients g;
        for (const auto& w : m.weights) g.weights.emplace_back(w.size(), 0.0);
        for (const auto& b : m.biases) g.biases.emplace_back(b.size(), 0.0);
        return g;
    }

    void zero() {
        for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
        for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
    }
};

namespace detail {

inline void check_congruent(const Denoiser& m, const Gradients& g, const char* who) {
    if (g.weights.size() != m.weights.size() || g.biases.size() != m.biases.size())
        throw std::invalid_argument(std::string(who) + ": layer count mismatch");
    for (std::size_t l = 0; l < m.weights.size(); ++l)
        if (g.weights[l].size() != m.weights[l].size() ||
            g.biases[l].size() != m.biases[l].size())
            throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace detail

// Matrices are unit-major: row u holds that unit's value for every batch
// element, so inner loops run contiguously over the batch.
struct BatchBuffers {
    int batch = 0;
    std::vector<std::vector<double>> a;   // activations, layer 0..L
    std::vector<std::vector<double>> z;   // pre-activations, layer 1..L (index l+1)
    std::vector<std::vector<double>> sg;  // sigmoid(z) cache for silu backward
    std::vector<std::vector<double>> dz;  // loss gradient wrt z
    std::vector<double> weight;           // per-sample loss weight

    BatchBuffers() = default;
    BatchBuffers(const Denoiser& m, int batch_) { configure(m, batch_); }

    void configure(const Denoiser& m, int batch_) {
        if (batch_ < 1) throw std::invalid_argument("BatchBuffers: batch must be >= 1");
        batch = batch_;
        const std::size_t B = static_cast<std::size_t>(batch_);
        a.assign(m.sizes.size(), {});
        z.assign(m.sizes.size(), {});
        sg.assign(m.sizes.size(), {});
        dz.assign(m.sizes.size(), {});
        for (std::size_t l = 0; l < m.sizes.size(); ++l) {
            a[l].resize(m.sizes[l] * B);
            if (l > 0) {
                z[l].resize(m.sizes[l] * B);
                sg[l].resize(m.sizes[l] * B);
                dz[l].resize(m.sizes[l] * B);
            }
        }
        weight.resize(B);
    }
};

namespace detail {

// Z = W A + bias broadcast; W is out x in, A is in x B, Z is out x B.
inline void affine_forward(const double* w, const double* bias, const double* A, double* Z,
                           int out, int in, int B) {
    for (int o = 0; o < out; ++o) {
        double* zrow = Z + static_cast<std::size_t>(o) * B;
        std::fill(zrow, zrow + B, bias[o]);
        const double* wrow = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            const double wv = wrow[i];
            const double* arow = A + static_cast<std::size_t>(i) * B;
            for (int b = 0; b < B; ++b) zrow[b] += wv * arow[b];
        }
    }
}

// Reduction over the batch with eight independent accumulators. A plain
// running sum is a serial dependence chain the compiler must not reassociate;
// this fixed combine tree keeps results deterministic and lets it vectorize.
inline double dot_lanes(const double* x, const double* y, int n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    int b = 0;
    for (; b + 8 <= n; b += 8)
        for (int k = 0; k < 8; ++k) acc[k] += x[b + k] * y[b + k];
    double tail = 0.0;
    for (; b < n; ++b) tail += x[b] * y[b];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

inline double sum_lanes(const double* x, int n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    int b = 0;
    for (; b + 8 <= n; b += 8)
        for (int k = 0; k < 8; ++k) acc[k] += x[b + k];
    double tail = 0.0;
    for (; b < n; ++b) tail += x[b];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

// dW += dZ A^T, db += row sums of dZ, dA = W^T dZ.
inline void affine_backward(const double* w, const double* A, const double* dZ, double* dW,
                            double* db, double* dA, int out, int in, int B) {
    for (int o = 0; o < out; ++o) {
        const double* dzrow = dZ + static_cast<std::size_t>(o) * B;
        db[o] += sum_lanes(dzrow, B);
        double* dwrow = dW + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i)
            dwrow[i] += dot_lanes(dzrow, A + static_cast<std::size_t>(i) * B, B);
    }
    if (dA != nullptr) {
        std::fill(dA, dA + static_cast<std::size_t>(in) * B, 0.0);
        for (int o = 0; o < out; ++o) {
            const double* dzrow = dZ + static_cast<std::size_t>(o) * B;
            const double* wrow = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                const double wv = wrow[i];
                double* darow = dA + static_cast<std::size_t>(i) * B;
                for (int b = 0; b < B; ++b) darow[b] += wv * dzrow[b];
            }
        }
    }
}

}  // namespace detail

// Batched forward pass; bb.a[0] must already hold the input matrix.
inline void forward_batch(const Denoiser& m, BatchBuffers& bb) {
    const int B = bb.batch;
    const int L = m.layers();
    for (int l = 0; l < L; ++l) {
        const int in = m.sizes[l], out = m.sizes[l + 1];
        detail::affine_forward(m.weights[l].data(), m.biases[l].data(), bb.a[l].data(),
                               bb.z[l + 1].data(), out, in, B);
        double* z = bb.z[l + 1].data();
        double* a = bb.a[l + 1].data();
        const std::size_t n = static_cast<std::size_t>(out) * B;
        if (l + 1 == L) {
            std::copy(z, z + n, a);
        } else if (m.activation == Activation::relu) {
            for (std::size_t i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
        } else {
            double* s = bb.sg[l + 1].data();
            for (std::size_t i = 0; i < n; ++i) {
                const double sig = 1.0 / (1.0 + std::exp(-z[i]));
                s[i] = sig;
                a[i] = z[i] * sig;
            }
        }
    }
}

struct TrainBatch {
    int dim = 0;
    int batch = 0;
    std::vector<double> x0;     // batch x dim row-major
    std::vector<int> t;         // batch
    std::vector<double> noise;  // batch x dim row-major
};

using WeightFn = std::function<double(int)>;

// Weighted epsilon-matching loss over the batch plus reverse-mode gradients.
// Loss = mean_b w(t_b) * |model(forward_sample(x0_b, t_b, eps_b), t_b) - eps_b|^2.
inline double loss_and_grads(const Denoiser& m, const NoiseSchedule& s, const EmbeddingTable& emb,
                             const TrainBatch& batch, const WeightFn& weight_fn, Gradients& grads,
                             BatchBuffers& bb) {
    const int B = batch.batch;
    const int d = m.data_dim;
    if (B < 1) throw std::invalid_argument("loss_and_grads: empty batch");
    if (batch.dim != d) throw std::invalid_argument("loss_and_grads: dimension mismatch");
    if (bb.batch != B) throw std::invalid_argument("loss_and_grads: buffer batch mismatch");
    if (emb.width != m.embed_width || emb.T != s.T)
        throw std::invalid_argument("loss_and_grads: embedding table mismatch");
    detail::check_congruent(m, grads, "loss_and_grads");

    const int in0 = m.sizes.front();
    double* A0 = bb.a[0].data();
    for (int b = 0; b < B; ++b) {
        const int t = batch.t[b];
        check_timestep(s, t);
        const double ca = std::sqrt(s.alpha_bar[t]);
        const double cb = std::sqrt(1.0 - s.alpha_bar[t]);
        const double* x0 = batch.x0.data() + static_cast<std::size_t>(b) * d;
        const double* eps = batch.noise.data() + static_cast<std::size_t>(b) * d;
        for (int j = 0; j < d; ++j) A0[static_cast<std::size_t>(j) * B + b] = ca * x0[j] + cb * eps[j];
        const double* e = emb.row(t).data();
        for (int j = 0; j < m.embed_width; ++j)
            A0[static_cast<std::size_t>(d + j) * B + b] = e[j];
        bb.weight[b] = weight_fn(t);
    }
    (void)in0;

    forward_batch(m, bb);

    const int L = m.layers();
    const double* yhat = bb.a[L].data();
    double* dzL = bb.dz[L].data();
    double loss = 0.0;
    const double inv_b = 1.0 / B;
    for (int b = 0; b < B; ++b) {
        const double* eps = batch.noise.data() + static_cast<std::size_t>(b) * d;
        const double w = bb.weight[b];
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double r = yhat[static_cast<std::size_t>(j) * B + b] - eps[j];
            sq += r * r;
            dzL[static_cast<std::size_t>(j) * B + b] = 2.0 * w * r * inv_b;
        }
        loss += w * sq;
    }
    loss *= inv_b;

    grads.zero();
    for (int l = L - 1; l >= 0; --l) {
        const int in = m.sizes[l], out = m.sizes[l + 1];
        double* dA = l > 0 ? bb.dz[l].data() : nullptr;  // reuse dz[l] as dA scratch
        detail::affine_backward(m.weights[l].data(), bb.a[l].data(), bb.dz[l + 1].data(),
                                grads.weights[l].data(), grads.biases[l].data(), dA, out, in, B);
        if (l > 0) {
            // convert dA (stored in dz[l]) to dZ through the activation
            const std::size_t n = static_cast<std::size_t>(in) * B;
            double* dst = bb.dz[l].data();
            const double* z = bb.z[l].data();
            if (m.activation == Activation::relu) {
                for (std::size_t i = 0; i < n; ++i) dst[i] = z[i] > 0.0 ? dst[i] : 0.0;
            } else {
                const double* sg = bb.sg[l].data();
                for (std::size_t i = 0; i < n; ++i) {
                    const double sig = sg[i];
                    dst[i] *= sig * (1.0 + z[i] * (1.0 - sig));
                }
            }
        }
    }
    return loss;
}

// Bias-corrected Adam with optional decoupled weight decay.
struct OptimizerState {
    long long step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;

    static OptimizerState init(const Denoiser& model, double lr = 1e-4) {
        OptimizerState o;
        o.learning_rate = lr;
        for (const auto& w : model.weights) {
            o.m_w.emplace_back(w.size(), 0.0);
            o.v_w.emplace_back(w.size(), 0.0);
        }
        for (const auto& b : model.biases) {
            o.m_b.emplace_back(b.size(), 0.0);
            o.v_b.emplace_back(b.size(), 0.0);
        }
        return o;
    }
};

inline void adam_step(Denoiser& model, OptimizerState& opt, const Gradients& grads) {
    detail::check_congruent(model, grads, "adam_step");
    if (opt.m_w.size() != model.weights.size() || opt.m_b.size() != model.biases.size())
        throw std::invalid_argument("adam_step: optimizer/model mismatch");
    for (std::size_t l = 0; l < model.weights.size(); ++l)
        if (opt.m_w[l].size() != model.weights[l].size() ||
            opt.m_b[l].size() != model.biases[l].size())
            throw std::invalid_argument("adam_step: optimizer/model mismatch");

    opt.step += 1;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));

    auto update = [&](std::vector<double>& theta, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        double probe = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mh = m[i] / c1;
            const double vh = v[i] / c2;
            theta[i] -= opt.learning_rate * (mh / (std::sqrt(vh) + opt.epsilon) +
                                             opt.weight_decay * theta[i]);
            probe += theta[i];
        }
        if (!std::isfinite(probe)) throw std::runtime_error("adam_step: non-finite parameters");
    };
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        update(model.weights[l], opt.m_w[l], opt.v_w[l], grads.weights[l]);
        update(model.biases[l], opt.m_b[l], opt.v_b[l], grads.biases[l]);
    }
}

// Exponential moving average of the parameters.
struct EmaShadow {
    double decay = 0.9999;
    std::vector<std::vector<double>> weights, biases;

    static EmaShadow init(const Denoiser& model, double decay = 0.9999) {
        if (!(decay >= 0.0 && decay <= 1.0))
            throw std::invalid_argument("EmaShadow: decay must lie in [0, 1]");
        EmaShadow e;
        e.decay = decay;
        e.weights = model.weights;
        e.biases = model.biases;
        return e;
    }

    void update(const Denoiser& model) {
        if (weights.size() != model.weights.size())
            throw std::invalid_argument("EmaShadow: shape mismatch");
        const double d = decay, c = 1.0 - decay;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].size() != model.weights[l].size() ||
                biases[l].size() != model.biases[l].size())
                throw std::invalid_argument("EmaShadow: shape mismatch");
            const auto& mw = model.weights[l];
            auto& sw = weights[l];
            for (std::size_t i = 0; i < sw.size(); ++i) sw[i] = d * sw[i] + c * mw[i];
            const auto& mb = model.biases[l];
            auto& sb = biases[l];
            for (std::size_t i = 0; i < sb.size(); ++i) sb[i] = d * sb[i] + c * mb[i];
        }
    }

    // Model with the shadow parameters and the source architecture.
    Denoiser materialize(const Denoiser& arch) const {
        Denoiser m = arch;
        m.weights = weights;
        m.biases = biases;
        return m;
    }
};

// --- checkpoint serialization (flat little-endian binary) ---

namespace detail {

inline void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::ifstream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
}

inline void put_i32(std::ofstream& out, std::int32_t v) { put_bytes(out, &v, 4); }

inline std::int32_t get_i32(std::ifstream& in) {
    std::int32_t v;
    get_bytes(in, &v, 4);
    return v;
}

inline void put_params(std::ofstream& out, const std::vector<std::vector<double>>& w,
                       const std::vector<std::vector<double>>& b) {
    for (const auto& layer : w) put_bytes(out, layer.data(), layer.size() * sizeof(double));
    for (const auto& layer : b) put_bytes(out, layer.data(), layer.size() * sizeof(double));
}

inline void get_params(std::ifstream& in, std::vector<std::vector<double>>& w,
                       std::vector<std::vector<double>>& b) {
    for (auto& layer : w) get_bytes(in, layer.data(), layer.size() * sizeof(double));
    for (auto& layer : b) get_bytes(in, layer.data(), layer.size() * sizeof(double));
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Denoiser& model,
                            const EmaShadow* ema = nullptr) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write("PDCK", 4);
    detail::put_i32(out, 1);  // version
    detail::put_i32(out, ema != nullptr ? 1 : 0);
    detail::put_i32(out, model.data_dim);
    detail::put_i32(out, model.embed_width);
    detail::put_i32(out, model.activation == Activation::relu ? 0 : 1);
    detail::put_i32(out, static_cast<std::int32_t>(model.sizes.size()));
    for (int sz : model.sizes) detail::put_i32(out, sz);
    detail::put_params(out, model.weights, model.biases);
    if (ema != nullptr) {
        double d = ema->decay;
        detail::put_bytes(out, &d, sizeof(double));
        detail::put_params(out, ema->weights, ema->biases);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

struct LoadedCheckpoint {
    Denoiser model;
    std::optional<EmaShadow> ema;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    detail::get_bytes(in, magic, 4);
    if (std::memcmp(magic, "PDCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    if (detail::get_i32(in) != 1) throw std::runtime_error("checkpoint: unsupported version");
    const bool has_ema = detail::get_i32(in) != 0;

    LoadedCheckpoint ck;
    Denoiser& m = ck.model;
    m.data_dim = detail::get_i32(in);
    m.embed_width = detail::get_i32(in);
    m.activation = detail::get_i32(in) == 0 ? Activation::relu : Activation::silu;
    const int n_sizes = detail::get_i32(in);
    if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("checkpoint: corrupt layer count");
    m.sizes.resize(n_sizes);
    for (int& sz : m.sizes) sz = detail::get_i32(in);
    for (int l = 0; l + 1 < n_sizes; ++l) {
        m.weights.emplace_back(static_cast<std::size_t>(m.sizes[l + 1]) * m.sizes[l]);
        m.biases.emplace_back(static_cast<std::size_t>(m.sizes[l + 1]));
    }
    detail::get_params(in, m.weights, m.biases);
    if (has_ema) {
        EmaShadow e;
        detail::get_bytes(in, &e.decay, sizeof(double));
        e.weights = m.weights;  // shapes
        e.biases = m.biases;
        detail::get_params(in, e.weights, e.biases);
        ck.ema = std::move(e);
    }
    return ck;
}

}  // namespace pacediff
