#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pacediff/analysis.hpp"
#include "pacediff/dataset.hpp"
#include "pacediff/sampling.hpp"
#include "pacediff/training.hpp"

namespace pacediff {

using json = nlohmann::ordered_json;

struct AnalysisConfig {
    std::vector<int> kl_timesteps = {10, 50, 100, 200, 400, 600, 800, 999};
    int m_samples = 5000;
    int l_mixture = 0;  // inner mixture size; 0 = whole dataset (exact)
    int projections = 128;
    ConvergenceOptions convergence;
    std::uint64_t seed = 0;  // 0 = derive from the dataset seed
};

// One experiment = dataset + schedule + trainer + sampler + analysis knobs +
// an output directory for artifacts.
struct ExperimentConfig {
    DatasetSpec dataset;
    TrainConfig train;  // carries the ScheduleSpec
    SamplerConfig sampler{.steps = 250, .use_ema = true, .seed = 0};  // seed 0 = derive
    std::size_t sample_count = 10000;
    AnalysisConfig analysis;
    std::string output_dir = "runs/out";
};

namespace cfg_detail {

class Fields {
public:
    Fields(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
        if (!j.is_object()) throw std::invalid_argument("config: " + scope_ + " must be a table");
    }

    ~Fields() = default;

    template <typename T>
    void get(const char* key, T& out) {
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->get<T>();
            } catch (const json::exception& e) {
                throw std::invalid_argument("config: bad value for " + scope_ + "." + key + ": " +
                                            e.what());
            }
            seen_.push_back(key);
        }
    }

    void get_enum(const char* key, auto& out, auto parser) {
        std::string s;
        bool present = false;
        if (auto it = j_.find(key); it != j_.end()) {
            if (!it->is_string())
                throw std::invalid_argument("config: " + scope_ + "." + key + " must be a string");
            s = it->get<std::string>();
            present = true;
            seen_.push_back(key);
        }
        if (present) {
            try {
                out = parser(s);
            } catch (const std::exception& e) {
                throw std::invalid_argument("config: " + scope_ + "." + key + ": " + e.what());
            }
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
                throw std::invalid_argument("config: unknown key " + scope_ + "." + key);
        }
    }

private:
    const json& j_;
    std::string scope_;
    std::vector<std::string> seen_;
};

}  // namespace cfg_detail

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["output_dir"] = c.output_dir;
    j["dataset"] = {{"kind", std::string(to_string(c.dataset.kind))},
                    {"size", c.dataset.size},
                    {"dimension", c.dataset.dimension},
                    {"seed", c.dataset.seed},
                    {"components", c.dataset.components},
                    {"radius", c.dataset.radius},
                    {"sigma", c.dataset.sigma},
                    {"noise", c.dataset.noise}};
    j["schedule"] = {{"kind", std::string(to_string(c.train.schedule.kind))},
                     {"timesteps", c.train.schedule.timesteps},
                     {"beta_min", c.train.schedule.beta_min},
                     {"beta_max", c.train.schedule.beta_max}};
    j["train"] = {{"strategy", std::string(to_string(c.train.strategy))},
                  {"total_iterations", c.train.total_iterations},
                  {"batch_size", c.train.batch_size},
                  {"clusters", c.train.clusters},
                  {"tau_max", c.train.tau_max},
                  {"cluster_mode", std::string(to_string(c.train.cluster_mode))},
                  {"weighting", std::string(to_string(c.train.weighting))},
                  {"minsnr_gamma", c.train.minsnr_gamma},
                  {"seed", c.train.seed},
                  {"smoothing_window", c.train.smoothing_window},
                  {"final_stage_iterations", c.train.final_stage_iterations},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"hidden", c.train.hidden},
                  {"embed_width", c.train.embed_width},
                  {"activation", std::string(to_string(c.train.activation))},
                  {"learning_rate", c.train.learning_rate},
                  {"ema_decay", c.train.ema_decay}};
    j["sampler"] = {{"steps", c.sampler.steps},
                    {"use_ema", c.sampler.use_ema},
                    {"seed", c.sampler.seed},
                    {"count", c.sample_count}};
    j["analysis"] = {{"kl_timesteps", c.analysis.kl_timesteps},
                     {"m_samples", c.analysis.m_samples},
                     {"l_mixture", c.analysis.l_mixture},
                     {"projections", c.analysis.projections},
                     {"intervals", c.analysis.convergence.intervals},
                     {"interval_iterations", c.analysis.convergence.iterations},
                     {"eval_every", c.analysis.convergence.eval_every},
                     {"eval_count", c.analysis.convergence.eval_count},
                     {"eval_steps", c.analysis.convergence.eval_steps},
                     {"convergence_projections", c.analysis.convergence.projections},
                     {"seed", c.analysis.seed}};
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a table");
    ExperimentConfig c;

    cfg_detail::Fields top(j, "config");
    top.get("output_dir", c.output_dir);

    if (j.contains("dataset")) {
        cfg_detail::Fields f(j["dataset"], "dataset");
        f.get_enum("kind", c.dataset.kind, dataset_kind_from);
        f.get("size", c.dataset.size);
        f.get("dimension", c.dataset.dimension);
        f.get("seed", c.dataset.seed);
        f.get("components", c.dataset.components);
        f.get("radius", c.dataset.radius);
        f.get("sigma", c.dataset.sigma);
        f.get("noise", c.dataset.noise);
        f.finish();
    }
    if (j.contains("schedule")) {
        cfg_detail::Fields f(j["schedule"], "schedule");
        f.get_enum("kind", c.train.schedule.kind, schedule_kind_from);
        f.get("timesteps", c.train.schedule.timesteps);
        f.get("beta_min", c.train.schedule.beta_min);
        f.get("beta_max", c.train.schedule.beta_max);
        f.finish();
    }
    if (j.contains("train")) {
        cfg_detail::Fields f(j["train"], "train");
        f.get_enum("strategy", c.train.strategy, strategy_from);
        f.get("total_iterations", c.train.total_iterations);
        f.get("batch_size", c.train.batch_size);
        f.get("clusters", c.train.clusters);
        f.get("tau_max", c.train.tau_max);
        f.get_enum("cluster_mode", c.train.cluster_mode, cluster_mode_from);
        f.get_enum("weighting", c.train.weighting, weight_kind_from);
        f.get("minsnr_gamma", c.train.minsnr_gamma);
        f.get("seed", c.train.seed);
        f.get("smoothing_window", c.train.smoothing_window);
        f.get("final_stage_iterations", c.train.final_stage_iterations);
        f.get("checkpoint_every", c.train.checkpoint_every);
        f.get("hidden", c.train.hidden);
        f.get("embed_width", c.train.embed_width);
        f.get_enum("activation", c.train.activation, activation_from);
        f.get("learning_rate", c.train.learning_rate);
        f.get("ema_decay", c.train.ema_decay);
        f.finish();
    }
    if (j.contains("sampler")) {
        cfg_detail::Fields f(j["sampler"], "sampler");
        f.get("steps", c.sampler.steps);
        f.get("use_ema", c.sampler.use_ema);
        f.get("seed", c.sampler.seed);
        f.get("count", c.sample_count);
        f.finish();
    }
    if (j.contains("analysis")) {
        cfg_detail::Fields f(j["analysis"], "analysis");
        f.get("kl_timesteps", c.analysis.kl_timesteps);
        f.get("m_samples", c.analysis.m_samples);
        f.get("l_mixture", c.analysis.l_mixture);
        f.get("projections", c.analysis.projections);
        f.get("intervals", c.analysis.convergence.intervals);
        f.get("interval_iterations", c.analysis.convergence.iterations);
        f.get("eval_every", c.analysis.convergence.eval_every);
        f.get("eval_count", c.analysis.convergence.eval_count);
        f.get("eval_steps", c.analysis.convergence.eval_steps);
        f.get("convergence_projections", c.analysis.convergence.projections);
        f.get("seed", c.analysis.seed);
        f.finish();
    }

    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "output_dir" && key != "dataset" && key != "schedule" && key != "train" &&
            key != "sampler" && key != "analysis")
            throw std::invalid_argument("config: unknown section " + key);
    }
    return c;
}

// --- minimal TOML reader (sections, scalars, single-line arrays) ---

namespace toml_detail {

inline void fail(std::size_t line, const std::string& msg) {
    throw std::invalid_argument("toml: line " + std::to_string(line) + ": " + msg);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips a trailing comment that is not inside a string literal.
inline std::string_view strip_comment(std::string_view s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

inline json parse_scalar(std::string_view v, std::size_t line) {
    if (v.empty()) fail(line, "empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') fail(line, "unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\') {
                if (i + 2 >= v.size()) fail(line, "bad escape");
                ++i;
                switch (v[i]) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail(line, "unsupported escape");
                }
            } else {
                out += v[i];
            }
        }
        return json(out);
    }
    if (v == "true") return json(true);
    if (v == "false") return json(false);
    const std::string s(v);
    try {
        std::size_t used = 0;
        if (s.find_first_of(".eE") == std::string::npos || s.substr(0, 2) == "0x") {
            const long long i = std::stoll(s, &used);
            if (used == s.size()) return json(i);
        }
        const double d = std::stod(s, &used);
        if (used == s.size()) return json(d);
    } catch (const std::exception&) {
        // falls through to the failure below
    }
    fail(line, "cannot parse value: " + s);
    return {};
}

inline json parse_value(std::string_view v, std::size_t line) {
    v = trim(v);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') fail(line, "arrays must close on the same line");
        json arr = json::array();
        std::string_view body = v.substr(1, v.size() - 2);
        while (true) {
            body = trim(body);
            if (body.empty()) break;
            std::size_t cut = std::string_view::npos;
            bool in_str = false;
            for (std::size_t i = 0; i < body.size(); ++i) {
                if (body[i] == '"' && (i == 0 || body[i - 1] != '\\')) in_str = !in_str;
                if (body[i] == ',' && !in_str) {
                    cut = i;
                    break;
                }
            }
            const std::string_view item = cut == std::string_view::npos ? body : body.substr(0, cut);
            arr.push_back(parse_scalar(trim(item), line));
            if (cut == std::string_view::npos) break;
            body.remove_prefix(cut + 1);
        }
        return arr;
    }
    return parse_scalar(v, line);
}

}  // namespace toml_detail

// Converts the TOML subset used by config files (comments, [a.b] tables,
// string/bool/int/float scalars, single-line arrays) into a json tree.
inline json toml_to_json(const std::string& text) {
    json root = json::object();
    json* table = &root;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = toml_detail::trim(toml_detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') toml_detail::fail(line_no, "unterminated table header");
            std::string_view name = toml_detail::trim(line.substr(1, line.size() - 2));
            if (name.empty()) toml_detail::fail(line_no, "empty table name");
            table = &root;
            while (!name.empty()) {
                const std::size_t dot = name.find('.');
                const std::string part(toml_detail::trim(name.substr(0, dot)));
                if (part.empty()) toml_detail::fail(line_no, "empty table name part");
                table = &(*table)[part];
                if (table->is_null()) *table = json::object();
                if (dot == std::string_view::npos) break;
                name.remove_prefix(dot + 1);
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) toml_detail::fail(line_no, "expected key = value");
        const std::string key(toml_detail::trim(line.substr(0, eq)));
        if (key.empty()) toml_detail::fail(line_no, "empty key");
        (*table)[key] = toml_detail::parse_value(line.substr(eq + 1), line_no);
    }
    return root;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    json j;
    if (path.extension() == ".toml") {
        j = toml_to_json(text);
    } else {
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument(path.string() + ": " + e.what());
        }
    }
    try {
        return config_from_json(j);
    } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << to_json(c).dump(2) << '\n';
}

// Applies a dotted-path override such as train.total_iterations=500. The
// value is parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(json& j, std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw std::invalid_argument("override must look like section.key=value");
    std::string path(assignment.substr(0, eq));
    const std::string value(assignment.substr(eq + 1));

    json* node = &j;
    std::string_view rest = path;
    while (true) {
        const std::size_t dot = rest.find('.');
        const std::string part(rest.substr(0, dot));
        if (part.empty()) throw std::invalid_argument("override has an empty path segment");
        if (dot == std::string_view::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::parse_error&) {
                parsed = json(value);
            }
            (*node)[part] = parsed;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        rest.remove_prefix(dot + 1);
    }
}

}  // namespace pacediff
