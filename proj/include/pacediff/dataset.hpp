#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pacediff/point_set.hpp"
#include "pacediff/rng.hpp"

namespace pacediff {

enum class DatasetKind { gmm, swiss_roll, checkerboard };

inline std::string_view to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::gmm: return "gmm";
        case DatasetKind::swiss_roll: return "swiss_roll";
        case DatasetKind::checkerboard: return "checkerboard";
    }
    throw std::invalid_argument("unknown dataset kind");
}

inline DatasetKind dataset_kind_from(std::string_view s) {
    if (s == "gmm") return DatasetKind::gmm;
    if (s == "swiss_roll") return DatasetKind::swiss_roll;
    if (s == "checkerboard") return DatasetKind::checkerboard;
    throw std::invalid_argument("unknown dataset kind: " + std::string(s));
}

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gmm;
    std::size_t size = 2048;
    int dimension = 2;
    std::uint64_t seed = 7;
    // gmm: equally weighted spherical components on a circle in the first two
    // coordinates; remaining coordinates are pure component noise.
    int components = 8;
    double radius = 4.0;
    double sigma = 0.3;
    // swiss_roll only: jitter added to the curve.
    double noise = 0.1;
};

namespace detail {

inline void sample_gmm(const DatasetSpec& spec, PointSet& out, Rng& rng) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < spec.size; ++i) {
        const auto j = rng.below(static_cast<std::uint64_t>(spec.components));
        const double angle = two_pi * static_cast<double>(j) / spec.components;
        auto row = out[i];
        row[0] = spec.radius * std::cos(angle);
        row[1] = spec.radius * std::sin(angle);
        for (int k = 2; k < spec.dimension; ++k) row[k] = 0.0;
        for (int k = 0; k < spec.dimension; ++k) row[k] += spec.sigma * rng.normal();
    }
}

inline void sample_swiss_roll(const DatasetSpec& spec, PointSet& out, Rng& rng) {
    constexpr double pi = 3.1415926535897932384626433832795;
    const double theta_max = 4.5 * pi;
    for (std::size_t i = 0; i < spec.size; ++i) {
        const double theta = 1.5 * pi + 3.0 * pi * rng.uniform();
        const double r = 4.0 * theta / theta_max;
        auto row = out[i];
        row[0] = r * std::cos(theta) + spec.noise * rng.normal();
        row[1] = r * std::sin(theta) + spec.noise * rng.normal();
    }
}

inline void sample_checkerboard(const DatasetSpec& spec, PointSet& out, Rng& rng) {
    // 4x4 grid of 2x2 cells over [-4, 4)^2; the 8 cells with even row+column
    // parity carry uniform mass.
    for (std::size_t i = 0; i < spec.size; ++i) {
        const auto cell = rng.below(8);
        const int row_idx = static_cast<int>(cell / 2);
        const int col_idx = static_cast<int>(2 * (cell % 2)) + (row_idx % 2);
        auto row = out[i];
        row[0] = -4.0 + 2.0 * (col_idx + rng.uniform());
        row[1] = -4.0 + 2.0 * (row_idx + rng.uniform());
    }
}

}  // namespace detail

inline PointSet make_dataset(const DatasetSpec& spec) {
    if (spec.size < 1) throw std::invalid_argument("make_dataset: size must be >= 1");
    if (spec.kind == DatasetKind::gmm) {
        if (spec.dimension < 2) throw std::invalid_argument("make_dataset: gmm needs dimension >= 2");
        if (spec.components < 1) throw std::invalid_argument("make_dataset: components must be >= 1");
        if (spec.sigma < 0.0) throw std::invalid_argument("make_dataset: sigma must be >= 0");
    } else if (spec.dimension != 2) {
        throw std::invalid_argument("make_dataset: " + std::string(to_string(spec.kind)) +
                                    " is 2-D only");
    }
    PointSet out(spec.dimension, spec.size);
    Rng rng(derive_seed(spec.seed, to_string(spec.kind)));
    switch (spec.kind) {
        case DatasetKind::gmm: detail::sample_gmm(spec, out, rng); break;
        case DatasetKind::swiss_roll: detail::sample_swiss_roll(spec, out, rng); break;
        case DatasetKind::checkerboard: detail::sample_checkerboard(spec, out, rng); break;
    }
    return out;
}

}  // namespace pacediff
