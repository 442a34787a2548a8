#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "pacediff/csv.hpp"

namespace pacediff {

// Dense row-major collection of d-dimensional points.
struct PointSet {
    int dim = 0;
    std::vector<double> data;

    PointSet() = default;
    PointSet(int dim_, std::size_t count) : dim(dim_), data(count * dim_) {
        if (dim_ < 1) throw std::invalid_argument("PointSet: dim must be >= 1");
    }

    std::size_t size() const { return dim > 0 ? data.size() / dim : 0; }
    bool empty() const { return data.empty(); }

    std::span<double> operator[](std::size_t i) {
        return {data.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> operator[](std::size_t i) const {
        return {data.data() + i * dim, static_cast<std::size_t>(dim)};
    }
};

inline void write_points_csv(const PointSet& ps, const std::filesystem::path& path) {
    std::vector<std::string> header;
    for (int j = 0; j < ps.dim; ++j) header.push_back("x" + std::to_string(j));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (int j = 0; j < ps.dim; ++j) {
        if (j) out.put(',');
        out << header[j];
    }
    out.put('\n');
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto row = ps[i];
        for (int j = 0; j < ps.dim; ++j) {
            if (j) out.put(',');
            out << csv::num(row[j]);
        }
        out.put('\n');
    }
}

}  // namespace pacediff
