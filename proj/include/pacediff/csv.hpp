#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace pacediff::csv {

// Shortest round-trip decimal form; identical bytes for identical doubles,
// independent of locale and stream state.
inline std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num(std::int64_t v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num(int v) { return num(static_cast<std::int64_t>(v)); }
inline std::string num(long long v) { return num(static_cast<std::int64_t>(v)); }
inline std::string num(std::size_t v) { return num(static_cast<std::int64_t>(v)); }

inline void write_row(std::ostream& out, std::initializer_list<std::string_view> cells) {
    bool first = true;
    for (auto c : cells) {
        if (!first) out.put(',');
        out << c;
        first = false;
    }
    out.put('\n');
}

// Line-buffered CSV file with a fixed header.
class File {
public:
    File(const std::filesystem::path& path, std::initializer_list<std::string_view> header) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
        write_row(out_, header);
    }

    void row(std::initializer_list<std::string_view> cells) { write_row(out_, cells); }

    void close() { out_.close(); }

private:
    std::ofstream out_;
};

}  // namespace pacediff::csv
