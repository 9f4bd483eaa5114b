#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hdaemon/errors.hpp"

namespace hdaemon::io {

/// Shortest round-trip representation; identical input gives identical bytes.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DaemonError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DaemonError("failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DaemonError("cannot move " + tmp.string() + " into place: " + ec.message());
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) buf_ << ',';
            buf_ << header[i];
        }
        buf_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_) throw DaemonError("CSV row width does not match the header");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) buf_ << ',';
            buf_ << format_double(values[i]);
        }
        buf_ << '\n';
    }

    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

    /// Row with a leading text cell.
    void row(const std::string& label, const std::vector<double>& values) {
        if (values.size() + 1 != columns_) throw DaemonError("CSV row width does not match the header");
        buf_ << label;
        for (double v : values) buf_ << ',' << format_double(v);
        buf_ << '\n';
    }

    [[nodiscard]] std::string str() const { return buf_.str(); }
    void save(const std::filesystem::path& path) const { write_atomic(path, buf_.str()); }

private:
    std::size_t columns_;
    std::ostringstream buf_;
};

/// Parses a CSV written by CsvWriter into header and numeric rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DaemonError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (std::getline(in, line)) t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        for (const auto& c : split(line)) r.push_back(std::stod(c));
        t.rows.push_back(std::move(r));
    }
    return t;
}

} // namespace hdaemon::io
