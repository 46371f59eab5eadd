#pragma once

// CSV output with a versioned preamble:
//
//   # memdiff-csv schema=<name> version=<v> seed=<master seed>
//   col_a,col_b,...
//   rows...
//
// Doubles are printed with 17 significant digits so files round-trip exactly.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memdiff/errors.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

inline constexpr int kCsvVersion = 1;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& schema, std::uint64_t seed,
              const std::vector<std::string>& columns)
        : path_(path), out_(path, std::ios::trunc) {
        if (!out_) throw IoError(path, "cannot open for writing");
        out_ << "# memdiff-csv schema=" << schema << " version=" << kCsvVersion << " seed=" << seed << '\n';
        write_row(columns);
    }

    CsvWriter& cell(const std::string& s) {
        pending_.push_back(s);
        return *this;
    }
    CsvWriter& cell(double v) { return cell(format_double(v)); }
    CsvWriter& cell(std::uint64_t v) { return cell(std::to_string(v)); }
    CsvWriter& cell(const char* s) { return cell(std::string(s)); }
    CsvWriter& cell(int v) { return cell(std::to_string(v)); }
    CsvWriter& cell(bool v) { return cell(std::string(v ? "1" : "0")); }

    void end_row() {
        write_row(pending_);
        pending_.clear();
    }

    void close() {
        out_.flush();
        if (!out_) throw IoError(path_, "write failed");
        out_.close();
    }

private:
    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
        if (!out_) throw IoError(path_, "write failed");
    }

    std::string path_;
    std::ofstream out_;
    std::vector<std::string> pending_;
};

/// Points as CSV with columns x0, x1, ...
inline void write_points_csv(const std::string& path, const Points& x, const std::string& schema, std::uint64_t seed) {
    std::vector<std::string> cols;
    for (Eigen::Index j = 0; j < x.cols(); ++j) cols.push_back("x" + std::to_string(j));
    CsvWriter w(path, schema, seed, cols);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) w.cell(x(i, j));
        w.end_row();
    }
    w.close();
}

/// Reads a numeric matrix. Lines starting with '#' are skipped, as is a first
/// non-comment line that does not parse as numbers (a header row).
inline Points read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open matrix file");
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        bool ok = true;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                while (used < tok.size() && (tok[used] == ' ' || tok[used] == '\t')) ++used;
                if (used != tok.size()) ok = false;
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (!ok) {
            if (first && rows.empty()) {
                first = false;
                continue;
            }
            throw IoError(path, "non-numeric entry on line " + std::to_string(lineno));
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw IoError(path, "ragged row on line " + std::to_string(lineno));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) throw IoError(path, "matrix file has no data rows");
    Points x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return x;
}

}  // namespace memdiff
