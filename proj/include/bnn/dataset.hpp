#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bnn/rng.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

enum class TaskKind { regression, classification };

inline const char* to_string(TaskKind t) {
    return t == TaskKind::regression ? "regression" : "classification";
}

inline TaskKind task_from_string(const std::string& s) {
    if (s == "regression") return TaskKind::regression;
    if (s == "classification") return TaskKind::classification;
    throw std::invalid_argument("task: unknown kind '" + s + "'");
}

/// Per-feature standardization record, kept so model inputs can be mapped
/// into training coordinates at prediction time while targets stay in
/// original units.
struct FeatureScaling {
    std::vector<double> mean;
    std::vector<double> stddev;

    void apply(Tensor& features) const {
        for (std::size_t i = 0; i < features.rows(); ++i)
            for (std::size_t j = 0; j < features.cols(); ++j)
                features(i, j) = (features(i, j) - mean[j]) / stddev[j];
    }
};

struct Dataset {
    Tensor features;                 // [n x d], standardized when built by ingest_csv
    Tensor targets;                  // [n], regression targets in original units
    std::vector<std::size_t> labels; // classification class ids
    TaskKind task = TaskKind::regression;
    std::vector<std::string> column_names;
    std::string target_name;
    FeatureScaling scaling;

    // an empty split leaves `features` default-constructed
    std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
    std::size_t width() const { return features.rank() == 2 ? features.cols() : 0; }
};

/// Centers every feature column and scales it to unit stddev (population
/// convention). Near-constant columns are centered only.
inline FeatureScaling standardize_features(Tensor& features) {
    const std::size_t n = features.rows(), d = features.cols();
    FeatureScaling sc;
    sc.mean.resize(d);
    sc.stddev.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += features(i, j);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = features(i, j) - m;
            v += c * c;
        }
        double s = std::sqrt(v / static_cast<double>(n));
        if (s < 1e-12) s = 1.0;
        sc.mean[j] = m;
        sc.stddev[j] = s;
    }
    sc.apply(features);
    return sc;
}

inline Dataset make_dataset(Tensor features, Tensor targets, bool standardize = false) {
    if (features.rank() != 2 || targets.rank() != 1 || features.rows() != targets.size())
        throw std::invalid_argument("make_dataset: need [n x d] features and [n] targets");
    Dataset ds;
    ds.features = std::move(features);
    ds.targets = std::move(targets);
    ds.task = TaskKind::regression;
    ds.column_names.resize(ds.width());
    for (std::size_t j = 0; j < ds.width(); ++j) ds.column_names[j] = "x" + std::to_string(j);
    ds.target_name = "y";
    if (standardize) {
        ds.scaling = standardize_features(ds.features);
    } else {
        ds.scaling.mean.assign(ds.width(), 0.0);
        ds.scaling.stddev.assign(ds.width(), 1.0);
    }
    return ds;
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

namespace detail {

/// Parses the CSV, leaving features in raw units.
inline Dataset ingest_csv_raw(const std::string& path, const std::string& target_column,
                              TaskKind task) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: empty file '" + path + "'");
    std::vector<std::string> header = detail::split_line(line);
    for (auto& h : header) h = detail::trim(h);

    std::size_t target_idx = header.size();
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == target_column) target_idx = j;
    if (target_idx == header.size())
        throw std::runtime_error("ingest_csv: target column '" + target_column +
                                 "' not found in header");

    std::vector<double> feat_values;
    std::vector<double> target_values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        std::vector<std::string> cells = detail::split_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("ingest_csv: row " + std::to_string(row) + ": expected " +
                                     std::to_string(header.size()) + " cells, got " +
                                     std::to_string(cells.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const std::string cell = detail::trim(cells[j]);
            if (cell.empty())
                throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                                         ": missing value");
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || !std::isfinite(v))
                throw std::runtime_error("ingest_csv: column '" + header[j] +
                                         "': non-numeric value '" + cell + "' (row " +
                                         std::to_string(row) + ")");
            if (j == target_idx)
                target_values.push_back(v);
            else
                feat_values.push_back(v);
        }
    }
    if (row == 0) throw std::runtime_error("ingest_csv: no data rows in '" + path + "'");

    const std::size_t d = header.size() - 1;
    if (d == 0) throw std::runtime_error("ingest_csv: no feature columns");

    Dataset ds;
    ds.task = task;
    ds.features = Tensor({row, d}, std::move(feat_values));
    ds.target_name = target_column;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != target_idx) ds.column_names.push_back(header[j]);

    if (task == TaskKind::classification) {
        ds.labels.reserve(row);
        for (double v : target_values) {
            if (v < 0.0 || v != std::floor(v))
                throw std::runtime_error("ingest_csv: column '" + target_column +
                                         "': classification targets must be non-negative "
                                         "integer class ids, got " + std::to_string(v));
            ds.labels.push_back(static_cast<std::size_t>(v));
        }
        ds.targets = Tensor({row});
        for (std::size_t i = 0; i < row; ++i) ds.targets[i] = target_values[i];
    } else {
        ds.targets = Tensor({row}, std::move(target_values));
    }
    return ds;
}

}  // namespace detail

/// Reads a numeric CSV with a header row, pulls out `target_column`,
/// standardizes the remaining columns, and returns the dataset. Every cell
/// must parse as a number; classification targets must be non-negative
/// integer class ids.
inline Dataset ingest_csv(const std::string& path, const std::string& target_column,
                          TaskKind task) {
    Dataset ds = detail::ingest_csv_raw(path, target_column, task);
    ds.scaling = standardize_features(ds.features);
    return ds;
}

/// Like ingest_csv, but maps features with a previously recorded scaling
/// (e.g. a checkpoint's) instead of the file's own statistics.
inline Dataset ingest_csv_scaled(const std::string& path, const std::string& target_column,
                                 TaskKind task, const FeatureScaling* scaling) {
    if (!scaling) return ingest_csv(path, target_column, task);
    Dataset ds = detail::ingest_csv_raw(path, target_column, task);
    if (scaling->mean.size() != ds.width())
        throw std::runtime_error("ingest_csv: stored scaling covers " +
                                 std::to_string(scaling->mean.size()) + " features, file has " +
                                 std::to_string(ds.width()));
    ds.scaling = *scaling;
    ds.scaling.apply(ds.features);
    return ds;
}

/// Seeded-shuffle split: train gets ceil(fraction * n) rows, test the rest.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                                 std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw std::invalid_argument("split_dataset: fraction must be in [0, 1]");
    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngStream rng = RngStream(seed).split(0x5917);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));

    auto take = [&](std::size_t begin, std::size_t count) {
        Dataset out;
        out.task = ds.task;
        out.column_names = ds.column_names;
        out.target_name = ds.target_name;
        out.scaling = ds.scaling;
        if (count == 0) return out;
        out.features = Tensor({count, ds.width()});
        out.targets = Tensor({count});
        if (ds.task == TaskKind::classification) out.labels.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = order[begin + i];
            for (std::size_t j = 0; j < ds.width(); ++j)
                out.features(i, j) = ds.features(src, j);
            out.targets[i] = ds.targets[src];
            if (ds.task == TaskKind::classification) out.labels[i] = ds.labels[src];
        }
        return out;
    };
    return {take(0, n_train), take(n_train, n - n_train)};
}

// ---------------------------------------------------------------------------
// Synthetic generators (all acceptance runs work with zero external data)
// ---------------------------------------------------------------------------

struct SyntheticXY {
    Tensor x;  // [n x 1]
    Tensor y;  // [n]
};

inline SyntheticXY gen_linear(std::size_t n, double slope, double intercept, double noise_sigma,
                              double x_min, double x_max, RngStream& rng) {
    SyntheticXY out{Tensor({n, 1}), Tensor({n})};
    for (std::size_t i = 0; i < n; ++i) {
        const double x = x_min + (x_max - x_min) * rng.uniform();
        out.x(i, 0) = x;
        out.y[i] = slope * x + intercept + rng.normal(0.0, noise_sigma);
    }
    return out;
}

inline SyntheticXY gen_sine(std::size_t n, double amplitude, double frequency, double noise_sigma,
                            double x_min, double x_max, RngStream& rng) {
    SyntheticXY out{Tensor({n, 1}), Tensor({n})};
    for (std::size_t i = 0; i < n; ++i) {
        const double x = x_min + (x_max - x_min) * rng.uniform();
        out.x(i, 0) = x;
        out.y[i] = amplitude * std::sin(2.0 * 3.14159265358979323846 * frequency * x) +
                   rng.normal(0.0, noise_sigma);
    }
    return out;
}

inline void write_csv(const std::string& path, const SyntheticXY& xy,
                      const std::string& x_name = "x", const std::string& y_name = "y") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "' for writing");
    out << x_name << "," << y_name << "\n";
    char buf[64];
    for (std::size_t i = 0; i < xy.x.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", xy.x(i, 0));
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", xy.y[i]);
        out << buf << "\n";
    }
}

}  // namespace bnn
