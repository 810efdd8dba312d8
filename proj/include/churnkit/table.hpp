#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "churnkit/error.hpp"

namespace churnkit {

enum class ColumnKind { numeric, nominal, label };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
};

using Schema = std::vector<ColumnSpec>;

/// Rectangular numeric dataset after encoding: all feature columns numeric,
/// one binary label vector, one provenance id per row.
class FeatureTable {
public:
    std::vector<std::string> columns;  // feature column names
    std::vector<double> values;        // row-major, n_rows x columns.size()
    std::vector<int> labels;           // 0/1
    std::vector<std::string> row_ids;
    std::string label_name = "label";

    std::size_t n_rows() const { return row_ids.size(); }
    std::size_t n_cols() const { return columns.size(); }

    double& at(std::size_t r, std::size_t c) { return values[r * columns.size() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }

    const double* row(std::size_t r) const { return values.data() + r * columns.size(); }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(n_rows());
        for (std::size_t r = 0; r < n_rows(); ++r) out[r] = at(r, c);
        return out;
    }

    std::size_t column_index(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) {
            throw ConfigError("column not found: " + name);
        }
        return static_cast<std::size_t>(it - columns.begin());
    }

    bool has_column(const std::string& name) const {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    }

    void validate() const {
        if (labels.size() != n_rows()) {
            throw ValidationError("label count does not match row count");
        }
        if (values.size() != n_rows() * n_cols()) {
            throw ValidationError("value buffer does not match schema width");
        }
        for (int y : labels) {
            if (y != 0 && y != 1) throw ValidationError("label outside {0,1}");
        }
        for (double v : values) {
            if (!std::isfinite(v)) throw ValidationError("non-finite value in table");
        }
    }

    FeatureTable select_rows(const std::vector<std::size_t>& idx) const {
        FeatureTable out;
        out.columns = columns;
        out.label_name = label_name;
        out.values.reserve(idx.size() * n_cols());
        out.labels.reserve(idx.size());
        out.row_ids.reserve(idx.size());
        for (std::size_t r : idx) {
            out.values.insert(out.values.end(), row(r), row(r) + n_cols());
            out.labels.push_back(labels[r]);
            out.row_ids.push_back(row_ids[r]);
        }
        return out;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_numeric(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("unparseable numeric cell '" + s + "' at row " + std::to_string(row) +
                         ", column " + col);
    }
}

// shortest round-trippable decimal representation
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec < 17; ++prec) {
        char probe[32];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        std::sscanf(probe, "%lf", &back);
        if (back == v) return probe;
    }
    return buf;
}

} // namespace detail

/// Load a delimiter-separated file against a declared schema. Nominal columns
/// are one-hot expanded (categories sorted lexicographically) into
/// `name=category` indicator columns; the label column becomes the label
/// vector. An optional leading row_id column supplies provenance ids.
inline FeatureTable load_table(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);

    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("empty file: " + path);
    const auto header = detail::split_csv_line(header_line);

    const bool has_row_id = !header.empty() && header.front() == "row_id";
    const std::size_t offset = has_row_id ? 1 : 0;

    std::vector<std::size_t> schema_to_field(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        auto it = std::find(header.begin() + static_cast<long>(offset), header.end(), schema[i].name);
        if (it == header.end()) throw SchemaError("missing column: " + schema[i].name);
        schema_to_field[i] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::vector<std::string>> raw_rows;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(lineno) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        raw_rows.push_back(std::move(fields));
    }

    // collect nominal categories, sorted for a deterministic encoding
    std::map<std::size_t, std::set<std::string>> categories;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].kind != ColumnKind::nominal) continue;
        for (const auto& r : raw_rows) categories[i].insert(r[schema_to_field[i]]);
    }

    FeatureTable out;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> encoders; // schema idx -> cats
    for (std::size_t i = 0; i < schema.size(); ++i) {
        switch (schema[i].kind) {
            case ColumnKind::numeric:
                out.columns.push_back(schema[i].name);
                break;
            case ColumnKind::nominal: {
                std::vector<std::string> cats(categories[i].begin(), categories[i].end());
                for (const auto& c : cats) out.columns.push_back(schema[i].name + "=" + c);
                encoders.emplace_back(i, std::move(cats));
                break;
            }
            case ColumnKind::label:
                out.label_name = schema[i].name;
                break;
        }
    }

    for (std::size_t r = 0; r < raw_rows.size(); ++r) {
        const auto& fields = raw_rows[r];
        out.row_ids.push_back(has_row_id ? fields[0] : std::to_string(r));
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const std::string& cell = fields[schema_to_field[i]];
            switch (schema[i].kind) {
                case ColumnKind::numeric:
                    out.values.push_back(detail::parse_numeric(cell, r, schema[i].name));
                    break;
                case ColumnKind::nominal: {
                    const auto& cats = std::find_if(encoders.begin(), encoders.end(),
                                                    [&](const auto& e) { return e.first == i; })
                                           ->second;
                    for (const auto& c : cats) out.values.push_back(cell == c ? 1.0 : 0.0);
                    break;
                }
                case ColumnKind::label: {
                    double v = detail::parse_numeric(cell, r, schema[i].name);
                    if (v != 0.0 && v != 1.0) {
                        throw ValidationError("label outside {0,1} at row " + std::to_string(r) +
                                              ": " + cell);
                    }
                    out.labels.push_back(static_cast<int>(v));
                    break;
                }
            }
        }
    }
    out.validate();
    return out;
}

/// Write table as CSV (row_id, features..., label) plus a JSON sidecar
/// schema descriptor at <path>.schema.json. Round-trips bit-exactly.
inline void save_table(const FeatureTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    out << "row_id";
    for (const auto& c : t.columns) out << "," << c;
    out << "," << t.label_name << "\n";
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        out << t.row_ids[r];
        for (std::size_t c = 0; c < t.n_cols(); ++c) {
            out << "," << detail::format_double(t.at(r, c));
        }
        out << "," << t.labels[r] << "\n";
    }

    nlohmann::json schema;
    schema["label"] = t.label_name;
    schema["columns"] = nlohmann::json::array();
    for (const auto& c : t.columns) {
        schema["columns"].push_back({{"name", c}, {"kind", "numeric"}});
    }
    std::ofstream side(path + ".schema.json");
    side << schema.dump(2) << "\n";
}

/// Load a table previously written by save_table (all columns numeric).
inline FeatureTable load_saved_table(const std::string& path) {
    std::ifstream side(path + ".schema.json");
    if (!side) throw ParseError("missing sidecar schema: " + path + ".schema.json");
    nlohmann::json schema = nlohmann::json::parse(side);
    Schema s;
    for (const auto& c : schema["columns"]) {
        s.push_back({c["name"].get<std::string>(), ColumnKind::numeric});
    }
    s.push_back({schema["label"].get<std::string>(), ColumnKind::label});
    return load_table(path, s);
}

} // namespace churnkit
