#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "churnkit/error.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

struct MonthlyRecord {
    int month_index = 0;
    std::vector<double> feature_values; // aligned with MemberHistory::feature_names
};

struct MemberHistory {
    std::string member_id;
    std::vector<std::string> feature_names;
    std::vector<MonthlyRecord> monthly_records; // month indices strictly increasing
    std::optional<int> close_month;
};

struct WindowConfig {
    int observation_months = 12;
    int outcome_months = 6;
};

struct WindowResult {
    FeatureTable table;
    std::size_t skipped_members = 0; // no record in the observation window
};

/// One row per member: per raw feature, (last, mean, delta last-first) over
/// the observation window [anchor - observation, anchor). Label 1 iff the
/// account closed inside [anchor, anchor + outcome).
inline WindowResult build_windows(const std::vector<MemberHistory>& histories,
                                  const WindowConfig& cfg, int anchor_month) {
    if (cfg.observation_months < 1 || cfg.outcome_months < 1) {
        throw ConfigError("window lengths must be >= 1");
    }
    WindowResult out;

    // deterministic output ordering by member_id
    std::vector<const MemberHistory*> sorted;
    for (const auto& h : histories) sorted.push_back(&h);
    std::sort(sorted.begin(), sorted.end(),
              [](const MemberHistory* a, const MemberHistory* b) { return a->member_id < b->member_id; });

    bool columns_set = false;
    for (const MemberHistory* hp : sorted) {
        const MemberHistory& h = *hp;
        for (std::size_t i = 1; i < h.monthly_records.size(); ++i) {
            if (h.monthly_records[i].month_index <= h.monthly_records[i - 1].month_index) {
                throw ValidationError("month indices not strictly increasing for member " + h.member_id);
            }
        }
        if (!columns_set) {
            for (const auto& f : h.feature_names) {
                out.table.columns.push_back(f + "_last");
                out.table.columns.push_back(f + "_mean");
                out.table.columns.push_back(f + "_delta");
            }
            out.table.label_name = "churn";
            columns_set = true;
        }

        const int lo = anchor_month - cfg.observation_months;
        std::vector<const MonthlyRecord*> window;
        for (const auto& rec : h.monthly_records) {
            if (rec.month_index >= lo && rec.month_index < anchor_month) window.push_back(&rec);
        }
        if (window.empty()) {
            ++out.skipped_members;
            continue;
        }

        const std::size_t d = h.feature_names.size();
        for (std::size_t f = 0; f < d; ++f) {
            const double first = window.front()->feature_values[f];
            const double last = window.back()->feature_values[f];
            double sum = 0.0;
            for (const auto* rec : window) sum += rec->feature_values[f];
            out.table.values.push_back(last);
            out.table.values.push_back(sum / static_cast<double>(window.size()));
            out.table.values.push_back(last - first);
        }
        const bool churned = h.close_month.has_value() && *h.close_month >= anchor_month &&
                             *h.close_month < anchor_month + cfg.outcome_months;
        out.table.labels.push_back(churned ? 1 : 0);
        out.table.row_ids.push_back(h.member_id);
    }
    out.table.validate();
    return out;
}

/// Parse the long-format member history file: member_id, month_index,
/// close_month (empty if the account is open), then feature columns.
inline std::vector<MemberHistory> load_histories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("empty file: " + path);
    auto header = detail::split_csv_line(header_line);
    if (header.size() < 4 || header[0] != "member_id" || header[1] != "month_index" ||
        header[2] != "close_month") {
        throw SchemaError("history header must start with member_id,month_index,close_month");
    }
    std::vector<std::string> feature_names(header.begin() + 3, header.end());

    std::map<std::string, MemberHistory> by_member;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(lineno) + ": field count mismatch");
        }
        auto& h = by_member[fields[0]];
        h.member_id = fields[0];
        h.feature_names = feature_names;
        MonthlyRecord rec;
        rec.month_index = static_cast<int>(detail::parse_numeric(fields[1], lineno, "month_index"));
        if (!fields[2].empty()) {
            h.close_month = static_cast<int>(detail::parse_numeric(fields[2], lineno, "close_month"));
        }
        for (std::size_t f = 3; f < fields.size(); ++f) {
            rec.feature_values.push_back(detail::parse_numeric(fields[f], lineno, header[f]));
        }
        h.monthly_records.push_back(std::move(rec));
    }

    std::vector<MemberHistory> out;
    for (auto& [id, h] : by_member) {
        std::sort(h.monthly_records.begin(), h.monthly_records.end(),
                  [](const MonthlyRecord& a, const MonthlyRecord& b) {
                      return a.month_index < b.month_index;
                  });
        out.push_back(std::move(h));
    }
    return out;
}

struct InclusionResult {
    FeatureTable table;
    std::size_t removed_tenure = 0;
    std::size_t removed_balance = 0;
};

/// Retain rows with tenure > min_tenure_months and balance >= min_balance.
inline InclusionResult apply_inclusion_criteria(const FeatureTable& t,
                                                const std::string& tenure_column,
                                                const std::string& balance_column,
                                                double min_tenure_months = 6.0,
                                                double min_balance = 1500.0) {
    const std::size_t tc = t.column_index(tenure_column);
    const std::size_t bc = t.column_index(balance_column);
    InclusionResult out;
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        const bool tenure_ok = t.at(r, tc) > min_tenure_months;
        const bool balance_ok = t.at(r, bc) >= min_balance;
        if (!tenure_ok) ++out.removed_tenure;
        if (!balance_ok) ++out.removed_balance;
        if (tenure_ok && balance_ok) keep.push_back(r);
    }
    out.table = t.select_rows(keep);
    return out;
}

struct SplitResult {
    FeatureTable train;
    FeatureTable test;
};

/// Stratified train/test split: per-class train counts are
/// round(train_fraction * class size), deterministic for a fixed seed.
inline SplitResult split(const FeatureTable& t, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0,1)");
    }
    std::vector<std::size_t> class0, class1;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        (t.labels[r] == 1 ? class1 : class0).push_back(r);
    }
    if (class0.size() < 2 || class1.size() < 2) {
        throw SamplingError("stratified split needs >= 2 rows per class");
    }

    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto* cls : {&class0, &class1}) {
        rng.shuffle(*cls);
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(cls->size())));
        n_train = std::clamp<std::size_t>(n_train, 1, cls->size() - 1);
        train_idx.insert(train_idx.end(), cls->begin(), cls->begin() + static_cast<long>(n_train));
        test_idx.insert(test_idx.end(), cls->begin() + static_cast<long>(n_train), cls->end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {t.select_rows(train_idx), t.select_rows(test_idx)};
}

struct Scaler {
    std::vector<double> mean;
    std::vector<double> std; // 1.0 for flagged columns
    std::vector<bool> zero_variance;

    std::vector<double> transform_row(const double* row) const {
        std::vector<double> out(mean.size());
        for (std::size_t c = 0; c < mean.size(); ++c) {
            out[c] = zero_variance[c] ? row[c] : (row[c] - mean[c]) / std[c];
        }
        return out;
    }
};

struct StandardizeResult {
    FeatureTable train;
    FeatureTable test;
    Scaler scaler;
};

/// Column-wise standardization with train statistics (population variance).
/// Zero-variance columns pass through unchanged and are flagged.
inline StandardizeResult standardize(const FeatureTable& train, const FeatureTable& test) {
    if (test.n_cols() != train.n_cols()) throw ShapeError("train/test column mismatch");
    const std::size_t d = train.n_cols();
    const auto n = static_cast<double>(train.n_rows());

    Scaler sc;
    sc.mean.resize(d);
    sc.std.resize(d);
    sc.zero_variance.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < train.n_rows(); ++r) sum += train.at(r, c);
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < train.n_rows(); ++r) {
            const double dlt = train.at(r, c) - mean;
            ss += dlt * dlt;
        }
        const double var = ss / n;
        sc.mean[c] = mean;
        sc.zero_variance[c] = var == 0.0;
        sc.std[c] = sc.zero_variance[c] ? 1.0 : std::sqrt(var);
    }

    StandardizeResult out;
    out.scaler = sc;
    out.train = train;
    out.test = test;
    for (auto* t : {&out.train, &out.test}) {
        for (std::size_t r = 0; r < t->n_rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                if (!sc.zero_variance[c]) t->at(r, c) = (t->at(r, c) - sc.mean[c]) / sc.std[c];
            }
        }
    }
    return out;
}

} // namespace churnkit
