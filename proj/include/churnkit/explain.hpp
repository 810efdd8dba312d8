#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "churnkit/error.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

using ScoreFn = std::function<double(std::span<const double>)>;

struct Attribution {
    std::vector<double> values;      // phi per feature
    std::vector<double> std_errors;  // empty for the exact method
    double base_value = 0.0;         // mean model output over the background
    double prediction = 0.0;         // model output at x
};

namespace detail {

constexpr std::size_t kExactLimit = 15;

inline double eval_masked(const ScoreFn& model, std::span<const double> x,
                          const double* background_row, std::uint32_t mask, std::size_t d,
                          std::vector<double>& scratch) {
    for (std::size_t i = 0; i < d; ++i) {
        scratch[i] = (mask >> i) & 1u ? x[i] : background_row[i];
    }
    return model(scratch);
}

} // namespace detail

/// Exact interventional Shapley values by coalition enumeration. The value of
/// a coalition S is the mean model output with features outside S replaced by
/// background-row values.
inline Attribution shapley_exact(const ScoreFn& model, std::span<const double> x,
                                 const FeatureTable& background) {
    const std::size_t d = x.size();
    if (d > detail::kExactLimit) {
        throw ShapeError("shapley_exact supports at most 15 features; use shapley_mc");
    }
    if (background.n_rows() == 0) throw ConfigError("background set must be non-empty");
    if (background.n_cols() != d) throw ShapeError("background width does not match input");

    const std::uint32_t n_masks = 1u << d;
    std::vector<double> v(n_masks, 0.0);
    std::vector<double> scratch(d);
    const double bg_scale = 1.0 / static_cast<double>(background.n_rows());
    for (std::size_t b = 0; b < background.n_rows(); ++b) {
        const double* row = background.row(b);
        for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
            v[mask] += bg_scale * detail::eval_masked(model, x, row, mask, d, scratch);
        }
    }

    // weight[s] = s! (d-s-1)! / d!
    std::vector<double> weight(d);
    {
        std::vector<long double> fact(d + 1, 1.0L);
        for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<long double>(i);
        for (std::size_t s = 0; s < d; ++s) {
            weight[s] = static_cast<double>(fact[s] * fact[d - s - 1] / fact[d]);
        }
    }

    Attribution out;
    out.values.assign(d, 0.0);
    out.base_value = v[0];
    out.prediction = model(std::vector<double>(x.begin(), x.end()));
    for (std::size_t i = 0; i < d; ++i) {
        const std::uint32_t bit = 1u << i;
        for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const auto s = static_cast<std::size_t>(std::popcount(mask));
            out.values[i] += weight[s] * (v[mask | bit] - v[mask]);
        }
    }
    return out;
}

/// Permutation-sampling Shapley estimate with one background row per
/// permutation; unbiased for the exact values. Reports per-feature
/// Monte-Carlo standard errors.
inline Attribution shapley_mc(const ScoreFn& model, std::span<const double> x,
                              const FeatureTable& background, std::size_t n_permutations,
                              std::uint64_t seed) {
    const std::size_t d = x.size();
    if (n_permutations < 10) throw ConfigError("shapley_mc needs n_permutations >= 10");
    if (background.n_rows() == 0) throw ConfigError("background set must be non-empty");
    if (background.n_cols() != d) throw ShapeError("background width does not match input");

    Rng rng(seed);
    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    std::vector<std::size_t> perm(d);
    std::vector<double> scratch(d);
    for (std::size_t p = 0; p < n_permutations; ++p) {
        for (std::size_t i = 0; i < d; ++i) perm[i] = i;
        rng.shuffle(perm);
        const double* row = background.row(rng.below(background.n_rows()));
        for (std::size_t i = 0; i < d; ++i) scratch[i] = row[i];
        double prev = model(scratch);
        for (std::size_t i : perm) {
            scratch[i] = x[i];
            const double cur = model(scratch);
            const double contrib = cur - prev;
            sum[i] += contrib;
            sumsq[i] += contrib * contrib;
            prev = cur;
        }
    }

    Attribution out;
    const auto n = static_cast<double>(n_permutations);
    out.values.resize(d);
    out.std_errors.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        out.values[i] = sum[i] / n;
        const double var = std::max(0.0, sumsq[i] / n - out.values[i] * out.values[i]);
        out.std_errors[i] = std::sqrt(var / n);
    }
    double base = 0.0;
    for (std::size_t b = 0; b < background.n_rows(); ++b) {
        std::span<const double> row(background.row(b), d);
        base += model(row);
    }
    out.base_value = base / static_cast<double>(background.n_rows());
    out.prediction = model(std::vector<double>(x.begin(), x.end()));
    return out;
}

struct FeatureImportance {
    std::string name;
    double mean_abs_phi = 0.0;
    double positive_fraction = 0.0; // fraction of rows where phi > 0
};

struct GlobalImportanceOptions {
    std::size_t mc_permutations = 2000; // used when d > 15
    std::uint64_t seed = 0;
};

/// Mean |phi| ranking over the rows of `table`, exact enumeration when the
/// feature count allows it.
inline std::vector<FeatureImportance> global_importance(const ScoreFn& model,
                                                        const FeatureTable& table,
                                                        const FeatureTable& background,
                                                        const GlobalImportanceOptions& opt = {}) {
    if (table.n_rows() == 0) throw ConfigError("global_importance needs a non-empty table");
    const std::size_t d = table.n_cols();
    std::vector<double> abs_sum(d, 0.0);
    std::vector<double> pos_count(d, 0.0);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        std::span<const double> x(table.row(r), d);
        const Attribution a = d <= detail::kExactLimit
                                  ? shapley_exact(model, x, background)
                                  : shapley_mc(model, x, background, opt.mc_permutations,
                                               opt.seed + r);
        for (std::size_t i = 0; i < d; ++i) {
            abs_sum[i] += std::abs(a.values[i]);
            if (a.values[i] > 0.0) pos_count[i] += 1.0;
        }
    }
    std::vector<FeatureImportance> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = {table.columns[i], abs_sum[i] / static_cast<double>(table.n_rows()),
                  pos_count[i] / static_cast<double>(table.n_rows())};
    }
    std::stable_sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
        return a.mean_abs_phi > b.mean_abs_phi;
    });
    return out;
}

/// Seeded background subsample (default cap 100 rows).
inline FeatureTable sample_background(const FeatureTable& table, std::size_t max_rows,
                                      std::uint64_t seed) {
    if (table.n_rows() <= max_rows) return table;
    Rng rng(seed);
    auto idx = rng.sample_without_replacement(table.n_rows(), max_rows);
    std::sort(idx.begin(), idx.end());
    return table.select_rows(idx);
}

} // namespace churnkit
