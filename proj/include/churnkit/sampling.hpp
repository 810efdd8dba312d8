#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "churnkit/error.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

struct SmoteConfig {
    int k_neighbors = 5;
    std::uint64_t seed = 0;
};

/// SMOTE to equality: synthesize minority rows at x + u * (x_nn - x) for a
/// minority parent x and one of its k nearest minority neighbors, u ~ U[0,1).
/// Expects standardized features so Euclidean distance is scale-free.
/// Synthetic rows are tagged "synthetic:<i>:p<parent row>:n<neighbor row>"
/// in row_ids (row indices into the input table).
inline FeatureTable smote(const FeatureTable& train, const SmoteConfig& cfg) {
    if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");

    std::vector<std::size_t> class0, class1;
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
        (train.labels[r] == 1 ? class1 : class0).push_back(r);
    }
    if (class0.empty() || class1.empty()) throw SamplingError("SMOTE needs two classes");

    const bool minority_is_one = class1.size() < class0.size();
    const auto& minority = minority_is_one ? class1 : class0;
    const auto& majority = minority_is_one ? class0 : class1;
    const int minority_label = minority_is_one ? 1 : 0;
    const std::size_t m = minority.size();
    const std::size_t need = majority.size() - minority.size();
    if (need == 0) return train;
    if (m < 2) throw SamplingError("minority class needs >= 2 rows for SMOTE");

    const std::size_t d = train.n_cols();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_neighbors), m - 1);

    // exact brute-force k nearest minority neighbors (self excluded),
    // distance ties broken by index for determinism
    std::vector<std::vector<std::size_t>> neighbors(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(m - 1);
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double s = 0.0;
            const double* a = train.row(minority[i]);
            const double* b = train.row(minority[j]);
            for (std::size_t c = 0; c < d; ++c) {
                const double dv = a[c] - b[c];
                s += dv * dv;
            }
            dist.emplace_back(s, j);
        }
        std::sort(dist.begin(), dist.end());
        for (std::size_t q = 0; q < k; ++q) neighbors[i].push_back(dist[q].second);
    }

    Rng rng(cfg.seed);
    // full rounds over every minority point; the remainder round samples
    // parents without replacement
    std::vector<std::size_t> parents;
    parents.reserve(need);
    const std::size_t rounds = need / m;
    for (std::size_t r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < m; ++i) parents.push_back(i);
    }
    for (std::size_t i : rng.sample_without_replacement(m, need % m)) parents.push_back(i);

    FeatureTable out = train;
    for (std::size_t s = 0; s < parents.size(); ++s) {
        const std::size_t pi = parents[s];
        const std::size_t ni = neighbors[pi][rng.below(neighbors[pi].size())];
        const double u = rng.uniform();
        const double* x = train.row(minority[pi]);
        const double* xn = train.row(minority[ni]);
        for (std::size_t c = 0; c < d; ++c) {
            out.values.push_back(x[c] + u * (xn[c] - x[c]));
        }
        out.labels.push_back(minority_label);
        out.row_ids.push_back("synthetic:" + std::to_string(s) + ":p" +
                              std::to_string(minority[pi]) + ":n" + std::to_string(minority[ni]));
    }
    return out;
}

} // namespace churnkit
