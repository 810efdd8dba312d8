#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "churnkit/error.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

struct ScoredSample {
    double score = 0.0;
    int label = 0;
};

inline double churn_rate(std::uint64_t lost, std::uint64_t initial) {
    if (initial == 0) throw MetricError("initial customer count must be > 0");
    if (lost > initial) throw MetricError("lost count exceeds initial count");
    return static_cast<double>(lost) / static_cast<double>(initial);
}

enum class TiePolicy { strict, half };

/// Pairwise AUC: (1/mn) * sum over churned i, non-churned j of [p_i > p_j],
/// plus 0.5 per tied pair under the half policy. Rank-based O((m+n)log(m+n));
/// equals the brute-force double sum exactly (both are an integer pair count
/// over mn, ties counted in halves).
inline double auc(const std::vector<ScoredSample>& samples, TiePolicy policy = TiePolicy::strict) {
    std::vector<double> pos, neg;
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw MetricError("non-finite score");
        (s.label == 1 ? pos : neg).push_back(s.score);
    }
    if (pos.empty() || neg.empty()) throw MetricError("AUC needs both classes");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    // for each positive, count negatives strictly below and negatives tied
    std::uint64_t greater2 = 0; // 2 * (#strict wins) + (ties if half)
    for (double p : pos) {
        const auto below = static_cast<std::uint64_t>(
            std::lower_bound(neg.begin(), neg.end(), p) - neg.begin());
        const auto below_or_eq = static_cast<std::uint64_t>(
            std::upper_bound(neg.begin(), neg.end(), p) - neg.begin());
        greater2 += 2 * below;
        if (policy == TiePolicy::half) greater2 += below_or_eq - below;
    }
    return static_cast<double>(greater2) /
           (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

inline double recall(const std::vector<ScoredSample>& samples, double threshold = 0.5) {
    std::uint64_t tp = 0, fn = 0;
    for (const auto& s : samples) {
        if (s.label == 1) (s.score >= threshold ? tp : fn)++;
    }
    if (tp + fn == 0) throw MetricError("recall needs at least one positive label");
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

inline double accuracy(const std::vector<ScoredSample>& samples, double threshold = 0.5) {
    if (samples.empty()) throw MetricError("accuracy needs samples");
    std::uint64_t correct = 0;
    for (const auto& s : samples) correct += (s.score >= threshold ? 1 : 0) == s.label;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// ROC curve with one point per distinct threshold, endpoints (0,0) and
/// (1,1). Trapezoidal area equals auc(half).
inline std::vector<RocPoint> roc_points(const std::vector<ScoredSample>& samples) {
    std::vector<ScoredSample> sorted = samples;
    std::uint64_t m = 0, n = 0;
    for (const auto& s : sorted) (s.label == 1 ? m : n)++;
    if (m == 0 || n == 0) throw MetricError("ROC needs both classes");
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

    std::vector<RocPoint> out{{0.0, 0.0}};
    std::uint64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double s = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == s) {
            (sorted[i].label == 1 ? tp : fp)++;
            ++i;
        }
        out.push_back({static_cast<double>(fp) / static_cast<double>(n),
                       static_cast<double>(tp) / static_cast<double>(m)});
    }
    return out;
}

inline double roc_area(const std::vector<RocPoint>& pts) {
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
    }
    return area;
}

inline void write_roc_csv(const std::vector<RocPoint>& pts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    out << "fpr,tpr\n";
    for (const auto& p : pts) {
        out << detail::format_double(p.fpr) << "," << detail::format_double(p.tpr) << "\n";
    }
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw MetricError("pearson needs equal lengths >= 2");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw MetricError("pearson undefined for a constant series");
    return sxy / std::sqrt(sxx * syy);
}

struct CorrelatedPair {
    std::string a;
    std::string b;
    double abs_r = 0.0;
};

struct CorrelationScreenResult {
    std::vector<CorrelatedPair> pairs;      // |r| >= threshold, descending
    std::vector<std::string> skipped;       // constant columns
};

inline CorrelationScreenResult correlation_screen(const FeatureTable& t, double threshold) {
    CorrelationScreenResult out;
    std::vector<bool> constant(t.n_cols(), false);
    std::vector<std::vector<double>> cols(t.n_cols());
    for (std::size_t c = 0; c < t.n_cols(); ++c) {
        cols[c] = t.column(c);
        constant[c] = std::all_of(cols[c].begin(), cols[c].end(),
                                  [&](double v) { return v == cols[c].front(); });
        if (constant[c]) out.skipped.push_back(t.columns[c]);
    }
    for (std::size_t a = 0; a < t.n_cols(); ++a) {
        if (constant[a]) continue;
        for (std::size_t b = a + 1; b < t.n_cols(); ++b) {
            if (constant[b]) continue;
            const double r = std::abs(pearson(cols[a], cols[b]));
            if (r >= threshold) out.pairs.push_back({t.columns[a], t.columns[b], r});
        }
    }
    std::stable_sort(out.pairs.begin(), out.pairs.end(),
                     [](const CorrelatedPair& p, const CorrelatedPair& q) { return p.abs_r > q.abs_r; });
    return out;
}

} // namespace churnkit
