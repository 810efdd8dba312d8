#pragma once

#include <cstddef>
#include <vector>

#include "churnkit/error.hpp"

namespace churnkit {

struct VoteConfig {
    std::vector<double> weights; // soft mode; empty = uniform
    double threshold = 0.5;
};

/// Per-sample majority label. Even-split ties fall back to the mean of the
/// classifiers' probabilities against the threshold; label 0 when no
/// probabilities are available.
inline std::vector<int> hard_vote(const std::vector<std::vector<int>>& votes,
                                  const std::vector<std::vector<double>>& probs = {},
                                  double threshold = 0.5) {
    if (votes.empty()) throw ConfigError("hard_vote needs at least one classifier");
    const std::size_t n = votes.front().size();
    for (const auto& v : votes) {
        if (v.size() != n) throw ShapeError("ragged prediction lengths");
    }
    if (!probs.empty() && probs.size() != votes.size()) {
        throw ShapeError("probability set does not match classifier count");
    }
    std::vector<int> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t ones = 0;
        for (const auto& v : votes) ones += v[s] == 1;
        const std::size_t zeros = votes.size() - ones;
        if (ones > zeros) {
            out[s] = 1;
        } else if (ones < zeros) {
            out[s] = 0;
        } else if (!probs.empty()) {
            double mean = 0.0;
            for (const auto& p : probs) mean += p[s];
            mean /= static_cast<double>(probs.size());
            out[s] = mean >= threshold ? 1 : 0;
        } else {
            out[s] = 0;
        }
    }
    return out;
}

struct SoftVoteResult {
    std::vector<int> labels;
    std::vector<double> fused; // weighted mean probability per sample
};

/// Weighted-mean probability fusion; label = [fused >= threshold].
inline SoftVoteResult soft_vote(const std::vector<std::vector<double>>& probs,
                                const VoteConfig& cfg = {}) {
    if (probs.empty()) throw ConfigError("soft_vote needs at least one classifier");
    const std::size_t n = probs.front().size();
    for (const auto& p : probs) {
        if (p.size() != n) throw ShapeError("ragged prediction lengths");
    }
    std::vector<double> w = cfg.weights.empty()
                                ? std::vector<double>(probs.size(), 1.0)
                                : cfg.weights;
    if (w.size() != probs.size()) throw ConfigError("weight count does not match classifier count");
    double wsum = 0.0;
    for (double wi : w) {
        if (wi < 0.0) throw ConfigError("weights must be non-negative");
        wsum += wi;
    }
    if (wsum <= 0.0) throw ConfigError("soft-vote weights must sum > 0");

    SoftVoteResult out;
    out.labels.resize(n);
    out.fused.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        double acc = 0.0;
        for (std::size_t c = 0; c < probs.size(); ++c) acc += w[c] * probs[c][s];
        out.fused[s] = acc / wsum;
        out.labels[s] = out.fused[s] >= cfg.threshold ? 1 : 0;
    }
    return out;
}

} // namespace churnkit
