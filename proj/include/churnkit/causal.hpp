#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "churnkit/error.hpp"
#include "churnkit/model.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

class CausalGraph {
public:
    std::vector<std::string> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // cause -> effect
    std::vector<std::vector<std::size_t>> parents;
    std::vector<std::vector<std::size_t>> children;

    static CausalGraph build(const std::vector<std::string>& node_names,
                             const std::vector<std::pair<std::string, std::string>>& edge_names) {
        CausalGraph g;
        g.nodes = node_names;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            for (std::size_t j = i + 1; j < g.nodes.size(); ++j) {
                if (g.nodes[i] == g.nodes[j]) throw GraphError("duplicate node: " + g.nodes[i]);
            }
        }
        g.parents.resize(g.nodes.size());
        g.children.resize(g.nodes.size());
        for (const auto& [cause, effect] : edge_names) {
            const std::size_t c = g.index(cause);
            const std::size_t e = g.index(effect);
            if (c == e) throw GraphError("self-loop on node " + cause);
            g.edges.emplace_back(c, e);
            g.children[c].push_back(e);
            g.parents[e].push_back(c);
        }
        g.check_acyclic();
        return g;
    }

    std::size_t index(const std::string& name) const {
        auto it = std::find(nodes.begin(), nodes.end(), name);
        if (it == nodes.end()) throw GraphError("unknown node: " + name);
        return static_cast<std::size_t>(it - nodes.begin());
    }

    bool has_node(const std::string& name) const {
        return std::find(nodes.begin(), nodes.end(), name) != nodes.end();
    }

    std::vector<bool> descendants(std::size_t v) const {
        std::vector<bool> seen(nodes.size(), false);
        std::deque<std::size_t> q{v};
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop_front();
            for (std::size_t c : children[u]) {
                if (!seen[c]) {
                    seen[c] = true;
                    q.push_back(c);
                }
            }
        }
        return seen; // v itself excluded unless reachable through a cycle (none)
    }

    CausalGraph without_edges_out_of(std::size_t v) const {
        CausalGraph g;
        g.nodes = nodes;
        g.parents.resize(nodes.size());
        g.children.resize(nodes.size());
        for (const auto& [c, e] : edges) {
            if (c == v) continue;
            g.edges.emplace_back(c, e);
            g.children[c].push_back(e);
            g.parents[e].push_back(c);
        }
        return g;
    }

private:
    void check_acyclic() const {
        std::vector<int> state(nodes.size(), 0); // 0 unvisited, 1 in stack, 2 done
        std::vector<std::size_t> stack;
        for (std::size_t s = 0; s < nodes.size(); ++s) {
            if (state[s] == 0) dfs(s, state, stack);
        }
    }

    void dfs(std::size_t v, std::vector<int>& state, std::vector<std::size_t>& stack) const {
        state[v] = 1;
        stack.push_back(v);
        for (std::size_t c : children[v]) {
            if (state[c] == 1) {
                std::string cycle = nodes[c];
                for (auto it = std::find(stack.begin(), stack.end(), c); it != stack.end(); ++it) {
                    if (*it != c) cycle += " -> " + nodes[*it];
                }
                throw GraphError("cycle detected: " + cycle + " -> " + nodes[c]);
            }
            if (state[c] == 0) dfs(c, state, stack);
        }
        stack.pop_back();
        state[v] = 2;
    }
};

inline CausalGraph graph_from_json(const nlohmann::json& j) {
    std::vector<std::string> nodes = j.at("nodes").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw GraphError("edge must be a [cause, effect] pair");
        edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    return CausalGraph::build(nodes, edges);
}

inline nlohmann::json graph_to_json(const CausalGraph& g) {
    nlohmann::json j;
    j["nodes"] = g.nodes;
    j["edges"] = nlohmann::json::array();
    for (const auto& [c, e] : g.edges) {
        j["edges"].push_back({g.nodes[c], g.nodes[e]});
    }
    return j;
}

/// True iff every trail between x and y is blocked given z. Reachability over
/// (node, entry-direction) states; colliders pass only when the collider or
/// one of its descendants is conditioned on.
inline bool d_separated(const CausalGraph& g, std::size_t x, std::size_t y,
                        const std::vector<std::size_t>& z) {
    if (x == y) throw GraphError("d_separated needs distinct endpoints");
    const std::size_t n = g.nodes.size();
    std::vector<bool> in_z(n, false);
    for (std::size_t v : z) {
        if (v >= n) throw GraphError("conditioning node out of range");
        if (v == x || v == y) throw GraphError("endpoints cannot be conditioned on");
        in_z[v] = true;
    }
    // v opens a collider iff v or a descendant of v is in Z
    std::vector<bool> opens_collider(n, false);
    {
        std::deque<std::size_t> q;
        for (std::size_t v = 0; v < n; ++v) {
            if (in_z[v]) {
                opens_collider[v] = true;
                q.push_back(v);
            }
        }
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop_front();
            for (std::size_t p : g.parents[u]) {
                if (!opens_collider[p]) {
                    opens_collider[p] = true;
                    q.push_back(p);
                }
            }
        }
    }

    // state encoding: node * 2 + (0 = entered via arrow into node, 1 = via arrow out)
    std::vector<bool> visited(2 * n, false);
    std::deque<std::pair<std::size_t, int>> q;
    auto push = [&](std::size_t v, int dir) {
        if (!visited[2 * v + dir]) {
            visited[2 * v + dir] = true;
            q.emplace_back(v, dir);
        }
    };
    for (std::size_t c : g.children[x]) push(c, 0);
    for (std::size_t p : g.parents[x]) push(p, 1);

    while (!q.empty()) {
        const auto [v, dir] = q.front();
        q.pop_front();
        if (v == y) return false;
        if (dir == 0) { // ... -> v
            if (!in_z[v]) {
                for (std::size_t c : g.children[v]) push(c, 0); // chain
            }
            if (opens_collider[v]) {
                for (std::size_t p : g.parents[v]) push(p, 1); // collider opened
            }
        } else { // v -> ... traversed backwards
            if (!in_z[v]) {
                for (std::size_t c : g.children[v]) push(c, 0); // fork
                for (std::size_t p : g.parents[v]) push(p, 1);  // chain upwards
            }
        }
    }
    return true;
}

inline bool d_separated(const CausalGraph& g, const std::string& x, const std::string& y,
                        const std::vector<std::string>& z) {
    std::vector<std::size_t> zi;
    for (const auto& name : z) zi.push_back(g.index(name));
    return d_separated(g, g.index(x), g.index(y), zi);
}

/// All minimal backdoor adjustment sets of size <= max_size. A candidate Z
/// (disjoint from descendants of the treatment) is valid when it d-separates
/// treatment and outcome in the graph with the treatment's outgoing edges
/// removed. Returns {{}} when no backdoor path exists.
inline std::vector<std::vector<std::string>> backdoor_sets(const CausalGraph& g,
                                                           const std::string& treatment,
                                                           const std::string& outcome,
                                                           std::size_t max_size = 8) {
    const std::size_t t = g.index(treatment);
    const std::size_t y = g.index(outcome);
    if (t == y) throw GraphError("treatment and outcome must differ");

    const auto desc = g.descendants(t);
    std::vector<std::size_t> candidates;
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        if (v != t && v != y && !desc[v]) candidates.push_back(v);
    }
    const CausalGraph pruned = g.without_edges_out_of(t);

    std::vector<std::vector<std::size_t>> minimal;
    const std::size_t limit = std::min(max_size, candidates.size());
    std::vector<std::size_t> subset;
    // enumerate subsets in increasing size so minimality is a subset check
    // against already accepted sets
    auto is_superset_of_accepted = [&](const std::vector<std::size_t>& s) {
        for (const auto& m : minimal) {
            if (std::includes(s.begin(), s.end(), m.begin(), m.end())) return true;
        }
        return false;
    };
    std::function<void(std::size_t, std::size_t)> enumerate = [&](std::size_t start,
                                                                  std::size_t remaining) {
        if (remaining == 0) {
            if (!is_superset_of_accepted(subset) && d_separated(pruned, t, y, subset)) {
                minimal.push_back(subset);
            }
            return;
        }
        for (std::size_t i = start; i + remaining <= candidates.size() + 1 && i < candidates.size();
             ++i) {
            subset.push_back(candidates[i]);
            enumerate(i + 1, remaining - 1);
            subset.pop_back();
        }
    };
    for (std::size_t size = 0; size <= limit; ++size) enumerate(0, size);

    std::vector<std::vector<std::string>> out;
    for (const auto& s : minimal) {
        std::vector<std::string> names;
        for (std::size_t v : s) names.push_back(g.nodes[v]);
        std::sort(names.begin(), names.end());
        out.push_back(std::move(names));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    return out;
}

enum class Estimator { linear_regression, ipw };

inline const char* to_string(Estimator e) {
    return e == Estimator::linear_regression ? "linear_regression" : "ipw";
}

struct EffectEstimate {
    std::string treatment;
    std::string outcome;
    Estimator estimator = Estimator::linear_regression;
    double ate = 0.0;
    std::vector<std::string> adjustment_set;
    std::size_t n_used = 0;
    bool treatment_binarized = false; // IPW on a continuous treatment
    double binarize_threshold = 0.0;
};

struct RefutationResult {
    EffectEstimate original;
    EffectEstimate refuted;
    double delta = 0.0;
    std::uint64_t seed = 0;
    std::string method = "random_common_cause";
};

namespace detail {

inline std::vector<double> get_series(const FeatureTable& t, const std::string& name) {
    if (name == t.label_name) {
        std::vector<double> out(t.labels.begin(), t.labels.end());
        return out;
    }
    return t.column(t.column_index(name));
}

// solve A w = b by Gaussian elimination with partial pivoting
inline std::vector<double> solve_linear_system(std::vector<std::vector<double>> a,
                                               std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-300) throw EstimationError("singular design matrix");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> w(n);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= a[r][c] * w[c];
        w[r] = s / a[r][r];
    }
    return w;
}

inline std::vector<std::string> pick_adjustment_set(const CausalGraph& g,
                                                    const std::string& treatment,
                                                    const std::string& outcome) {
    auto sets = backdoor_sets(g, treatment, outcome);
    if (sets.empty()) {
        throw IdentificationError("no valid backdoor adjustment set for " + treatment + " -> " +
                                  outcome);
    }
    return sets.front(); // smallest, lexicographic tie-break
}

} // namespace detail

/// OLS of the outcome on [intercept, treatment, adjustment set]; the ATE is
/// the treatment coefficient. Normal equations with 1e-8 ridge jitter.
inline EffectEstimate estimate_ate_linear(const FeatureTable& table, const CausalGraph& g,
                                          const std::string& treatment,
                                          const std::string& outcome) {
    EffectEstimate est;
    est.treatment = treatment;
    est.outcome = outcome;
    est.estimator = Estimator::linear_regression;
    est.adjustment_set = detail::pick_adjustment_set(g, treatment, outcome);
    est.n_used = table.n_rows();

    const auto tvals = detail::get_series(table, treatment);
    const auto yvals = detail::get_series(table, outcome);
    if (std::all_of(tvals.begin(), tvals.end(), [&](double v) { return v == tvals.front(); })) {
        throw EstimationError("treatment column is constant");
    }

    std::vector<std::vector<double>> covars;
    for (const auto& name : est.adjustment_set) covars.push_back(detail::get_series(table, name));

    const std::size_t n = table.n_rows();
    const std::size_t p = 2 + covars.size(); // intercept, treatment, adjustment
    std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
    std::vector<double> xty(p, 0.0);
    std::vector<double> xrow(p);
    for (std::size_t r = 0; r < n; ++r) {
        xrow[0] = 1.0;
        xrow[1] = tvals[r];
        for (std::size_t c = 0; c < covars.size(); ++c) xrow[2 + c] = covars[c][r];
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) xtx[i][j] += xrow[i] * xrow[j];
            xty[i] += xrow[i] * yvals[r];
        }
    }
    for (std::size_t i = 0; i < p; ++i) xtx[i][i] += 1e-8;
    const auto beta = detail::solve_linear_system(std::move(xtx), std::move(xty));
    est.ate = beta[1];
    return est;
}

/// Inverse-propensity-weighted ATE with Hajek normalization; the propensity
/// is a logistic fit of the treatment on the adjustment set, clipped to
/// [clip, 1-clip]. Continuous treatments are binarized at their median.
inline EffectEstimate estimate_ate_ipw(const FeatureTable& table, const CausalGraph& g,
                                       const std::string& treatment, const std::string& outcome,
                                       double clip = 0.01) {
    if (!(clip > 0.0 && clip < 0.5)) throw ConfigError("clip must lie in (0, 0.5)");
    EffectEstimate est;
    est.treatment = treatment;
    est.outcome = outcome;
    est.estimator = Estimator::ipw;
    est.adjustment_set = detail::pick_adjustment_set(g, treatment, outcome);
    est.n_used = table.n_rows();

    auto tvals = detail::get_series(table, treatment);
    const auto yvals = detail::get_series(table, outcome);

    const bool already_binary = std::all_of(tvals.begin(), tvals.end(),
                                            [](double v) { return v == 0.0 || v == 1.0; });
    if (!already_binary) {
        std::vector<double> sorted = tvals;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted.size() % 2 == 1
                                  ? sorted[sorted.size() / 2]
                                  : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
        est.treatment_binarized = true;
        est.binarize_threshold = median;
        for (double& v : tvals) v = v > median ? 1.0 : 0.0;
    }

    std::vector<int> tlab(tvals.size());
    std::size_t n1 = 0;
    for (std::size_t r = 0; r < tvals.size(); ++r) {
        tlab[r] = tvals[r] == 1.0 ? 1 : 0;
        n1 += tlab[r];
    }
    if (n1 == 0 || n1 == tvals.size()) throw EstimationError("a treatment arm is empty");

    std::vector<std::vector<double>> covars(table.n_rows());
    for (const auto& name : est.adjustment_set) {
        const auto col = detail::get_series(table, name);
        for (std::size_t r = 0; r < col.size(); ++r) covars[r].push_back(col[r]);
    }
    LinearModel propensity;
    try {
        propensity = fit_logistic_raw(covars, tlab);
    } catch (const std::exception& e) {
        throw EstimationError(std::string("propensity fit failed: ") + e.what());
    }

    double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        const double e = std::clamp(propensity.predict(covars[r]), clip, 1.0 - clip);
        if (tlab[r] == 1) {
            const double w = 1.0 / e;
            num1 += w * yvals[r];
            den1 += w;
        } else {
            const double w = 1.0 / (1.0 - e);
            num0 += w * yvals[r];
            den0 += w;
        }
    }
    est.ate = num1 / den1 - num0 / den0;
    return est;
}

/// Random-common-cause refutation: append a seeded standard-normal column,
/// wire it into the graph as a parent of both treatment and outcome, and
/// re-run the same estimator.
inline RefutationResult refute_random_common_cause(const FeatureTable& table,
                                                   const CausalGraph& g,
                                                   const EffectEstimate& prior,
                                                   std::uint64_t seed) {
    std::string cc_name = "res_random";
    while (table.has_column(cc_name) || g.has_node(cc_name)) cc_name += "_";

    FeatureTable augmented;
    augmented.columns = table.columns;
    augmented.columns.push_back(cc_name);
    augmented.labels = table.labels;
    augmented.row_ids = table.row_ids;
    augmented.label_name = table.label_name;
    Rng rng(seed);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        augmented.values.insert(augmented.values.end(), table.row(r), table.row(r) + table.n_cols());
        augmented.values.push_back(rng.normal());
    }

    std::vector<std::pair<std::string, std::string>> edge_names;
    for (const auto& [c, e] : g.edges) edge_names.emplace_back(g.nodes[c], g.nodes[e]);
    edge_names.emplace_back(cc_name, prior.treatment);
    edge_names.emplace_back(cc_name, prior.outcome);
    std::vector<std::string> node_names = g.nodes;
    node_names.push_back(cc_name);
    const CausalGraph augmented_graph = CausalGraph::build(node_names, edge_names);

    RefutationResult out;
    out.original = prior;
    out.refuted = prior.estimator == Estimator::linear_regression
                      ? estimate_ate_linear(augmented, augmented_graph, prior.treatment,
                                            prior.outcome)
                      : estimate_ate_ipw(augmented, augmented_graph, prior.treatment,
                                         prior.outcome);
    out.delta = std::abs(out.original.ate - out.refuted.ate);
    out.seed = seed;
    return out;
}

inline nlohmann::json estimate_to_json(const EffectEstimate& e) {
    nlohmann::json j;
    j["treatment"] = e.treatment;
    j["outcome"] = e.outcome;
    j["estimator"] = to_string(e.estimator);
    j["ate"] = e.ate;
    j["adjustment_set"] = e.adjustment_set;
    j["n_used"] = e.n_used;
    j["treatment_binarized"] = e.treatment_binarized;
    if (e.treatment_binarized) j["binarize_threshold"] = e.binarize_threshold;
    return j;
}

inline nlohmann::json refutation_to_json(const RefutationResult& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["original_ate"] = r.original.ate;
    j["refuted_ate"] = r.refuted.ate;
    j["delta"] = r.delta;
    return j;
}

} // namespace churnkit
