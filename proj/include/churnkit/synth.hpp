#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "churnkit/causal.hpp"
#include "churnkit/error.hpp"
#include "churnkit/model.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

enum class EquationKind { linear_gaussian, logistic_binary };

struct VariableSpec {
    std::string name;
    EquationKind kind = EquationKind::linear_gaussian;
    std::vector<std::string> parents;
    std::vector<double> coefficients; // aligned with parents
    double intercept = 0.0;
    double noise_std = 1.0; // gaussian only
};

/// Structural causal model in topological order; the label variable becomes
/// the table's label column.
struct ScmSpec {
    std::vector<VariableSpec> variables;
    std::string label_variable;
    std::uint64_t seed = 0;
    bool coefficients_calibrated = false; // values chosen by this artifact, not measured

    std::size_t index(const std::string& name) const {
        for (std::size_t i = 0; i < variables.size(); ++i) {
            if (variables[i].name == name) return i;
        }
        throw SpecError("unknown variable: " + name);
    }

    void validate() const {
        for (std::size_t i = 0; i < variables.size(); ++i) {
            const auto& v = variables[i];
            if (v.parents.size() != v.coefficients.size()) {
                throw SpecError("parent/coefficient mismatch for " + v.name);
            }
            if (v.kind == EquationKind::linear_gaussian && v.noise_std < 0.0) {
                throw SpecError("negative noise std for " + v.name);
            }
            for (const auto& p : v.parents) {
                const std::size_t pi = index(p);
                if (pi >= i) throw SpecError("parent " + p + " does not precede " + v.name);
            }
        }
        index(label_variable);
    }

    CausalGraph graph() const {
        std::vector<std::string> nodes;
        std::vector<std::pair<std::string, std::string>> edges;
        for (const auto& v : variables) {
            nodes.push_back(v.name);
            for (const auto& p : v.parents) edges.emplace_back(p, v.name);
        }
        return CausalGraph::build(nodes, edges);
    }
};

struct GeneratedData {
    FeatureTable table;                      // label variable excluded from columns
    std::vector<double> label_probability;   // true P(label=1) per row
};

namespace detail {

inline double structural_value(const VariableSpec& v, const std::vector<double>& parent_values,
                               Rng& rng, double* prob_out) {
    double lin = v.intercept;
    for (std::size_t i = 0; i < parent_values.size(); ++i) {
        lin += v.coefficients[i] * parent_values[i];
    }
    if (v.kind == EquationKind::linear_gaussian) {
        if (prob_out != nullptr) *prob_out = 0.0;
        return lin + rng.normal(0.0, v.noise_std);
    }
    const double p = sigmoid(lin);
    if (prob_out != nullptr) *prob_out = p;
    return rng.uniform() < p ? 1.0 : 0.0;
}

} // namespace detail

/// Ancestral sampling in declaration order, deterministic per spec seed.
inline GeneratedData generate(const ScmSpec& spec, std::size_t n) {
    spec.validate();
    if (n < 1) throw SpecError("n must be >= 1");
    const std::size_t label_idx = spec.index(spec.label_variable);

    GeneratedData out;
    for (const auto& v : spec.variables) {
        if (v.name != spec.label_variable) out.table.columns.push_back(v.name);
    }
    out.table.label_name = spec.label_variable;

    Rng rng(spec.seed);
    std::vector<double> values(spec.variables.size());
    std::vector<double> parent_values;
    for (std::size_t r = 0; r < n; ++r) {
        double label_prob = 0.0;
        for (std::size_t i = 0; i < spec.variables.size(); ++i) {
            const auto& v = spec.variables[i];
            parent_values.clear();
            for (const auto& p : v.parents) parent_values.push_back(values[spec.index(p)]);
            double prob = 0.0;
            values[i] = detail::structural_value(v, parent_values, rng, &prob);
            if (i == label_idx) label_prob = prob;
        }
        for (std::size_t i = 0; i < spec.variables.size(); ++i) {
            if (i != label_idx) out.table.values.push_back(values[i]);
        }
        if (spec.variables[label_idx].kind != EquationKind::logistic_binary &&
            values[label_idx] != 0.0 && values[label_idx] != 1.0) {
            throw SpecError("label variable must be binary");
        }
        out.table.labels.push_back(values[label_idx] == 1.0 ? 1 : 0);
        out.table.row_ids.push_back("synth:" + std::to_string(r));
        out.label_probability.push_back(label_prob);
    }
    out.table.validate();
    return out;
}

struct TrueAte {
    double value = 0.0;
    double std_error = 0.0; // 0 for the analytic path
    bool analytic = false;
};

namespace detail {

// directed-path coefficient products from t to y, depth-first
inline double path_product_sum(const ScmSpec& spec, std::size_t t, std::size_t y) {
    if (t == y) return 1.0;
    double total = 0.0;
    const auto& target = spec.variables[y];
    for (std::size_t i = 0; i < target.parents.size(); ++i) {
        const std::size_t p = spec.index(target.parents[i]);
        total += target.coefficients[i] * path_product_sum(spec, t, p);
    }
    return total;
}

// true iff every node on a directed path from t to y (t excluded) is linear
inline bool linear_paths_only(const ScmSpec& spec, std::size_t t, std::size_t y) {
    std::vector<bool> reaches_from_t(spec.variables.size(), false);
    reaches_from_t[t] = true;
    for (std::size_t i = t + 1; i < spec.variables.size(); ++i) {
        for (const auto& p : spec.variables[i].parents) {
            if (reaches_from_t[spec.index(p)]) reaches_from_t[i] = true;
        }
    }
    std::vector<bool> reaches_y(spec.variables.size(), false);
    reaches_y[y] = true;
    for (std::size_t i = spec.variables.size(); i-- > 0;) {
        if (!reaches_y[i]) continue;
        for (const auto& p : spec.variables[i].parents) reaches_y[spec.index(p)] = true;
    }
    for (std::size_t i = 0; i < spec.variables.size(); ++i) {
        if (i != t && reaches_from_t[i] && reaches_y[i] &&
            spec.variables[i].kind != EquationKind::linear_gaussian) {
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Interventional Monte-Carlo ATE with paired exogenous noise across the two
/// arms, normalized by the intervention gap (do(T=1) vs do(T=0) for binary
/// treatments, +/- one noise std around the intercept for continuous ones).
inline TrueAte true_ate_mc(const ScmSpec& spec, const std::string& treatment,
                           const std::string& outcome, std::size_t mc_draws = 200000,
                           std::uint64_t seed = 0) {
    spec.validate();
    const std::size_t t = spec.index(treatment);
    const std::size_t y = spec.index(outcome);

    TrueAte out;
    const bool binary_treatment = spec.variables[t].kind == EquationKind::logistic_binary;
    double t1 = 1.0, t0 = 0.0;
    if (!binary_treatment) {
        const double sd = spec.variables[t].noise_std;
        t1 = spec.variables[t].intercept + sd;
        t0 = spec.variables[t].intercept - sd;
    }
    std::vector<double> diffs(mc_draws);
    {
        // evaluate both arms draw by draw with shared exogenous noise
        std::vector<double> values1(spec.variables.size()), values0(spec.variables.size());
        Rng rng(seed + 1);
        for (std::size_t r = 0; r < mc_draws; ++r) {
            // one exogenous draw per variable, reused across both arms
            std::vector<double> uniforms(spec.variables.size());
            std::vector<double> normals(spec.variables.size());
            for (std::size_t i = 0; i < spec.variables.size(); ++i) {
                if (spec.variables[i].kind == EquationKind::linear_gaussian) {
                    normals[i] = rng.normal();
                } else {
                    uniforms[i] = rng.uniform();
                }
            }
            auto evaluate = [&](std::vector<double>& values, double t_value) {
                for (std::size_t i = 0; i < spec.variables.size(); ++i) {
                    const auto& v = spec.variables[i];
                    if (i == t) {
                        values[i] = t_value;
                        continue;
                    }
                    double lin = v.intercept;
                    for (std::size_t pi = 0; pi < v.parents.size(); ++pi) {
                        lin += v.coefficients[pi] * values[spec.index(v.parents[pi])];
                    }
                    if (v.kind == EquationKind::linear_gaussian) {
                        values[i] = lin + v.noise_std * normals[i];
                    } else {
                        values[i] = uniforms[i] < sigmoid(lin) ? 1.0 : 0.0;
                    }
                }
            };
            evaluate(values1, t1);
            evaluate(values0, t0);
            diffs[r] = (values1[y] - values0[y]) / (t1 - t0);
        }
    }
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(mc_draws);
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= static_cast<double>(mc_draws);
    out.value = mean;
    out.std_error = std::sqrt(var / static_cast<double>(mc_draws));
    return out;
}

/// Ground-truth average treatment effect per unit of treatment. All-linear
/// mediating paths give the exact sum of path coefficient products; otherwise
/// falls back to the interventional Monte-Carlo route.
inline TrueAte true_ate(const ScmSpec& spec, const std::string& treatment,
                        const std::string& outcome, std::size_t mc_draws = 200000,
                        std::uint64_t seed = 0) {
    spec.validate();
    const std::size_t t = spec.index(treatment);
    const std::size_t y = spec.index(outcome);
    if (detail::linear_paths_only(spec, t, y)) {
        TrueAte out;
        out.value = detail::path_product_sum(spec, t, y);
        out.analytic = true;
        return out;
    }
    return true_ate_mc(spec, treatment, outcome, mc_draws, seed);
}

/// Calibrated superannuation-like model: gender -> account_balance -> churn,
/// acc_balance_change_amount -> {acc_tenure, churn}, account_growth -> churn,
/// sg_recency -> churn, acc_tenure -> churn. Churn prevalence ~20%; the
/// naive tenure/churn contrast is confounded by the balance-change variable.
inline ScmSpec default_spec(std::uint64_t seed = 0) {
    ScmSpec spec;
    spec.seed = seed;
    spec.label_variable = "churn";
    spec.coefficients_calibrated = true;
    spec.variables = {
        {"gender", EquationKind::logistic_binary, {}, {}, 0.0, 0.0},
        {"acc_balance_change_amount", EquationKind::linear_gaussian, {}, {}, 0.0, 1.0},
        {"account_balance", EquationKind::linear_gaussian, {"gender"}, {0.8}, 0.3, 1.0},
        {"acc_tenure", EquationKind::logistic_binary, {"acc_balance_change_amount"}, {1.4}, -0.2, 0.0},
        {"account_growth", EquationKind::linear_gaussian, {}, {}, 0.0, 1.0},
        {"sg_recency", EquationKind::linear_gaussian, {}, {}, 0.0, 1.0},
        {"churn",
         EquationKind::logistic_binary,
         {"acc_tenure", "account_balance", "acc_balance_change_amount", "account_growth", "sg_recency"},
         {-0.5, -0.3, -0.8, -0.4, 0.6},
         -1.3,
         0.0},
    };
    spec.validate();
    return spec;
}

inline nlohmann::json spec_to_json(const ScmSpec& spec) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["label_variable"] = spec.label_variable;
    j["coefficients_calibrated"] = spec.coefficients_calibrated;
    j["variables"] = nlohmann::json::array();
    for (const auto& v : spec.variables) {
        nlohmann::json vj;
        vj["name"] = v.name;
        vj["kind"] = v.kind == EquationKind::linear_gaussian ? "linear_gaussian" : "logistic_binary";
        vj["parents"] = v.parents;
        vj["coefficients"] = v.coefficients;
        vj["intercept"] = v.intercept;
        if (v.kind == EquationKind::linear_gaussian) vj["noise_std"] = v.noise_std;
        j["variables"].push_back(vj);
    }
    return j;
}

inline ScmSpec spec_from_json(const nlohmann::json& j) {
    ScmSpec spec;
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.label_variable = j.at("label_variable").get<std::string>();
    spec.coefficients_calibrated = j.value("coefficients_calibrated", false);
    for (const auto& vj : j.at("variables")) {
        VariableSpec v;
        v.name = vj.at("name").get<std::string>();
        const std::string kind = vj.at("kind").get<std::string>();
        if (kind == "linear_gaussian") {
            v.kind = EquationKind::linear_gaussian;
        } else if (kind == "logistic_binary") {
            v.kind = EquationKind::logistic_binary;
        } else {
            throw SpecError("unknown equation kind: " + kind);
        }
        v.parents = vj.at("parents").get<std::vector<std::string>>();
        v.coefficients = vj.at("coefficients").get<std::vector<double>>();
        v.intercept = vj.at("intercept").get<double>();
        v.noise_std = vj.value("noise_std", 0.0);
        spec.variables.push_back(std::move(v));
    }
    spec.validate();
    return spec;
}

} // namespace churnkit
