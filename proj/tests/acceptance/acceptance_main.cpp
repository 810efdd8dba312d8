// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Each check is independent so a failure never hides the
// others.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "churnkit/churnkit.hpp"

using namespace churnkit;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& title, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << " (" << title << "): "
              << detail << "\n";
    if (!ok) ++g_failures;
}

FeatureTable random_table(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    FeatureTable t;
    for (std::size_t c = 0; c < d; ++c) t.columns.push_back("f" + std::to_string(c));
    t.label_name = "churn";
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) t.values.push_back(rng.normal());
        t.labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
        t.row_ids.push_back("r" + std::to_string(r));
    }
    // guarantee both classes
    t.labels[0] = 0;
    t.labels[1] = 1;
    return t;
}

// ---------------------------------------------------------------- criterion 1

double batch_loss(const Network& net, const Batch& batch) {
    double loss = 0.0;
    for (std::size_t r : batch.rows) {
        const double p = forward(net, std::span<const double>(batch.table->row(r), net.input_dim()));
        loss += bce_loss(p, batch.table->labels[r]);
    }
    return loss / static_cast<double>(batch.rows.size());
}

void criterion_gradients() {
    const std::vector<std::vector<std::size_t>> shapes{
        {4, 8, 1},          {4, 16, 8, 1},        {5, 8, 8, 4, 1},
        {3, 6, 5, 4, 3, 1}, {6, 12, 6, 1},        {4, 10, 1},
        {5, 7, 7, 1},       {3, 9, 4, 2, 1},      {4, 5, 5, 5, 5, 1},
        {6, 8, 4, 1},
    };
    double worst = 0.0;
    for (std::uint64_t s = 0; s < shapes.size(); ++s) {
        NetworkConfig cfg;
        cfg.layer_widths = shapes[s];
        const std::size_t hidden = cfg.layer_widths.size() - 2;
        cfg.activations.assign(hidden, Activation::relu);
        cfg.activations.front() = Activation::tanh_fn;
        if (hidden > 2) cfg.activations[2] = Activation::tanh_fn;
        cfg.dropout_rates.assign(hidden, 0.0);
        cfg.seed = s;
        Rng rng(s * 31 + 7);
        Network net = Network::initialized(cfg, rng);

        auto table = random_table(12, cfg.layer_widths.front(), s * 101 + 3);
        Batch batch{&table, {}};
        for (std::size_t r = 0; r < table.n_rows(); ++r) batch.rows.push_back(r);

        const Gradients analytic = gradients(net, batch);
        const double h = 1e-5;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
                for (std::size_t i = 0; i < params.size(); ++i) {
                    const double saved = params[i];
                    params[i] = saved + h;
                    const double up = batch_loss(net, batch);
                    params[i] = saved - h;
                    const double down = batch_loss(net, batch);
                    params[i] = saved;
                    const double numeric = (up - down) / (2.0 * h);
                    const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
                    worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
                }
            };
            probe(net.layers[l].weights, analytic.layers[l].weights);
            probe(net.layers[l].biases, analytic.layers[l].biases);
        }
    }
    std::ostringstream d;
    d << "max relative error " << worst << " over 10 networks (threshold 1e-4)";
    report(1, "gradient correctness", worst < 1e-4, d.str());
}

// ---------------------------------------------------------------- criterion 2

double auc_brute(const std::vector<ScoredSample>& samples, TiePolicy policy) {
    std::uint64_t wins2 = 0, pairs = 0;
    for (const auto& p : samples) {
        if (p.label != 1) continue;
        for (const auto& n : samples) {
            if (n.label != 0) continue;
            ++pairs;
            if (p.score > n.score) wins2 += 2;
            else if (p.score == n.score && policy == TiePolicy::half) wins2 += 1;
        }
    }
    return static_cast<double>(wins2) / (2.0 * static_cast<double>(pairs));
}

void criterion_auc() {
    Rng rng(20240);
    std::size_t mismatches = 0, transform_mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 4 + rng.below(600); // m*n well under 1e6
        std::vector<ScoredSample> s;
        for (std::size_t i = 0; i < n; ++i) {
            double score = rng.uniform();
            if (trial % 2 == 0) score = std::round(score * 16.0) / 16.0; // force ties
            s.push_back({score, rng.uniform() < 0.4 ? 1 : 0});
        }
        s[0].label = 1;
        s[1].label = 0;
        for (auto policy : {TiePolicy::strict, TiePolicy::half}) {
            if (auc(s, policy) != auc_brute(s, policy)) ++mismatches;
        }
        // strictly increasing transform must leave the value bit-identical
        auto mapped = s;
        for (auto& x : mapped) x.score = std::exp(2.0 * x.score) + 1.0;
        if (auc(mapped, TiePolicy::half) != auc(s, TiePolicy::half)) ++transform_mismatches;
        if (auc(mapped, TiePolicy::strict) != auc(s, TiePolicy::strict)) ++transform_mismatches;
    }
    std::ostringstream d;
    d << mismatches << " oracle mismatches, " << transform_mismatches
      << " transform mismatches over 200 instances";
    report(2, "AUC oracle equivalence", mismatches == 0 && transform_mismatches == 0, d.str());
}

// ---------------------------------------------------------------- criterion 3

void criterion_smote() {
    std::size_t bad_counts = 0, off_segment = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(trial + 900);
        const std::size_t majority = 30 + rng.below(60);
        const std::size_t minority = 2 + rng.below(majority - 2);
        FeatureTable t;
        const std::size_t d = 2 + rng.below(5);
        for (std::size_t c = 0; c < d; ++c) t.columns.push_back("f" + std::to_string(c));
        t.label_name = "churn";
        for (std::size_t i = 0; i < majority + minority; ++i) {
            for (std::size_t c = 0; c < d; ++c) t.values.push_back(rng.normal());
            t.labels.push_back(i >= majority ? 1 : 0);
            t.row_ids.push_back("r" + std::to_string(i));
        }
        auto out = smote(t, {.k_neighbors = 5, .seed = trial});

        std::size_t zeros = 0, ones = 0;
        for (int y : out.labels) (y == 1 ? ones : zeros)++;
        if (zeros != ones || zeros != majority) ++bad_counts;

        for (std::size_t r = t.n_rows(); r < out.n_rows(); ++r) {
            const auto& id = out.row_ids[r];
            const auto p = id.find(":p");
            const auto nn = id.find(":n", p);
            const std::size_t parent = std::stoul(id.substr(p + 2, nn - p - 2));
            const std::size_t neighbor = std::stoul(id.substr(nn + 2));
            for (std::size_t c = 0; c < d; ++c) {
                const double lo = std::min(t.at(parent, c), t.at(neighbor, c));
                const double hi = std::max(t.at(parent, c), t.at(neighbor, c));
                if (out.at(r, c) < lo || out.at(r, c) > hi) ++off_segment;
            }
        }
    }
    std::ostringstream d;
    d << bad_counts << " unbalanced results, " << off_segment
      << " off-segment coordinates over 100 seeded trials";
    report(3, "SMOTE contract", bad_counts == 0 && off_segment == 0, d.str());
}

// ---------------------------------------------------------------- criterion 4

bool dsep_oracle(const CausalGraph& g, std::size_t x, std::size_t y,
                 const std::vector<std::size_t>& z) {
    const std::size_t n = g.nodes.size();
    std::vector<bool> in_z(n, false);
    for (std::size_t v : z) in_z[v] = true;
    std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
    for (const auto& [c, e] : g.edges) edge[c][e] = true;
    std::vector<bool> has_z_descendant(n, false);
    for (std::size_t v = 0; v < n; ++v) {
        if (in_z[v]) {
            has_z_descendant[v] = true;
            continue;
        }
        auto desc = g.descendants(v);
        for (std::size_t u = 0; u < n; ++u) {
            if (desc[u] && in_z[u]) {
                has_z_descendant[v] = true;
                break;
            }
        }
    }
    std::vector<std::size_t> path{x};
    std::vector<bool> on_path(n, false);
    on_path[x] = true;
    bool connected = false;
    std::function<void()> extend = [&]() {
        if (connected) return;
        const std::size_t tail = path.back();
        if (tail == y) {
            bool open = true;
            for (std::size_t i = 1; i + 1 < path.size(); ++i) {
                const std::size_t a = path[i - 1], m = path[i], b = path[i + 1];
                const bool collider = edge[a][m] && edge[b][m];
                if (collider ? !has_z_descendant[m] : in_z[m]) {
                    open = false;
                    break;
                }
            }
            if (open) connected = true;
            return;
        }
        for (std::size_t next = 0; next < n; ++next) {
            if (on_path[next] || (!edge[tail][next] && !edge[next][tail])) continue;
            path.push_back(next);
            on_path[next] = true;
            extend();
            path.pop_back();
            on_path[next] = false;
        }
    };
    extend();
    return !connected;
}

void criterion_dsep() {
    Rng rng(4040);
    std::size_t dsep_mismatches = 0, invalid_sets = 0, non_minimal = 0, graphs = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng.below(4); // 3..6 nodes
        std::vector<std::string> names;
        for (std::size_t i = 0; i < n; ++i) names.push_back("v" + std::to_string(i));
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<std::pair<std::string, std::string>> edges;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (rng.uniform() < 0.4) edges.emplace_back(names[order[i]], names[order[j]]);
            }
        }
        auto g = CausalGraph::build(names, edges);
        ++graphs;

        for (int query = 0; query < 3; ++query) {
            const std::size_t x = rng.below(n);
            std::size_t y = rng.below(n);
            while (y == x) y = rng.below(n);
            std::vector<std::size_t> z;
            for (std::size_t v = 0; v < n; ++v) {
                if (v != x && v != y && rng.uniform() < 0.3) z.push_back(v);
            }
            if (d_separated(g, x, y, z) != dsep_oracle(g, x, y, z)) ++dsep_mismatches;
        }

        // backdoor sets: validity + minimality on one random treatment/outcome
        const std::size_t t = rng.below(n);
        std::size_t y = rng.below(n);
        while (y == t) y = rng.below(n);
        auto sets = backdoor_sets(g, g.nodes[t], g.nodes[y]);
        auto pruned = g.without_edges_out_of(t);
        for (const auto& s : sets) {
            std::vector<std::size_t> zi;
            for (const auto& name : s) zi.push_back(g.index(name));
            if (!d_separated(pruned, t, y, zi)) ++invalid_sets;
            for (std::size_t drop = 0; drop < zi.size(); ++drop) {
                auto reduced = zi;
                reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(drop));
                if (d_separated(pruned, t, y, reduced)) ++non_minimal;
            }
        }
    }
    std::ostringstream d;
    d << dsep_mismatches << " verdict mismatches, " << invalid_sets << " invalid sets, "
      << non_minimal << " non-minimal sets over " << graphs << " random DAGs";
    report(4, "d-separation/backdoor oracle",
           dsep_mismatches == 0 && invalid_sets == 0 && non_minimal == 0, d.str());
}

// ---------------------------------------------------------------- criterion 5

void criterion_ate() {
    auto spec = default_spec(123);
    auto data = generate(spec, 50000);
    auto g = spec.graph();

    // merge the label back in as a numeric view for estimation via label_name
    const auto truth = true_ate(spec, "acc_tenure", "churn", 400000, 9);

    auto linear = estimate_ate_linear(data.table, g, "acc_tenure", "churn");
    auto ipw = estimate_ate_ipw(data.table, g, "acc_tenure", "churn");

    // naive difference of means, no adjustment
    double sum1 = 0, sum0 = 0;
    std::size_t n1 = 0, n0 = 0;
    const std::size_t ti = data.table.column_index("acc_tenure");
    for (std::size_t r = 0; r < data.table.n_rows(); ++r) {
        if (data.table.at(r, ti) == 1.0) {
            sum1 += data.table.labels[r];
            ++n1;
        } else {
            sum0 += data.table.labels[r];
            ++n0;
        }
    }
    const double naive = sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);

    const double err_linear = std::abs(linear.ate - truth.value);
    const double err_ipw = std::abs(ipw.ate - truth.value);
    const double naive_miss = std::abs(naive - truth.value);
    const bool ok = err_linear < 0.02 && err_ipw < 0.02 && naive_miss > 0.05;
    std::ostringstream d;
    d << "true " << truth.value << " (MC se " << truth.std_error << "), linear err " << err_linear
      << ", ipw err " << err_ipw << ", naive miss " << naive_miss
      << " (need < 0.02, < 0.02, > 0.05)";
    report(5, "ATE recovery", ok, d.str());
}

// ---------------------------------------------------------------- criterion 6

void criterion_refutation() {
    auto spec = default_spec(55);
    auto data = generate(spec, 20000);
    auto g = spec.graph();
    auto prior = estimate_ate_linear(data.table, g, "acc_tenure", "churn");

    std::size_t stable = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto ref = refute_random_common_cause(data.table, g, prior, seed);
        if (ref.delta < 0.005) ++stable;
        worst = std::max(worst, ref.delta);
    }
    std::ostringstream d;
    d << stable << "/20 seeds with |delta| < 0.005 (max delta " << worst << ", need >= 18)";
    report(6, "RCC refutation stability", stable >= 18, d.str());
}

// ---------------------------------------------------------------- criterion 7

void criterion_shapley() {
    // d = 10 model with one null player (index 9)
    ScoreFn model = [](std::span<const double> x) {
        double s = std::tanh(x[0] + 0.5 * x[1]);
        s += 0.8 * x[2] * x[3] - 1.2 * x[4] + 0.3 * std::sin(x[5]) + 0.1 * x[6] * x[6];
        s += 0.2 * x[7] - 0.4 * x[8];
        return s;
    };
    FeatureTable bg;
    for (int c = 0; c < 10; ++c) bg.columns.push_back("f" + std::to_string(c));
    bg.label_name = "churn";
    Rng rng(606);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 10; ++c) bg.values.push_back(rng.normal());
        bg.labels.push_back(0);
        bg.row_ids.push_back("b" + std::to_string(r));
    }

    double worst_eff = 0.0, worst_mc = 0.0;
    bool null_violated = false;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(10);
        for (auto& v : x) v = rng.normal();
        auto exact = shapley_exact(model, x, bg);
        double total = 0.0;
        for (double v : exact.values) total += v;
        worst_eff = std::max(worst_eff, std::abs(total - (exact.prediction - exact.base_value)));
        if (exact.values[9] != 0.0) null_violated = true;

        auto mc = shapley_mc(model, x, bg, 6000, 70 + static_cast<std::uint64_t>(trial));
        for (std::size_t i = 0; i < 10; ++i) {
            const double gap = std::abs(mc.values[i] - exact.values[i]);
            const double se = std::max(mc.std_errors[i], 1e-12);
            worst_mc = std::max(worst_mc, gap / se);
        }
    }
    std::ostringstream d;
    d << "max efficiency residual " << worst_eff << " (need < 1e-10), max |mc - exact| "
      << worst_mc << " se (need <= 4), null player " << (null_violated ? "violated" : "exact 0");
    report(7, "Shapley attribution", worst_eff < 1e-10 && worst_mc <= 4.0 && !null_violated,
           d.str());
}

// ---------------------------------------------------------------- criterion 8

void criterion_benchmark() {
    const auto start = std::chrono::steady_clock::now();
    auto spec = default_spec(7);
    auto data = generate(spec, 30000);
    auto parts = split(data.table, 0.8, 7);
    auto scaled = standardize(parts.train, parts.test);

    // Bayes-optimal reference: score with the generator's true probabilities
    std::vector<ScoredSample> bayes;
    for (std::size_t r = 0; r < parts.test.n_rows(); ++r) {
        const std::size_t src = std::stoul(parts.test.row_ids[r].substr(6)); // "synth:<r>"
        bayes.push_back({data.label_probability[src], parts.test.labels[r]});
    }
    const double bayes_auc = auc(bayes, TiePolicy::half);

    // logistic baseline on the standardized training partition
    auto logistic = fit_logistic(scaled.train);
    std::vector<ScoredSample> lr_scored;
    for (std::size_t r = 0; r < scaled.test.n_rows(); ++r) {
        std::vector<double> x(scaled.test.row(r), scaled.test.row(r) + scaled.test.n_cols());
        lr_scored.push_back({logistic.predict(x), scaled.test.labels[r]});
    }
    const double logistic_auc = auc(lr_scored, TiePolicy::half);

    // reference network on the same training partition as the baseline;
    // oversampling is covered by criterion 3 and the pipeline tests, and at
    // this corpus size its near-duplicate minority points only feed
    // memorization, which is not what this criterion measures
    auto cfg = NetworkConfig::dff_default(scaled.train.n_cols());
    cfg.seed = 42;
    auto trained = train(scaled.train, cfg);
    std::vector<ScoredSample> dff_scored;
    for (std::size_t r = 0; r < scaled.test.n_rows(); ++r) {
        std::span<const double> x(scaled.test.row(r), scaled.test.n_cols());
        dff_scored.push_back({forward(trained.network, x), scaled.test.labels[r]});
    }
    const double dff_auc = auc(dff_scored, TiePolicy::half);

    // sign anchors on the full generated data
    auto g = spec.graph();
    const double tenure_effect = estimate_ate_linear(data.table, g, "acc_tenure", "churn").ate;
    const double recency_effect = estimate_ate_linear(data.table, g, "sg_recency", "churn").ate;

    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    const bool ok = dff_auc >= bayes_auc - 0.05 && dff_auc >= logistic_auc - 0.01 &&
                    tenure_effect < 0.0 && recency_effect > 0.0;
    std::ostringstream d;
    d << "dff auc " << dff_auc << ", bayes " << bayes_auc << ", logistic " << logistic_auc
      << ", tenure effect " << tenure_effect << ", sg_recency effect " << recency_effect << " ("
      << elapsed << " s)";
    report(8, "end-to-end benchmark", ok, d.str());
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool run_cli(const std::string& args) {
    const std::string cmd = std::string(CHURNKIT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        if (!fs::exists(b / name) || slurp(a / name) != slurp(b / name)) return false;
    }
    return true;
}

void criterion_determinism() {
    const fs::path root = fs::temp_directory_path() / "churnkit_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    bool ok = true;
    std::string failed;
    auto twice = [&](const std::string& label, const std::string& args_template) {
        if (!ok) return;
        for (const char* tag : {"a", "b"}) {
            std::string args = args_template;
            const auto pos = args.find("{}");
            args.replace(pos, 2, (root / (label + "_" + tag)).string());
            if (!run_cli(args)) {
                ok = false;
                failed = label + " (command failed)";
                return;
            }
        }
        if (!dirs_identical(root / (label + "_a"), root / (label + "_b"))) {
            ok = false;
            failed = label;
        }
    };

    twice("synth", "synth --default --n 400 --seed 5 --out {}");
    const std::string data = (root / "synth_a" / "data.csv").string();
    twice("train", "train --data " + data + " --seed 2 --out {} --hidden 12 6 --epochs 4");
    const std::string model = (root / "train_a" / "model.json").string();
    const std::string test_data = (root / "train_a" / "test_data.csv").string();
    twice("evaluate", "evaluate --model " + model + " --data " + test_data + " --out {}");

    // graph json straight from the generated spec
    if (ok) {
        std::ofstream g(root / "graph.json");
        g << R"({"nodes":["gender","acc_balance_change_amount","account_balance","acc_tenure",)"
          << R"("account_growth","sg_recency","churn"],)"
          << R"("edges":[["gender","account_balance"],["acc_balance_change_amount","acc_tenure"],)"
          << R"(["acc_tenure","churn"],["account_balance","churn"],)"
          << R"(["acc_balance_change_amount","churn"],["account_growth","churn"],)"
          << R"(["sg_recency","churn"]]})";
    }
    twice("causal", "causal --data " + data + " --graph " + (root / "graph.json").string() +
                        " --treatment acc_tenure --outcome churn --seed 4 --out {}");
    twice("explain", "explain --model " + model + " --data " + test_data +
                         " --sample 1 --method mc --permutations 300 --seed 6 --out {}");

    report(9, "CLI determinism", ok,
           ok ? "synth/train/evaluate/causal/explain byte-identical across reruns"
              : "first divergent or failing command: " + failed);
}

} // namespace

int main() {
    criterion_gradients();
    criterion_auc();
    criterion_smote();
    criterion_dsep();
    criterion_ate();
    criterion_refutation();
    criterion_shapley();
    criterion_benchmark();
    criterion_determinism();
    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: ")
              << (g_failures == 0 ? "" : std::to_string(g_failures)) << "\n";
    return g_failures;
}
