// churnkit command-line front end: synth / train / evaluate / causal / explain.
// All outputs are deterministic given (inputs, seed); every resolved
// parameter lands in the run manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "churnkit/churnkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitEvaluation = 4;
constexpr int kExitCausal = 5;

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw churnkit::ParseError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw churnkit::ParseError("cannot open " + path.string());
    return json::parse(in);
}

struct ModelFile {
    churnkit::Network network;
    churnkit::Scaler scaler;
    std::vector<std::string> features;
    std::string label;
};

json model_to_json(const ModelFile& m) {
    json j;
    j["format_version"] = 1;
    j["network"] = churnkit::network_to_json(m.network);
    j["scaler"] = {{"mean", m.scaler.mean},
                   {"std", m.scaler.std},
                   {"zero_variance", std::vector<int>(m.scaler.zero_variance.begin(),
                                                      m.scaler.zero_variance.end())}};
    j["features"] = m.features;
    j["label"] = m.label;
    return j;
}

ModelFile model_from_json(const json& j) {
    ModelFile m;
    m.network = churnkit::network_from_json(j.at("network"));
    m.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    m.scaler.std = j.at("scaler").at("std").get<std::vector<double>>();
    for (int v : j.at("scaler").at("zero_variance").get<std::vector<int>>()) {
        m.scaler.zero_variance.push_back(v != 0);
    }
    m.features = j.at("features").get<std::vector<std::string>>();
    m.label = j.at("label").get<std::string>();
    return m;
}

churnkit::FeatureTable load_aligned(const std::string& path, const ModelFile& m) {
    churnkit::FeatureTable t = churnkit::load_saved_table(path);
    if (t.columns != m.features) {
        throw churnkit::ConfigError("data columns do not match the model's feature list");
    }
    return t;
}

std::vector<churnkit::ScoredSample> score_table(const ModelFile& m,
                                                const churnkit::FeatureTable& t) {
    std::vector<churnkit::ScoredSample> out;
    out.reserve(t.n_rows());
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        const auto x = m.scaler.transform_row(t.row(r));
        out.push_back({churnkit::forward(m.network, x), t.labels[r]});
    }
    return out;
}

int cmd_synth(const std::string& spec_path, bool use_default, std::size_t n,
              std::uint64_t seed, const fs::path& out_dir) {
    churnkit::ScmSpec spec;
    if (use_default) {
        spec = churnkit::default_spec(seed);
    } else {
        spec = churnkit::spec_from_json(read_json(spec_path));
        spec.seed = seed;
    }
    const auto data = churnkit::generate(spec, n);
    fs::create_directories(out_dir);
    churnkit::save_table(data.table, (out_dir / "data.csv").string());
    write_json(out_dir / "spec.json", churnkit::spec_to_json(spec));

    json ates;
    for (const auto& v : spec.variables) {
        if (v.name == spec.label_variable) continue;
        const auto a = churnkit::true_ate(spec, v.name, spec.label_variable, 200000, seed);
        ates[v.name] = {{"ate", a.value},
                        {"std_error", a.std_error},
                        {"method", a.analytic ? "analytic_path_product" : "interventional_mc"}};
    }
    write_json(out_dir / "true_ate.json", {{"outcome", spec.label_variable}, {"effects", ates}});

    json manifest = {{"command", "synth"},
                     {"n", n},
                     {"seed", seed},
                     {"spec", use_default ? "default" : spec_path}};
    write_json(out_dir / "manifest.json", manifest);
    return kExitOk;
}

int cmd_train(const std::string& data_path, std::uint64_t seed, const fs::path& out_dir,
              double train_fraction, bool no_smote, int smote_k, const std::string& tenure_col,
              const std::string& balance_col, double min_tenure, double min_balance,
              std::vector<std::size_t> hidden, int epochs, double lr, std::size_t batch_size) {
    churnkit::FeatureTable table = churnkit::load_saved_table(data_path);
    fs::create_directories(out_dir);

    json manifest = {{"command", "train"}, {"data", data_path}, {"seed", seed},
                     {"train_fraction", train_fraction}};

    std::size_t removed_tenure = 0, removed_balance = 0;
    if (!tenure_col.empty() || !balance_col.empty()) {
        if (tenure_col.empty() || balance_col.empty()) {
            throw churnkit::ConfigError("inclusion criteria need both --tenure-col and --balance-col");
        }
        auto incl = churnkit::apply_inclusion_criteria(table, tenure_col, balance_col, min_tenure,
                                                       min_balance);
        removed_tenure = incl.removed_tenure;
        removed_balance = incl.removed_balance;
        table = std::move(incl.table);
        manifest["inclusion"] = {{"tenure_column", tenure_col},
                                 {"balance_column", balance_col},
                                 {"min_tenure_months", min_tenure},
                                 {"min_balance", min_balance},
                                 {"removed_tenure", removed_tenure},
                                 {"removed_balance", removed_balance}};
    } else {
        manifest["inclusion"] = "disabled";
    }

    auto parts = churnkit::split(table, train_fraction, seed);
    auto std_result = churnkit::standardize(parts.train, parts.test);

    churnkit::FeatureTable train_table = std::move(std_result.train);
    if (!no_smote) {
        churnkit::SmoteConfig smote_cfg;
        smote_cfg.k_neighbors = smote_k;
        smote_cfg.seed = seed;
        train_table = churnkit::smote(train_table, smote_cfg);
        manifest["smote"] = {{"k_neighbors", smote_k}, {"seed", seed}};
    } else {
        manifest["smote"] = "disabled";
    }

    churnkit::NetworkConfig cfg = churnkit::NetworkConfig::dff_default(train_table.n_cols());
    if (!hidden.empty()) {
        cfg.layer_widths = {train_table.n_cols()};
        cfg.layer_widths.insert(cfg.layer_widths.end(), hidden.begin(), hidden.end());
        cfg.layer_widths.push_back(1);
        cfg.activations.assign(hidden.size(), churnkit::Activation::relu);
        cfg.activations.front() = churnkit::Activation::tanh_fn;
        cfg.dropout_rates.assign(hidden.size(), 0.0);
        cfg.dropout_rates.front() = 0.3;
    }
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.seed = seed;

    auto trained = churnkit::train(train_table, cfg);

    ModelFile model{std::move(trained.network), std_result.scaler, parts.train.columns,
                    parts.train.label_name};
    write_json(out_dir / "model.json", model_to_json(model));

    {
        std::ofstream trace(out_dir / "loss_trace.csv");
        trace << "epoch,loss\n";
        for (std::size_t e = 0; e < trained.loss_trace.size(); ++e) {
            trace << e << "," << churnkit::detail::format_double(trained.loss_trace[e]) << "\n";
        }
    }
    // held-out partition in raw (unstandardized) units; the model file
    // carries the scaler
    churnkit::save_table(parts.test, (out_dir / "test_data.csv").string());

    manifest["network"] = {{"layer_widths", cfg.layer_widths},
                           {"activations", [&] {
                                json a = json::array();
                                for (auto act : cfg.activations) a.push_back(churnkit::to_string(act));
                                return a;
                            }()},
                           {"dropout_rates", cfg.dropout_rates},
                           {"learning_rate", cfg.learning_rate},
                           {"epochs", cfg.epochs},
                           {"batch_size", cfg.batch_size},
                           {"seed", cfg.seed},
                           {"loss_function", "binary_cross_entropy"},
                           {"optimizer", "adam"},
                           {"adam_beta1", 0.9},
                           {"adam_beta2", 0.999},
                           {"adam_epsilon", 1e-8},
                           {"initialization", "glorot_uniform"}};
    manifest["standardization"] = "train-statistics, population variance";
    write_json(out_dir / "manifest.json", manifest);
    return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const fs::path& out_dir) {
    const ModelFile model = model_from_json(read_json(model_path));
    const churnkit::FeatureTable table = load_aligned(data_path, model);
    const auto scored = score_table(model, table);

    std::size_t n_pos = 0;
    for (const auto& s : scored) n_pos += s.label == 1;
    if (n_pos == 0 || n_pos == scored.size()) {
        throw churnkit::MetricError("test set contains a single class");
    }

    fs::create_directories(out_dir);
    const auto roc = churnkit::roc_points(scored);
    churnkit::write_roc_csv(roc, (out_dir / "roc.csv").string());

    json report = {{"auc_strict", churnkit::auc(scored, churnkit::TiePolicy::strict)},
                   {"auc_half", churnkit::auc(scored, churnkit::TiePolicy::half)},
                   {"recall", churnkit::recall(scored)},
                   {"accuracy", churnkit::accuracy(scored)},
                   {"n_test", scored.size()},
                   {"class_counts", {{"churn", n_pos}, {"non_churn", scored.size() - n_pos}}}};
    write_json(out_dir / "report.json", report);
    write_json(out_dir / "manifest.json",
               {{"command", "evaluate"}, {"model", model_path}, {"data", data_path}});
    return kExitOk;
}

int cmd_causal(const std::string& data_path, const std::string& graph_path,
               const std::string& treatment, const std::string& outcome,
               const std::string& estimator, std::uint64_t seed, const fs::path& out_dir) {
    const churnkit::FeatureTable table = churnkit::load_saved_table(data_path);
    const churnkit::CausalGraph graph = churnkit::graph_from_json(read_json(graph_path));

    json report = {{"treatment", treatment}, {"outcome", outcome}, {"seed", seed}};
    const bool run_linear = estimator == "both" || estimator == "linear";
    const bool run_ipw = estimator == "both" || estimator == "ipw";
    if (!run_linear && !run_ipw) {
        throw churnkit::ConfigError("estimator must be one of: both, linear, ipw");
    }
    if (run_linear) {
        const auto est = churnkit::estimate_ate_linear(table, graph, treatment, outcome);
        const auto ref = churnkit::refute_random_common_cause(table, graph, est, seed);
        report["linear_regression"] = {{"estimate", churnkit::estimate_to_json(est)},
                                       {"refutation", churnkit::refutation_to_json(ref)}};
    }
    if (run_ipw) {
        const auto est = churnkit::estimate_ate_ipw(table, graph, treatment, outcome);
        const auto ref = churnkit::refute_random_common_cause(table, graph, est, seed);
        report["ipw"] = {{"estimate", churnkit::estimate_to_json(est)},
                         {"refutation", churnkit::refutation_to_json(ref)}};
    }
    fs::create_directories(out_dir);
    write_json(out_dir / "causal_report.json", report);
    write_json(out_dir / "manifest.json",
               {{"command", "causal"},
                {"data", data_path},
                {"graph", graph_path},
                {"treatment", treatment},
                {"outcome", outcome},
                {"estimator", estimator},
                {"seed", seed}});
    return kExitOk;
}

int cmd_explain(const std::string& model_path, const std::string& data_path, long sample_index,
                bool global, const std::string& method, std::size_t permutations,
                std::size_t background_rows, std::uint64_t seed, const fs::path& out_dir) {
    const ModelFile model = model_from_json(read_json(model_path));
    const churnkit::FeatureTable table = load_aligned(data_path, model);

    // attributions on the probability output, in standardized feature space
    churnkit::FeatureTable standardized = table;
    for (std::size_t r = 0; r < standardized.n_rows(); ++r) {
        const auto x = model.scaler.transform_row(table.row(r));
        for (std::size_t c = 0; c < x.size(); ++c) standardized.at(r, c) = x[c];
    }
    const churnkit::ScoreFn score = [&](std::span<const double> x) {
        return churnkit::forward(model.network, x);
    };
    const churnkit::FeatureTable background =
        churnkit::sample_background(standardized, background_rows, seed);

    fs::create_directories(out_dir);
    json report;
    if (global) {
        churnkit::GlobalImportanceOptions opt;
        opt.mc_permutations = permutations;
        opt.seed = seed;
        const auto ranking = churnkit::global_importance(score, standardized, background, opt);
        report["global_importance"] = json::array();
        for (const auto& f : ranking) {
            report["global_importance"].push_back({{"feature", f.name},
                                                   {"mean_abs_phi", f.mean_abs_phi},
                                                   {"positive_fraction", f.positive_fraction}});
        }
    } else {
        if (sample_index < 0 || static_cast<std::size_t>(sample_index) >= standardized.n_rows()) {
            throw churnkit::ConfigError("sample index out of range");
        }
        std::span<const double> x(standardized.row(static_cast<std::size_t>(sample_index)),
                                  standardized.n_cols());
        churnkit::Attribution a;
        if (method == "exact") {
            a = churnkit::shapley_exact(score, x, background);
        } else if (method == "mc") {
            a = churnkit::shapley_mc(score, x, background, permutations, seed);
        } else {
            throw churnkit::ConfigError("method must be exact or mc");
        }
        report["sample_index"] = sample_index;
        report["base_value"] = a.base_value;
        report["prediction"] = a.prediction;
        report["method"] = method;
        report["attributions"] = json::array();
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            json rec = {{"feature", model.features[i]}, {"phi", a.values[i]}};
            if (!a.std_errors.empty()) rec["std_error"] = a.std_errors[i];
            report["attributions"].push_back(rec);
        }
    }
    write_json(out_dir / "explain_report.json", report);
    write_json(out_dir / "manifest.json",
               {{"command", "explain"},
                {"model", model_path},
                {"data", data_path},
                {"global", global},
                {"sample_index", sample_index},
                {"method", method},
                {"permutations", permutations},
                {"background_rows", background_rows},
                {"seed", seed}});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"churn propensity and causal analysis toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic SCM data with known effects");
    std::string synth_spec;
    bool synth_default = false;
    std::size_t synth_n = 10000;
    std::uint64_t synth_seed = 0;
    std::string synth_out = ".";
    synth->add_option("--spec", synth_spec, "ScmSpec JSON file");
    synth->add_flag("--default", synth_default, "use the built-in calibrated spec");
    synth->add_option("--n", synth_n, "rows to generate")->required();
    synth->add_option("--seed", synth_seed, "RNG seed")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "inclusion -> split -> standardize -> SMOTE -> train");
    std::string train_data, train_out, tenure_col, balance_col;
    std::uint64_t train_seed = 0;
    double train_fraction = 0.8, min_tenure = 6.0, min_balance = 1500.0;
    double lr = 0.000474718;
    int epochs = 100, smote_k = 5;
    std::size_t batch_size = 64;
    bool no_smote = false;
    std::vector<std::size_t> hidden;
    train->add_option("--data", train_data, "prepared data CSV")->required();
    train->add_option("--seed", train_seed, "RNG seed")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--train-fraction", train_fraction, "train split fraction");
    train->add_flag("--no-smote", no_smote, "skip minority oversampling");
    train->add_option("--smote-k", smote_k, "SMOTE neighbor count");
    train->add_option("--tenure-col", tenure_col, "tenure column for inclusion criteria");
    train->add_option("--balance-col", balance_col, "balance column for inclusion criteria");
    train->add_option("--min-tenure", min_tenure, "minimum tenure in months (exclusive)");
    train->add_option("--min-balance", min_balance, "minimum balance (inclusive)");
    train->add_option("--hidden", hidden, "hidden layer widths");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--batch-size", batch_size, "mini-batch size");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "AUC/recall report on held-out data");
    std::string eval_model, eval_data, eval_out;
    evaluate->add_option("--model", eval_model, "model JSON file")->required();
    evaluate->add_option("--data", eval_data, "held-out data CSV")->required();
    evaluate->add_option("--out", eval_out, "output directory")->required();

    // causal
    auto* causal = app.add_subcommand("causal", "ATE estimation and RCC refutation");
    std::string causal_data, causal_graph, causal_treatment, causal_outcome,
        causal_estimator = "both", causal_out;
    std::uint64_t causal_seed = 0;
    causal->add_option("--data", causal_data, "data CSV")->required();
    causal->add_option("--graph", causal_graph, "causal graph JSON")->required();
    causal->add_option("--treatment", causal_treatment, "treatment variable")->required();
    causal->add_option("--outcome", causal_outcome, "outcome variable")->required();
    causal->add_option("--estimator", causal_estimator, "both | linear | ipw");
    causal->add_option("--seed", causal_seed, "refutation RNG seed")->required();
    causal->add_option("--out", causal_out, "output directory")->required();

    // explain
    auto* explain = app.add_subcommand("explain", "Shapley attributions");
    std::string explain_model, explain_data, explain_method = "exact", explain_out;
    long explain_sample = -1;
    bool explain_global = false;
    std::size_t explain_perms = 2000, explain_background = 100;
    std::uint64_t explain_seed = 0;
    explain->add_option("--model", explain_model, "model JSON file")->required();
    explain->add_option("--data", explain_data, "data CSV")->required();
    explain->add_option("--sample", explain_sample, "sample index to attribute");
    explain->add_flag("--global", explain_global, "global mean-|phi| ranking");
    explain->add_option("--method", explain_method, "exact | mc");
    explain->add_option("--permutations", explain_perms, "MC permutations");
    explain->add_option("--background", explain_background, "background sample cap");
    explain->add_option("--seed", explain_seed, "RNG seed")->required();
    explain->add_option("--out", explain_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (synth->parsed()) {
            if (!synth_default && synth_spec.empty()) {
                std::cerr << "error: provide --spec or --default\n";
                return kExitConfig;
            }
            return cmd_synth(synth_spec, synth_default, synth_n, synth_seed, synth_out);
        }
        if (train->parsed()) {
            try {
                return cmd_train(train_data, train_seed, train_out, train_fraction, no_smote,
                                 smote_k, tenure_col, balance_col, min_tenure, min_balance, hidden,
                                 epochs, lr, batch_size);
            } catch (const churnkit::ConfigError&) {
                throw;
            } catch (const churnkit::ParseError&) {
                throw; // unreadable inputs are a configuration problem
            } catch (const std::exception& e) {
                std::cerr << "training pipeline error: " << e.what() << "\n";
                return kExitTraining;
            }
        }
        if (evaluate->parsed()) {
            try {
                return cmd_evaluate(eval_model, eval_data, eval_out);
            } catch (const churnkit::MetricError& e) {
                std::cerr << "evaluation error: " << e.what() << "\n";
                return kExitEvaluation;
            }
        }
        if (causal->parsed()) {
            try {
                return cmd_causal(causal_data, causal_graph, causal_treatment, causal_outcome,
                                  causal_estimator, causal_seed, causal_out);
            } catch (const churnkit::ConfigError&) {
                throw;
            } catch (const churnkit::GraphError& e) {
                std::cerr << "causal graph error: " << e.what() << "\n";
                return kExitCausal;
            } catch (const churnkit::IdentificationError& e) {
                std::cerr << "identification error: " << e.what() << "\n";
                return kExitCausal;
            } catch (const churnkit::EstimationError& e) {
                std::cerr << "estimation error: " << e.what() << "\n";
                return kExitCausal;
            }
        }
        if (explain->parsed()) {
            return cmd_explain(explain_model, explain_data, explain_sample, explain_global,
                               explain_method, explain_perms, explain_background, explain_seed,
                               explain_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
