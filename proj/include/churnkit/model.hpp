#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "churnkit/error.hpp"
#include "churnkit/rng.hpp"
#include "churnkit/table.hpp"

namespace churnkit {

enum class Activation { tanh_fn, relu };

inline const char* to_string(Activation a) { return a == Activation::tanh_fn ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation: " + s);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct NetworkConfig {
    std::vector<std::size_t> layer_widths;   // input, hidden..., output(=1)
    std::vector<Activation> activations;     // one per hidden layer
    std::vector<double> dropout_rates;       // one per hidden layer, in [0,1)
    double learning_rate = 0.000474718;
    int epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;

    // 4 hidden layers, tanh then relu, dropout 0.3 on the first hidden layer
    static NetworkConfig dff_default(std::size_t input_dim) {
        NetworkConfig cfg;
        cfg.layer_widths = {input_dim, 64, 32, 16, 8, 1};
        cfg.activations = {Activation::tanh_fn, Activation::relu, Activation::relu, Activation::relu};
        cfg.dropout_rates = {0.3, 0.0, 0.0, 0.0};
        return cfg;
    }

    void validate() const {
        if (layer_widths.size() < 2) throw ConfigError("need at least input and output widths");
        if (layer_widths.back() != 1) throw ConfigError("output width must be 1");
        for (std::size_t w : layer_widths) {
            if (w < 1) throw ConfigError("layer widths must be >= 1");
        }
        const std::size_t hidden = layer_widths.size() - 2;
        if (activations.size() != hidden) throw ConfigError("one activation per hidden layer");
        if (dropout_rates.size() != hidden) throw ConfigError("one dropout rate per hidden layer");
        for (double r : dropout_rates) {
            if (r < 0.0 || r >= 1.0) throw ConfigError("dropout rates must lie in [0,1)");
        }
    }
};

struct Layer {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::vector<double> weights; // row-major, n_out x n_in
    std::vector<double> biases;  // n_out
};

enum class ForwardMode { train, infer };

class Network {
public:
    NetworkConfig config;
    std::vector<Layer> layers;

    static Network initialized(const NetworkConfig& cfg, Rng& rng) {
        cfg.validate();
        Network net;
        net.config = cfg;
        for (std::size_t l = 0; l + 1 < cfg.layer_widths.size(); ++l) {
            Layer layer;
            layer.n_in = cfg.layer_widths[l];
            layer.n_out = cfg.layer_widths[l + 1];
            layer.weights.resize(layer.n_in * layer.n_out);
            layer.biases.assign(layer.n_out, 0.0);
            // Glorot-uniform
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.n_in + layer.n_out));
            for (double& w : layer.weights) w = rng.uniform(-limit, limit);
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    std::size_t input_dim() const { return config.layer_widths.front(); }
    std::size_t n_hidden() const { return layers.size() - 1; }
};

namespace detail {

struct ForwardTrace {
    // activations[0] is the input; activations[l+1] the (post-dropout) output
    // of layer l; pre_activations[l] the affine output of layer l
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> pre_activations;
    std::vector<std::vector<double>> dropout_scale; // per hidden layer; empty if no dropout
};

inline ForwardTrace forward_trace(const Network& net, std::span<const double> x,
                                  ForwardMode mode, Rng* rng) {
    if (x.size() != net.input_dim()) throw ShapeError("input length does not match network input width");
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("non-finite network input");
    }
    ForwardTrace tr;
    tr.activations.emplace_back(x.begin(), x.end());
    tr.dropout_scale.resize(net.n_hidden());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        const auto& in = tr.activations.back();
        std::vector<double> z(layer.n_out);
        for (std::size_t o = 0; o < layer.n_out; ++o) {
            double s = layer.biases[o];
            const double* wrow = layer.weights.data() + o * layer.n_in;
            for (std::size_t i = 0; i < layer.n_in; ++i) s += wrow[i] * in[i];
            z[o] = s;
        }
        std::vector<double> a(layer.n_out);
        const bool is_output = l + 1 == net.layers.size();
        if (is_output) {
            a[0] = sigmoid(z[0]);
        } else {
            const Activation act = net.config.activations[l];
            for (std::size_t o = 0; o < layer.n_out; ++o) {
                a[o] = act == Activation::tanh_fn ? std::tanh(z[o]) : std::max(z[o], 0.0);
            }
            const double rate = net.config.dropout_rates[l];
            if (mode == ForwardMode::train && rate > 0.0) {
                if (rng == nullptr) throw ConfigError("train-mode forward needs an RNG for dropout");
                auto& scale = tr.dropout_scale[l];
                scale.resize(layer.n_out);
                for (std::size_t o = 0; o < layer.n_out; ++o) {
                    scale[o] = rng->uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
                    a[o] *= scale[o];
                }
            }
        }
        tr.pre_activations.push_back(std::move(z));
        tr.activations.push_back(std::move(a));
    }
    return tr;
}

} // namespace detail

/// Single forward pass. Infer mode is deterministic (dropout off); train mode
/// applies inverted dropout from the supplied RNG.
inline double forward(const Network& net, std::span<const double> x,
                      ForwardMode mode = ForwardMode::infer, Rng* rng = nullptr) {
    return detail::forward_trace(net, x, mode, rng).activations.back()[0];
}

/// Pre-sigmoid output of the final layer.
inline double forward_logit(const Network& net, std::span<const double> x,
                            ForwardMode mode = ForwardMode::infer, Rng* rng = nullptr) {
    return detail::forward_trace(net, x, mode, rng).pre_activations.back()[0];
}

inline double bce_loss(double p, int y) {
    constexpr double eps = 1e-12;
    p = std::clamp(p, eps, 1.0 - eps);
    return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

struct Gradients {
    std::vector<Layer> layers; // weights/biases hold gradient values

    static Gradients zeros_like(const Network& net) {
        Gradients g;
        for (const Layer& l : net.layers) {
            Layer gl;
            gl.n_in = l.n_in;
            gl.n_out = l.n_out;
            gl.weights.assign(l.weights.size(), 0.0);
            gl.biases.assign(l.biases.size(), 0.0);
            g.layers.push_back(std::move(gl));
        }
        return g;
    }
};

struct Batch {
    const FeatureTable* table;
    std::vector<std::size_t> rows;
};

namespace detail {

// backprop for one sample given its forward trace; accumulates into grads
inline double backprop_sample(const Network& net, const ForwardTrace& tr, int label,
                              double scale, Gradients& grads) {
    const double p = tr.activations.back()[0];
    // dL/dz for sigmoid + BCE
    std::vector<double> delta{p - static_cast<double>(label)};
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& layer = net.layers[li];
        Layer& g = grads.layers[li];
        const auto& in = tr.activations[li];
        for (std::size_t o = 0; o < layer.n_out; ++o) {
            g.biases[o] += scale * delta[o];
            double* grow = g.weights.data() + o * layer.n_in;
            for (std::size_t i = 0; i < layer.n_in; ++i) grow[i] += scale * delta[o] * in[i];
        }
        if (li == 0) break;
        std::vector<double> prev(layer.n_in, 0.0);
        for (std::size_t o = 0; o < layer.n_out; ++o) {
            const double* wrow = layer.weights.data() + o * layer.n_in;
            for (std::size_t i = 0; i < layer.n_in; ++i) prev[i] += wrow[i] * delta[o];
        }
        // through dropout and the hidden activation of layer li-1
        const std::size_t h = li - 1;
        if (!tr.dropout_scale[h].empty()) {
            for (std::size_t i = 0; i < layer.n_in; ++i) prev[i] *= tr.dropout_scale[h][i];
        }
        const Activation act = net.config.activations[h];
        const auto& z = tr.pre_activations[h];
        for (std::size_t i = 0; i < layer.n_in; ++i) {
            if (act == Activation::tanh_fn) {
                const double t = std::tanh(z[i]);
                prev[i] *= 1.0 - t * t;
            } else {
                prev[i] *= z[i] > 0.0 ? 1.0 : 0.0;
            }
        }
        delta = std::move(prev);
    }
    return bce_loss(p, label);
}

inline std::pair<Gradients, double> batch_gradients(const Network& net, const Batch& batch,
                                                    ForwardMode mode, Rng* rng) {
    if (batch.rows.empty()) throw ShapeError("empty batch");
    Gradients g = Gradients::zeros_like(net);
    const double scale = 1.0 / static_cast<double>(batch.rows.size());
    double loss = 0.0;
    for (std::size_t r : batch.rows) {
        auto tr = forward_trace(net, std::span<const double>(batch.table->row(r), net.input_dim()),
                                mode, rng);
        loss += scale * backprop_sample(net, tr, batch.table->labels[r], scale, g);
    }
    return {std::move(g), loss};
}

} // namespace detail

/// Exact mean-BCE gradients over the batch, dropout disabled.
inline Gradients gradients(const Network& net, const Batch& batch) {
    return detail::batch_gradients(net, batch, ForwardMode::infer, nullptr).first;
}

struct AdamState {
    std::vector<Layer> m; // first moments, parameter-shaped
    std::vector<Layer> v; // second moments
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros_like(const Network& net) {
        AdamState s;
        s.m = Gradients::zeros_like(net).layers;
        s.v = Gradients::zeros_like(net).layers;
        return s;
    }
};

/// Bias-corrected ADAM update applied in place.
inline void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto update = [&](std::vector<double>& params, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            if (params.size() != g.size()) throw ShapeError("gradient shape mismatch");
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
            }
        };
        update(net.layers[l].weights, grads.layers[l].weights, state.m[l].weights, state.v[l].weights);
        update(net.layers[l].biases, grads.layers[l].biases, state.m[l].biases, state.v[l].biases);
    }
}

struct TrainResult {
    Network network;
    std::vector<double> loss_trace; // mean training loss per epoch
};

/// Full training loop: seeded init, seeded shuffling, mini-batch ADAM with
/// train-mode dropout. Deterministic per config seed.
inline TrainResult train(const FeatureTable& table, const NetworkConfig& cfg_in) {
    NetworkConfig cfg = cfg_in;
    if (cfg.layer_widths.empty()) throw ConfigError("layer_widths unset");
    if (cfg.layer_widths.front() != table.n_cols()) {
        throw ConfigError("network input width does not match table");
    }
    cfg.validate();
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");

    Rng rng(cfg.seed);
    TrainResult out{Network::initialized(cfg, rng), {}};
    AdamState state = AdamState::zeros_like(out.network);

    std::vector<std::size_t> order(table.n_rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Batch batch{&table, {order.begin() + static_cast<long>(start),
                                 order.begin() + static_cast<long>(end)}};
            auto [grads, loss] = detail::batch_gradients(out.network, batch, ForwardMode::train, &rng);
            if (!std::isfinite(loss)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / cfg.batch_size));
            }
            adam_step(out.network, grads, state, cfg.learning_rate);
            epoch_loss += loss * static_cast<double>(batch.rows.size());
            seen += batch.rows.size();
        }
        out.loss_trace.push_back(epoch_loss / static_cast<double>(seen));
    }
    return out;
}

// ---------------------------------------------------------------------------
// logistic-regression baseline

struct LinearModel {
    std::vector<double> weights;
    double intercept = 0.0;
    bool converged = false;
    bool separation_flag = false;

    double decision(std::span<const double> x) const {
        double s = intercept;
        for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x[i];
        return s;
    }
    double predict(std::span<const double> x) const { return sigmoid(decision(x)); }
};

/// L2-regularized (lambda = 1e-4, intercept unpenalized) logistic regression
/// by full-batch ADAM; converged when the gradient max-norm drops below tol.
inline LinearModel fit_logistic_raw(const std::vector<std::vector<double>>& rows,
                                    const std::vector<int>& y, int max_iter = 2000,
                                    double tolerance = 1e-6, double lambda = 1e-4,
                                    double lr = 0.05) {
    if (rows.empty() || rows.size() != y.size()) throw ShapeError("bad logistic input");
    const std::size_t d = rows.front().size();
    const auto n = static_cast<double>(rows.size());
    bool has0 = false, has1 = false;
    for (int v : y) (v == 1 ? has1 : has0) = true;
    if (!has0 || !has1) throw SamplingError("logistic fit needs two classes");

    LinearModel model;
    model.weights.assign(d, 0.0);
    std::vector<double> m(d + 1, 0.0), v(d + 1, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    for (int it = 1; it <= max_iter; ++it) {
        std::vector<double> grad(d + 1, 0.0); // [weights..., intercept]
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double p = model.predict(rows[r]);
            const double err = (p - y[r]) / n;
            for (std::size_t c = 0; c < d; ++c) grad[c] += err * rows[r][c];
            grad[d] += err;
        }
        for (std::size_t c = 0; c < d; ++c) grad[c] += lambda * model.weights[c];

        double max_norm = 0.0;
        for (double g : grad) max_norm = std::max(max_norm, std::abs(g));
        if (max_norm < tolerance) {
            model.converged = true;
            break;
        }
        const double bc1 = 1.0 - std::pow(beta1, it);
        const double bc2 = 1.0 - std::pow(beta2, it);
        for (std::size_t c = 0; c <= d; ++c) {
            m[c] = beta1 * m[c] + (1.0 - beta1) * grad[c];
            v[c] = beta2 * v[c] + (1.0 - beta2) * grad[c] * grad[c];
            double* target = c < d ? &model.weights[c] : &model.intercept;
            *target -= lr * (m[c] / bc1) / (std::sqrt(v[c] / bc2) + eps);
        }
    }

    // perfect separation: every sample on the correct side of the boundary
    bool separated = true;
    for (std::size_t r = 0; r < rows.size() && separated; ++r) {
        const double s = model.decision(rows[r]);
        separated = (y[r] == 1) == (s > 0.0);
    }
    model.separation_flag = separated;
    return model;
}

inline LinearModel fit_logistic(const FeatureTable& table, int max_iter = 2000,
                                double tolerance = 1e-6) {
    std::vector<std::vector<double>> rows(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        rows[r].assign(table.row(r), table.row(r) + table.n_cols());
    }
    return fit_logistic_raw(rows, table.labels, max_iter, tolerance);
}

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["format_version"] = 1;
    nlohmann::json cfg;
    cfg["layer_widths"] = net.config.layer_widths;
    cfg["activations"] = nlohmann::json::array();
    for (Activation a : net.config.activations) cfg["activations"].push_back(to_string(a));
    cfg["dropout_rates"] = net.config.dropout_rates;
    cfg["learning_rate"] = net.config.learning_rate;
    cfg["epochs"] = net.config.epochs;
    cfg["batch_size"] = net.config.batch_size;
    cfg["seed"] = net.config.seed;
    j["config"] = cfg;
    j["layers"] = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        j["layers"].push_back({{"n_in", l.n_in},
                               {"n_out", l.n_out},
                               {"weights", l.weights},
                               {"biases", l.biases}});
    }
    return j;
}

inline Network network_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1) throw ConfigError("unsupported network format version");
    Network net;
    const auto& cfg = j.at("config");
    net.config.layer_widths = cfg.at("layer_widths").get<std::vector<std::size_t>>();
    for (const auto& a : cfg.at("activations")) {
        net.config.activations.push_back(activation_from_string(a.get<std::string>()));
    }
    net.config.dropout_rates = cfg.at("dropout_rates").get<std::vector<double>>();
    net.config.learning_rate = cfg.at("learning_rate").get<double>();
    net.config.epochs = cfg.at("epochs").get<int>();
    net.config.batch_size = cfg.at("batch_size").get<std::size_t>();
    net.config.seed = cfg.at("seed").get<std::uint64_t>();
    net.config.validate();
    for (const auto& lj : j.at("layers")) {
        Layer l;
        l.n_in = lj.at("n_in").get<std::size_t>();
        l.n_out = lj.at("n_out").get<std::size_t>();
        l.weights = lj.at("weights").get<std::vector<double>>();
        l.biases = lj.at("biases").get<std::vector<double>>();
        if (l.weights.size() != l.n_in * l.n_out || l.biases.size() != l.n_out) {
            throw ShapeError("layer shape mismatch in serialized network");
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

} // namespace churnkit
