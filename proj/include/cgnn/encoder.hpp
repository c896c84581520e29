#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

struct EncoderConfig {
    std::size_t num_layers = 3;
    std::size_t hidden_dim = 256;
    std::size_t input_dim = 0;
    /// Width of the last message-passing layer; 0 means hidden_dim.
    std::size_t embed_dim = 0;

    std::size_t output_dim() const noexcept { return embed_dim ? embed_dim : hidden_dim; }

    void validate() const {
        if (num_layers < 1) throw ContractError("encoder needs at least one layer");
        if (hidden_dim == 0 || input_dim == 0) throw ContractError("encoder dimensions must be positive");
    }
};

/// Trainable state: K message-passing layers plus a two-layer MLP head.
/// Weights are in_dim x out_dim, biases 1 x out_dim.
template <class T>
struct ModelParams {
    std::vector<Tensor<T>> layer_weights;
    std::vector<Tensor<T>> layer_biases;
    std::vector<Tensor<T>> head_weights;
    std::vector<Tensor<T>> head_biases;

    std::size_t num_layers() const noexcept { return layer_weights.size(); }

    /// Checkpoint names: enc.k.<idx>.{w,b}, head.<idx>.{w,b}.
    std::vector<std::pair<std::string, Tensor<T>>> named() const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (std::size_t k = 0; k < layer_weights.size(); ++k) {
            out.emplace_back("enc.k." + std::to_string(k) + ".w", layer_weights[k]);
            out.emplace_back("enc.k." + std::to_string(k) + ".b", layer_biases[k]);
        }
        for (std::size_t k = 0; k < head_weights.size(); ++k) {
            out.emplace_back("head." + std::to_string(k) + ".w", head_weights[k]);
            out.emplace_back("head." + std::to_string(k) + ".b", head_biases[k]);
        }
        return out;
    }

    std::vector<Tensor<T>> all() const {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named()) out.push_back(t);
        return out;
    }

    /// Deep copy (fresh storage, same values).
    ModelParams clone() const {
        auto copy_all = [](const std::vector<Tensor<T>>& v) {
            std::vector<Tensor<T>> out;
            for (const auto& t : v) out.push_back(Tensor<T>::parameter(t.value()));
            return out;
        };
        return {copy_all(layer_weights), copy_all(layer_biases), copy_all(head_weights), copy_all(head_biases)};
    }

    void zero_grad() {
        for (auto& t : all()) t.zero_grad();
    }
};

namespace detail {

template <class T>
Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix<T> w(fan_in, fan_out);
    for (auto& v : w.values()) v = static_cast<T>(u(rng));
    return Tensor<T>::parameter(std::move(w));
}

template <class T>
Tensor<T> bias(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix<T> b(1, fan_out);
    for (auto& v : b.values()) v = static_cast<T>(u(rng));
    return Tensor<T>::parameter(std::move(b));
}

}  // namespace detail

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases uniform in +-1/sqrt(fan_in).
template <class T>
ModelParams<T> init_params(const EncoderConfig& cfg, std::size_t num_classes, Rng& rng) {
    cfg.validate();
    if (num_classes == 0) throw ContractError("model needs at least one class");
    ModelParams<T> p;
    std::size_t in = cfg.input_dim;
    for (std::size_t k = 0; k < cfg.num_layers; ++k) {
        const std::size_t out = k + 1 == cfg.num_layers ? cfg.output_dim() : cfg.hidden_dim;
        p.layer_weights.push_back(detail::glorot<T>(in, out, rng));
        p.layer_biases.push_back(detail::bias<T>(in, out, rng));
        in = out;
    }
    const std::size_t e = cfg.output_dim();
    p.head_weights.push_back(detail::glorot<T>(e, e, rng));
    p.head_biases.push_back(detail::bias<T>(e, e, rng));
    p.head_weights.push_back(detail::glorot<T>(e, num_classes, rng));
    p.head_biases.push_back(detail::bias<T>(e, num_classes, rng));
    return p;
}

/// K rounds of message passing. Per layer:
///   p_i = mean_{j in N(i)} h_j       (0 for isolated nodes)
///   h_i = relu(((h_i + p_i) / 2) W + b)
/// with no relu after the last layer. Returns the N x embed_dim final states.
template <class T>
Tensor<T> encode(Tape<T>& tape, const Graph& graph, const Tensor<T>& x, const ModelParams<T>& params) {
    if (params.num_layers() == 0) throw ContractError("encode: empty model");
    if (x.rows() != graph.num_nodes()) {
        throw ShapeError("encode: " + std::to_string(x.rows()) + " attribute rows for " +
                         std::to_string(graph.num_nodes()) + " nodes");
    }
    if (x.cols() != params.layer_weights.front().rows()) {
        throw ShapeError("encode: attribute dim " + std::to_string(x.cols()) + " but model expects " +
                         std::to_string(params.layer_weights.front().rows()));
    }
    Tensor<T> h = x;
    for (std::size_t k = 0; k < params.num_layers(); ++k) {
        auto p = tape.neighbor_mean(graph, h);
        auto combined = tape.scale(tape.add(h, p), T(0.5));
        h = tape.add(tape.matmul(combined, params.layer_weights[k]), params.layer_biases[k]);
        if (k + 1 < params.num_layers()) h = tape.relu(h);
    }
    return h;
}

template <class T>
Tensor<T> encode(Tape<T>& tape, const Graph& graph, const Matrix<T>& x, const ModelParams<T>& params) {
    return encode(tape, graph, Tensor<T>::constant(x), params);
}

/// MLP head: relu(h W0 + b0) W1 + b1, then row softmax.
template <class T>
Tensor<T> predict(Tape<T>& tape, const Tensor<T>& h, const ModelParams<T>& params) {
    if (params.head_weights.size() != 2) throw ContractError("predict: head must have two layers");
    if (h.cols() != params.head_weights[0].rows()) {
        throw ShapeError("predict: embedding width " + std::to_string(h.cols()) + " but head expects " +
                         std::to_string(params.head_weights[0].rows()));
    }
    auto z = tape.relu(tape.add(tape.matmul(h, params.head_weights[0]), params.head_biases[0]));
    auto logits = tape.add(tape.matmul(z, params.head_weights[1]), params.head_biases[1]);
    return tape.softmax_rows(logits);
}

}  // namespace cgnn
