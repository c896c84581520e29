#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/matrix.hpp"
#include "cgnn/rng.hpp"

namespace cgnn {

struct AugmentConfig {
    double edge_drop_prob = 0.2;
    double attr_mask_prob = 0.2;

    void validate() const {
        if (!(edge_drop_prob >= 0 && edge_drop_prob <= 1)) throw ContractError("edge drop probability outside [0, 1]");
        if (!(attr_mask_prob >= 0 && attr_mask_prob <= 1)) throw ContractError("attribute mask probability outside [0, 1]");
    }
};

/// Removes each undirected edge independently with probability p; both
/// directions of a dropped edge go together.
inline Graph drop_edges(const Graph& g, double p, Rng& rng) {
    if (!(p >= 0 && p <= 1)) throw ContractError("drop_edges: probability outside [0, 1]");
    std::bernoulli_distribution drop(p);
    std::vector<Edge> kept;
    for (const auto& e : g.undirected_edges()) {
        if (!drop(rng)) kept.push_back(e);
    }
    return Graph::from_edges(g.num_nodes(), kept);
}

/// Zeroes whole rows, each selected independently with probability p.
template <class T>
Matrix<T> mask_attributes(const Matrix<T>& x, double p, Rng& rng) {
    if (!(p >= 0 && p <= 1)) throw ContractError("mask_attributes: probability outside [0, 1]");
    std::bernoulli_distribution mask(p);
    Matrix<T> out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        if (mask(rng)) {
            for (auto& v : out.row(i)) v = T(0);
        }
    }
    return out;
}

template <class T>
struct GraphView {
    Graph graph;
    Matrix<T> attributes;
};

/// Two independent augmented views. One draw from `rng` seeds four
/// substreams (view x {edges, attributes}).
template <class T>
std::pair<GraphView<T>, GraphView<T>> make_views(const Graph& g, const Matrix<T>& x, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::uint64_t base = rng();
    auto view = [&](std::uint64_t v) {
        auto edge_rng = make_rng(base, 2 * v);
        auto attr_rng = make_rng(base, 2 * v + 1);
        return GraphView<T>{drop_edges(g, cfg.edge_drop_prob, edge_rng),
                            mask_attributes(x, cfg.attr_mask_prob, attr_rng)};
    };
    auto first = view(0);
    auto second = view(1);
    return {std::move(first), std::move(second)};
}

}  // namespace cgnn
