#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/rng.hpp"

namespace cgnn {

enum class NoiseKind { None, Uniform, Pair };

inline const char* to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::None: return "none";
        case NoiseKind::Uniform: return "uniform";
        case NoiseKind::Pair: return "pair";
    }
    return "?";
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double rate = 0.0;
    /// class -> partner class for pair noise; empty means cyclic successor.
    std::vector<ClassId> pair_map;
    std::uint64_t seed = 0;
};

/// c -> (c + 1) mod C.
inline std::vector<ClassId> cyclic_pair_map(std::size_t num_classes) {
    std::vector<ClassId> m(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) m[c] = static_cast<ClassId>((c + 1) % num_classes);
    return m;
}

inline void validate_pair_map(std::span<const ClassId> pair_map, std::size_t num_classes) {
    if (pair_map.size() != num_classes) throw ContractError("pair map must list one partner per class");
    std::vector<bool> hit(num_classes, false);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const ClassId t = pair_map[c];
        if (t < 0 || static_cast<std::size_t>(t) >= num_classes) throw ContractError("pair map target out of range");
        if (static_cast<std::size_t>(t) == c) throw ContractError("pair map has a fixed point at class " + std::to_string(c));
        if (hit[t]) throw ContractError("pair map is not a bijection");
        hit[t] = true;
    }
}

namespace detail {
inline void check_noise_inputs(const LabelStore& labels, double p) {
    if (!(p >= 0 && p <= 1)) throw ContractError("noise rate outside [0, 1]");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.train_mask[i] && !labels.clean[i]) {
            throw ContractError("train node " + std::to_string(i) + " has no clean label to corrupt");
        }
    }
}
}  // namespace detail

/// Each train node, with probability p, gets a label drawn uniformly from the
/// C - 1 classes other than its clean one; otherwise its clean label.
inline LabelStore inject_uniform(LabelStore labels, double p, Rng& rng) {
    if (labels.num_classes < 2) throw ContractError("uniform noise needs at least two classes");
    detail::check_noise_inputs(labels, p);
    std::bernoulli_distribution flip(p);
    std::uniform_int_distribution<ClassId> other(0, static_cast<ClassId>(labels.num_classes) - 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels.train_mask[i]) continue;
        const ClassId truth = *labels.clean[i];
        ClassId y = truth;
        if (flip(rng)) {
            const ClassId r = other(rng);
            y = r < truth ? r : r + 1;
        }
        labels.observed[i] = y;
    }
    labels.working = labels.observed;
    return labels;
}

/// Each train node, with probability p, gets pair_map[clean]; otherwise its clean label.
inline LabelStore inject_pair(LabelStore labels, double p, std::span<const ClassId> pair_map, Rng& rng) {
    std::vector<ClassId> cyclic;
    if (pair_map.empty()) {
        cyclic = cyclic_pair_map(labels.num_classes);
        pair_map = cyclic;
    }
    validate_pair_map(pair_map, labels.num_classes);
    detail::check_noise_inputs(labels, p);
    std::bernoulli_distribution flip(p);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels.train_mask[i]) continue;
        const ClassId truth = *labels.clean[i];
        labels.observed[i] = flip(rng) ? pair_map[truth] : truth;
    }
    labels.working = labels.observed;
    return labels;
}

/// Dispatches on spec.kind with an rng derived from spec.seed.
inline LabelStore inject_noise(LabelStore labels, const NoiseSpec& spec) {
    auto rng = make_rng(spec.seed, stream::kNoise);
    switch (spec.kind) {
        case NoiseKind::None: return labels;
        case NoiseKind::Uniform: return inject_uniform(std::move(labels), spec.rate, rng);
        case NoiseKind::Pair: return inject_pair(std::move(labels), spec.rate, spec.pair_map, rng);
    }
    return labels;
}

/// Planted-partition generator settings.
struct SynthSpec {
    std::size_t num_nodes = 400;
    std::size_t num_classes = 4;
    double p_in = 0.08;
    double p_out = 0.01;
    std::size_t dim = 16;
    double attr_signal = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_nodes == 0 || num_classes == 0 || dim == 0) throw ContractError("synthetic sizes must be positive");
        if (num_classes > num_nodes) throw ContractError("more classes than nodes");
        if (!(p_in >= 0 && p_in <= 1 && p_out >= 0 && p_out <= 1)) throw ContractError("edge probabilities outside [0, 1]");
        if (!(p_in > p_out)) throw ContractError("p_in must exceed p_out");
        if (!(attr_signal >= 0)) throw ContractError("attr_signal must be non-negative");
    }
};

/// Stochastic block model. Node i belongs to block i mod C; each pair is linked
/// with p_in inside a block and p_out across. Attributes are
/// attr_signal * e_(c mod d) plus standard normal noise. Only clean labels are set.
inline Dataset gen_synthetic(const SynthSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_nodes;
    auto block = [&](std::size_t i) { return static_cast<ClassId>(i % spec.num_classes); };

    auto edge_rng = make_rng(spec.seed, stream::kSynthEdges);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double p = block(i) == block(j) ? spec.p_in : spec.p_out;
            if (u(edge_rng) < p) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }

    Dataset ds;
    ds.graph = Graph::from_edges(n, edges);
    auto attr_rng = make_rng(spec.seed, stream::kSynthAttrs);
    std::normal_distribution<double> noise(0.0, 1.0);
    ds.attributes = AttributeMatrix(n, spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = ds.attributes.row(i);
        for (auto& v : row) v = static_cast<float>(noise(attr_rng));
        row[static_cast<std::size_t>(block(i)) % spec.dim] += static_cast<float>(spec.attr_signal);
    }
    ds.labels = LabelStore(n, spec.num_classes);
    for (std::size_t i = 0; i < n; ++i) ds.labels.clean[i] = block(i);
    return ds;
}

}  // namespace cgnn
