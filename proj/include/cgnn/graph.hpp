#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/matrix.hpp"
#include "cgnn/rng.hpp"

namespace cgnn {

using NodeId = std::int32_t;
using ClassId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;
using OptLabel = std::optional<ClassId>;

/// Undirected graph in CSR form. Symmetric, sorted neighbor lists, no self-loops,
/// no duplicates. Immutable once built.
class Graph {
public:
    Graph() = default;

    /// Builds from an arbitrary edge list: symmetrizes, deduplicates and drops
    /// self-loops. `self_loops_dropped`, when given, receives the number of
    /// self-loop records discarded.
    static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges,
                            std::size_t* self_loops_dropped = nullptr) {
        if (num_nodes == 0) throw ValidationError("graph must have at least one node");
        std::size_t loops = 0;
        std::vector<Edge> directed;
        directed.reserve(edges.size() * 2);
        for (const auto& [u, v] : edges) {
            if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes ||
                static_cast<std::size_t>(v) >= num_nodes) {
                throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                      ") has a node id outside [0, " + std::to_string(num_nodes) +
                                      ")");
            }
            if (u == v) {
                ++loops;
                continue;
            }
            directed.emplace_back(u, v);
            directed.emplace_back(v, u);
        }
        std::sort(directed.begin(), directed.end());
        directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

        Graph g;
        g.offsets_.assign(num_nodes + 1, 0);
        g.neighbor_ids_.reserve(directed.size());
        for (const auto& [u, v] : directed) {
            ++g.offsets_[static_cast<std::size_t>(u) + 1];
            g.neighbor_ids_.push_back(v);
        }
        std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
        g.num_undirected_edges_ = directed.size() / 2;
        if (self_loops_dropped) *self_loops_dropped = loops;
        return g;
    }

    /// Adopts raw CSR arrays after checking every invariant.
    static Graph from_csr(std::vector<std::size_t> offsets, std::vector<NodeId> neighbor_ids) {
        Graph g;
        g.offsets_ = std::move(offsets);
        g.neighbor_ids_ = std::move(neighbor_ids);
        g.num_undirected_edges_ = g.neighbor_ids_.size() / 2;
        g.validate();
        return g;
    }

    std::size_t num_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t num_undirected_edges() const noexcept { return num_undirected_edges_; }
    std::span<const std::size_t> offsets() const noexcept { return offsets_; }
    std::span<const NodeId> neighbor_ids() const noexcept { return neighbor_ids_; }

    std::size_t degree(NodeId i) const {
        check_node(i);
        return offsets_[i + 1] - offsets_[i];
    }

    /// Sorted ascending.
    std::span<const NodeId> neighbors(NodeId i) const {
        check_node(i);
        return std::span<const NodeId>(neighbor_ids_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
    }

    bool has_edge(NodeId i, NodeId j) const {
        auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), j);
    }

    /// Each undirected edge once, as (i, j) with i < j, in CSR order.
    std::vector<Edge> undirected_edges() const {
        std::vector<Edge> out;
        out.reserve(num_undirected_edges_);
        for (std::size_t i = 0; i < num_nodes(); ++i) {
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                if (static_cast<std::size_t>(neighbor_ids_[k]) > i) {
                    out.emplace_back(static_cast<NodeId>(i), neighbor_ids_[k]);
                }
            }
        }
        return out;
    }

    void validate() const {
        const std::size_t n = num_nodes();
        if (n == 0) throw ValidationError("graph must have at least one node");
        if (offsets_.front() != 0 || offsets_.back() != neighbor_ids_.size()) {
            throw ValidationError("CSR offsets do not span the neighbor array");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (offsets_[i] > offsets_[i + 1]) throw ValidationError("CSR offsets decrease");
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                const NodeId j = neighbor_ids_[k];
                if (j < 0 || static_cast<std::size_t>(j) >= n) {
                    throw ValidationError("neighbor id out of range at node " + std::to_string(i));
                }
                if (static_cast<std::size_t>(j) == i) {
                    throw ValidationError("self-loop at node " + std::to_string(i));
                }
                if (k > offsets_[i] && neighbor_ids_[k - 1] >= j) {
                    throw ValidationError("neighbors of node " + std::to_string(i) +
                                          " are unsorted or duplicated");
                }
                if (!has_edge(j, static_cast<NodeId>(i))) {
                    throw ValidationError("asymmetric edge " + std::to_string(i) + " -> " +
                                          std::to_string(j));
                }
            }
        }
        if (neighbor_ids_.size() % 2 != 0) throw ValidationError("odd directed-entry count");
    }

    friend bool operator==(const Graph&, const Graph&) = default;

private:
    void check_node(NodeId i) const {
        if (i < 0 || static_cast<std::size_t>(i) >= num_nodes()) {
            throw IndexError("node id " + std::to_string(i) + " outside [0, " +
                             std::to_string(num_nodes()) + ")");
        }
    }

    std::vector<std::size_t> offsets_;
    std::vector<NodeId> neighbor_ids_;
    std::size_t num_undirected_edges_ = 0;
};

/// N x d node attributes, row i = x_i.
using AttributeMatrix = Matrix<float>;

inline void validate_attributes(const AttributeMatrix& x, std::size_t num_nodes) {
    if (x.cols() == 0) throw ValidationError("attribute dimension must be positive");
    if (x.rows() != num_nodes) {
        throw ValidationError("attribute matrix has " + std::to_string(x.rows()) +
                              " rows but the graph has " + std::to_string(num_nodes) + " nodes");
    }
    if (!x.all_finite()) throw ValidationError("attribute matrix contains non-finite entries");
}

/// Per-node label state. `observed`/`working` live exactly on the train mask;
/// `clean` is ground truth for evaluation and must never feed training.
struct LabelStore {
    std::size_t num_classes = 0;
    std::vector<OptLabel> observed;
    std::vector<OptLabel> working;
    std::vector<OptLabel> pseudo;
    std::vector<OptLabel> clean;
    std::vector<bool> train_mask;
    std::vector<bool> test_mask;

    LabelStore() = default;
    LabelStore(std::size_t n, std::size_t classes)
        : num_classes(classes), observed(n), working(n), pseudo(n), clean(n),
          train_mask(n, false), test_mask(n, false) {}

    std::size_t size() const noexcept { return train_mask.size(); }

    std::vector<NodeId> train_nodes() const { return mask_nodes(train_mask); }
    std::vector<NodeId> test_nodes() const { return mask_nodes(test_mask); }

    static std::vector<NodeId> mask_nodes(const std::vector<bool>& mask) {
        std::vector<NodeId> out;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) out.push_back(static_cast<NodeId>(i));
        }
        return out;
    }

    /// observed <- clean on train nodes, working <- observed, pseudo cleared.
    void reset_observed_from_clean() {
        for (std::size_t i = 0; i < size(); ++i) {
            observed[i] = train_mask[i] ? clean[i] : std::nullopt;
            if (train_mask[i] && !clean[i]) {
                throw ValidationError("train node " + std::to_string(i) + " has no clean label");
            }
        }
        working = observed;
        std::fill(pseudo.begin(), pseudo.end(), std::nullopt);
    }

    void validate() const {
        const std::size_t n = size();
        if (num_classes == 0) throw ValidationError("label store needs at least one class");
        if (observed.size() != n || working.size() != n || pseudo.size() != n ||
            clean.size() != n || test_mask.size() != n) {
            throw ValidationError("label store arrays disagree in length");
        }
        auto in_range = [&](const OptLabel& l) {
            return !l || (*l >= 0 && static_cast<std::size_t>(*l) < num_classes);
        };
        for (std::size_t i = 0; i < n; ++i) {
            const std::string at = " at node " + std::to_string(i);
            if (observed[i].has_value() != train_mask[i]) {
                throw ValidationError("observed label defined off the train mask" + at);
            }
            if (working[i].has_value() != train_mask[i]) {
                throw ValidationError("working label defined off the train mask" + at);
            }
            if (train_mask[i] && test_mask[i]) throw ValidationError("train and test masks overlap" + at);
            if (!in_range(observed[i]) || !in_range(working[i]) || !in_range(pseudo[i]) ||
                !in_range(clean[i])) {
                throw ValidationError("class id outside [0, " + std::to_string(num_classes) + ")" + at);
            }
        }
    }

    friend bool operator==(const LabelStore&, const LabelStore&) = default;
};

struct Dataset {
    Graph graph;
    AttributeMatrix attributes;
    LabelStore labels;
    /// Original class tokens in id order, when labels were strings.
    std::vector<std::string> class_names;

    std::size_t num_nodes() const noexcept { return graph.num_nodes(); }

    void validate() const {
        graph.validate();
        validate_attributes(attributes, graph.num_nodes());
        if (labels.size() != graph.num_nodes()) {
            throw ValidationError("label store size differs from node count");
        }
        labels.validate();
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitMasks {
    std::vector<bool> train;
    std::vector<bool> test;
};

/// Stratified random split over nodes that carry a clean label. The train set
/// has ceil(label_rate * N) nodes, allotted to classes proportionally (largest
/// remainder) with at least one per non-empty class; test is the remaining
/// labeled nodes.
inline SplitMasks make_split(std::span<const OptLabel> clean, std::size_t num_classes,
                             double label_rate, Rng& rng) {
    if (!(label_rate > 0.0 && label_rate < 1.0)) {
        throw ContractError("label rate must lie in (0, 1)");
    }
    const std::size_t n = clean.size();
    std::vector<std::vector<NodeId>> members(num_classes);
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!clean[i]) continue;
        members.at(static_cast<std::size_t>(*clean[i])).push_back(static_cast<NodeId>(i));
        ++labeled;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (members[c].empty()) {
            throw ValidationError("class " + std::to_string(c) + " has no members to stratify over");
        }
    }
    // Guard against 0.01 * 1000 landing a hair above 10.
    const auto target = static_cast<std::size_t>(std::ceil(label_rate * static_cast<double>(n) - 1e-9));
    if (target < num_classes) {
        throw ValidationError("label rate yields " + std::to_string(target) +
                              " train nodes, fewer than the " + std::to_string(num_classes) + " classes");
    }
    if (target > labeled) throw ValidationError("not enough labeled nodes for the requested rate");

    std::vector<std::size_t> quota(num_classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double exact = static_cast<double>(target) * static_cast<double>(members[c].size()) /
                             static_cast<double>(labeled);
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainders.emplace_back(exact - std::floor(exact), c);
        assigned += quota[c];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < target; ++k, ++assigned) ++quota[remainders[k].second];
    // Every class gets one; borrow from the largest quota.
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (quota[c] > 0) continue;
        auto donor = std::max_element(quota.begin(), quota.end()) - quota.begin();
        --quota[static_cast<std::size_t>(donor)];
        quota[c] = 1;
    }

    SplitMasks masks{std::vector<bool>(n, false), std::vector<bool>(n, false)};
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto pool = members[c];
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t take = std::min(quota[c], pool.size());
        for (std::size_t k = 0; k < take; ++k) masks.train[pool[k]] = true;
    }
    for (std::size_t i = 0; i < n; ++i) masks.test[i] = clean[i].has_value() && !masks.train[i];
    return masks;
}

/// Applies a split to a label store and resets observed/working from clean.
inline void apply_split(LabelStore& labels, const SplitMasks& masks) {
    if (masks.train.size() != labels.size() || masks.test.size() != labels.size()) {
        throw ValidationError("split masks do not match the label store size");
    }
    labels.train_mask = masks.train;
    labels.test_mask = masks.test;
    labels.reset_observed_from_clean();
}

}  // namespace cgnn
