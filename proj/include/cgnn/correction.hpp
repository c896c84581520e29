#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/matrix.hpp"

namespace cgnn {

struct CorrectionConfig {
    double gamma = 0.8;  // cosine-similarity threshold
    double omega = 0.8;  // consistency-score threshold

    void validate() const {
        if (!(gamma > -1 && gamma <= 1)) throw ContractError("gamma must lie in (-1, 1]");
        if (!(omega >= 0 && omega <= 1)) throw ContractError("omega must lie in [0, 1]");
    }
};

enum class Verdict { Kept, Relabeled, Skipped };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Kept: return "kept";
        case Verdict::Relabeled: return "relabeled";
        case Verdict::Skipped: return "skipped";
    }
    return "?";
}

struct CorrectionRecord {
    NodeId node = 0;
    OptLabel majority;             // c_i
    std::optional<double> score;   // a_i
    Verdict verdict = Verdict::Skipped;
    ClassId old_label = 0;
    ClassId new_label = 0;
};

/// Lowest index among the maxima of a row.
template <class T>
ClassId argmax_row(std::span<const T> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return static_cast<ClassId>(best);
}

/// y*_j = working label on train nodes, argmax of Q elsewhere (also written
/// to labels.pseudo).
template <class T>
std::vector<ClassId> effective_labels(LabelStore& labels, const Matrix<T>& q) {
    if (q.rows() != labels.size()) throw ShapeError("effective_labels: prediction rows differ from node count");
    std::vector<ClassId> ystar(labels.size());
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels.train_mask[j]) {
            ystar[j] = *labels.working[j];
            labels.pseudo[j].reset();
        } else {
            ystar[j] = argmax_row(q.row(j));
            labels.pseudo[j] = ystar[j];
        }
    }
    return ystar;
}

/// Most frequent y* among N(i), smallest class id on ties; nullopt when isolated.
inline OptLabel majority_label(NodeId i, const Graph& g, std::span<const ClassId> ystar) {
    auto nb = g.neighbors(i);
    if (nb.empty()) return std::nullopt;
    std::vector<std::size_t> counts;
    for (NodeId j : nb) {
        const auto c = static_cast<std::size_t>(ystar[j]);
        if (c >= counts.size()) counts.resize(c + 1, 0);
        ++counts[c];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[best]) best = c;
    }
    return static_cast<ClassId>(best);
}

/// Copy of h with unit-length rows, in double.
template <class T>
Matrix<double> normalize_rows(const Matrix<T>& h) {
    Matrix<double> out(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        double s = 0;
        for (T v : h.row(i)) s += static_cast<double>(v) * v;
        if (!(s > 0)) throw NumericError("embedding row " + std::to_string(i) + " has zero norm");
        const double norm = std::sqrt(s);
        for (std::size_t j = 0; j < h.cols(); ++j) out(i, j) = h(i, j) / norm;
    }
    return out;
}

/// Among neighbors with y* = c, the fraction whose cosine similarity to node i
/// exceeds gamma. `h` must have unit rows.
inline double similarity_consistency(NodeId i, OptLabel c, const Graph& g, const Matrix<double>& h,
                                     std::span<const ClassId> ystar, double gamma) {
    if (!c) throw ContractError("similarity_consistency: majority label undefined for node " + std::to_string(i));
    std::size_t same = 0, similar = 0;
    auto hi = h.row(i);
    for (NodeId j : g.neighbors(i)) {
        if (ystar[j] != *c) continue;
        ++same;
        double dot = 0;
        auto hj = h.row(j);
        for (std::size_t k = 0; k < hi.size(); ++k) dot += hi[k] * hj[k];
        if (dot > gamma) ++similar;
    }
    if (same == 0) throw ContractError("similarity_consistency: no neighbor of node " + std::to_string(i) + " carries the class");
    return static_cast<double>(similar) / static_cast<double>(same);
}

struct CorrectionResult {
    LabelStore labels;
    std::vector<CorrectionRecord> records;
    std::size_t relabeled = 0;
};

/// One correction round over the train nodes. Scores are computed against the
/// incoming working labels, then all relabels are committed together:
/// working_i <- c_i  iff  c_i defined, c_i != working_i and a_i > omega.
/// `h` is the raw clean-graph embedding; rows are normalized here.
template <class T, class U>
CorrectionResult correct_labels(LabelStore labels, const Graph& g, const Matrix<T>& h, const Matrix<U>& q,
                                const CorrectionConfig& cfg) {
    cfg.validate();
    if (h.rows() != g.num_nodes() || labels.size() != g.num_nodes()) {
        throw ShapeError("correct_labels: graph, embeddings and labels disagree in size");
    }
    const auto hn = normalize_rows(h);
    const auto ystar = effective_labels(labels, q);

    CorrectionResult res;
    std::vector<std::pair<NodeId, ClassId>> commits;
    for (NodeId i : labels.train_nodes()) {
        CorrectionRecord rec;
        rec.node = i;
        rec.old_label = rec.new_label = *labels.working[i];
        rec.majority = majority_label(i, g, ystar);
        if (!rec.majority) {
            rec.verdict = Verdict::Skipped;
        } else {
            rec.score = similarity_consistency(i, rec.majority, g, hn, ystar, cfg.gamma);
            if (*rec.majority != rec.old_label && *rec.score > cfg.omega) {
                rec.verdict = Verdict::Relabeled;
                rec.new_label = *rec.majority;
                commits.emplace_back(i, rec.new_label);
            } else {
                rec.verdict = Verdict::Kept;
            }
        }
        res.records.push_back(rec);
    }
    for (const auto& [i, c] : commits) labels.working[i] = c;
    res.relabeled = commits.size();
    res.labels = std::move(labels);
    return res;
}

}  // namespace cgnn
