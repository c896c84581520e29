#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

struct LossConfig {
    double temperature = 0.5;
    double contrastive_weight = 1.0;

    void validate() const {
        if (!(temperature > 0)) throw ContractError("loss temperature must be positive");
        if (!(contrastive_weight >= 0)) throw ContractError("contrastive weight must be non-negative");
    }
};

/// Cross-view NT-Xent term for node i:
///   -log( exp(sim(h1_i, h2_i)/tau) / sum_j exp(sim(h1_i, h2_j)/tau) )
/// with cosine similarity; the positive pair sits in the denominator.
template <class T>
Tensor<T> ntxent_pair(Tape<T>& tape, NodeId i, const Tensor<T>& h1, const Tensor<T>& h2, T tau) {
    if (h1.rows() != h2.rows() || h1.cols() != h2.cols()) throw ShapeError("ntxent_pair: view shapes differ");
    if (!(tau > 0)) throw ContractError("ntxent_pair: temperature must be positive");
    const NodeId row[] = {i};
    auto anchor = tape.gather_rows(tape.l2_normalize_rows(h1), row);
    auto sims = tape.scale(tape.matmul(anchor, tape.transpose(tape.l2_normalize_rows(h2))), T(1) / tau);
    const ClassId col[] = {i};
    return tape.scale(tape.pick(tape.log_softmax_rows(sims), col), T(-1));
}

/// (1 / 2N) sum_i [l(h1_i, h2_i) + l(h2_i, h1_i)].
template <class T>
Tensor<T> contrastive_loss(Tape<T>& tape, const Tensor<T>& h1, const Tensor<T>& h2, T tau) {
    if (h1.rows() != h2.rows() || h1.cols() != h2.cols()) throw ShapeError("contrastive_loss: view shapes differ");
    if (!(tau > 0)) throw ContractError("contrastive_loss: temperature must be positive");
    auto z1 = tape.l2_normalize_rows(h1);
    auto z2 = tape.l2_normalize_rows(h2);
    auto sims = tape.scale(tape.matmul(z1, tape.transpose(z2)), T(1) / tau);
    auto forward = tape.mean(tape.diagonal(tape.log_softmax_rows(sims)));
    auto reverse = tape.mean(tape.diagonal(tape.log_softmax_rows(tape.transpose(sims))));
    return tape.scale(tape.add(forward, reverse), T(-0.5));
}

/// Probability floor for the cross-entropy; clamped entries are counted by the tape.
inline constexpr double kProbFloor = 1e-12;

/// -(1/|mask|) sum_{i in mask} log Q[i, labels_i]. Consumes working labels, so
/// the corrected objective is the same call after relabeling.
template <class T>
Tensor<T> supervised_loss(Tape<T>& tape, const Tensor<T>& q, std::span<const OptLabel> labels,
                          const std::vector<bool>& mask) {
    if (labels.size() != q.rows() || mask.size() != q.rows()) {
        throw ShapeError("supervised_loss: label/mask length differs from prediction rows");
    }
    std::vector<ClassId> target(q.rows(), 0);
    bool any = false;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        if (!mask[i]) continue;
        if (!labels[i]) throw ContractError("supervised_loss: masked node " + std::to_string(i) + " has no label");
        target[i] = *labels[i];
        any = true;
    }
    if (!any) throw ContractError("supervised_loss: empty train mask");
    auto logp = tape.log(tape.pick(q, target), static_cast<T>(kProbFloor));
    return tape.scale(tape.masked_mean(logp, mask), T(-1));
}

/// contrastive_weight * L_CL + L_SUP.
template <class T>
Tensor<T> total_loss(Tape<T>& tape, const Tensor<T>& contrastive, const Tensor<T>& supervised, const LossConfig& cfg) {
    return tape.add(tape.scale(contrastive, static_cast<T>(cfg.contrastive_weight)), supervised);
}

}  // namespace cgnn
