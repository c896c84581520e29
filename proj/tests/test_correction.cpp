#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cgnn/correction.hpp"
#include "oracles.hpp"

using namespace cgnn;
using namespace testing_support;
using namespace oracles;

namespace {

Matrix<double> unit_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix<double> m(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (auto r : rows) {
        std::size_t j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return normalize_rows(m);
}

}  // namespace

TEST(EffectiveLabels, Examples) {
    LabelStore l(3, 5);
    l.clean = {4, 0, 0};
    l.train_mask = {true, false, false};
    l.reset_observed_from_clean();
    Matrix<double> q(3, 5);
    q(0, 1) = 1.0;
    q(1, 3) = 1.0;
    q(2, 1) = q(2, 4) = 0.5;
    auto y = effective_labels(l, q);
    EXPECT_EQ(y, (std::vector<ClassId>{4, 3, 1}));
    EXPECT_FALSE(l.pseudo[0].has_value());
    EXPECT_EQ(l.pseudo[1], 3);
    EXPECT_EQ(l.pseudo[2], 1);
    EXPECT_THROW(effective_labels(l, Matrix<double>(2, 5)), ShapeError);
}

TEST(MajorityLabel, Examples) {
    std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}};
    auto g = Graph::from_edges(5, e);
    std::vector<ClassId> y{0, 2, 5, 2, 1};
    EXPECT_EQ(majority_label(0, g, y), 2);
    EXPECT_FALSE(majority_label(4, g, y).has_value());
    y = {0, 3, 3, 1, 0};
    EXPECT_EQ(majority_label(0, g, y), 3);
    std::vector<Edge> e2{{0, 1}, {0, 2}};
    EXPECT_EQ(majority_label(0, Graph::from_edges(3, e2), std::vector<ClassId>{0, 4, 1}), 1);
}

TEST(MajorityLabel, CountingOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rng = make_rng(seed, 5);
        const std::size_t n = 4 + seed % 12;
        auto g = random_graph(n, 0.4, rng);
        std::uniform_int_distribution<ClassId> cls(0, 3);
        std::vector<ClassId> y(n);
        for (auto& v : y) v = cls(rng);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<int> hist(4, 0);
            for (NodeId j : g.neighbors(static_cast<NodeId>(i))) ++hist[y[j]];
            const auto m = majority_label(static_cast<NodeId>(i), g, y);
            if (g.degree(static_cast<NodeId>(i)) == 0) {
                EXPECT_FALSE(m.has_value());
                continue;
            }
            const auto expect = std::max_element(hist.begin(), hist.end()) - hist.begin();
            ASSERT_EQ(m, static_cast<ClassId>(expect)) << "seed " << seed << " node " << i;
        }
    }
}

TEST(SimilarityConsistency, Extremes) {
    std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}};
    auto g = Graph::from_edges(4, e);
    std::vector<ClassId> y{0, 1, 1, 2};
    auto same = unit_rows({{1, 0}, {1, 0}, {2, 0}, {0, 1}});
    EXPECT_DOUBLE_EQ(similarity_consistency(0, 1, g, same, y, 0.8), 1.0);
    auto apart = unit_rows({{1, 0}, {0, 1}, {-1, 1}, {1, 0}});
    EXPECT_DOUBLE_EQ(similarity_consistency(0, 1, g, apart, y, 0.8), 0.0);
    EXPECT_DOUBLE_EQ(similarity_consistency(0, 2, g, apart, y, 0.8), 1.0);
    EXPECT_THROW(similarity_consistency(0, std::nullopt, g, same, y, 0.8), ContractError);
}

TEST(SimilarityConsistency, DoubleLoopOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto in = random_instance(40, 3, seed, 0.2);
        const auto hn = normalize_rows(in.h);
        auto labels = in.labels;
        const auto y = effective_labels(labels, in.q);
        const auto adj = dense_adjacency(in.g);
        for (std::size_t i = 0; i < 40; ++i) {
            const auto id = static_cast<NodeId>(i);
            const auto c = majority_label(id, in.g, y);
            if (!c) continue;
            double same = 0, close = 0;
            for (std::size_t j = 0; j < 40; ++j) {
                if (!adj[i][j] || y[j] != *c) continue;
                same += 1;
                double dot = 0, ni = 0, nj = 0;
                for (std::size_t k = 0; k < in.h.cols(); ++k) {
                    dot += in.h(i, k) * in.h(j, k);
                    ni += in.h(i, k) * in.h(i, k);
                    nj += in.h(j, k) * in.h(j, k);
                }
                if (dot / std::sqrt(ni * nj) > 0.8) close += 1;
            }
            EXPECT_NEAR(similarity_consistency(id, c, in.g, hn, y, 0.8), close / same, 1e-9);
        }
    }
}

TEST(CorrectLabels, UnanimousNeighborsKeepLabel) {
    std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}};
    auto g = Graph::from_edges(4, e);
    LabelStore l(4, 2);
    l.clean = {1, 1, 1, 1};
    l.train_mask = {true, true, true, true};
    l.reset_observed_from_clean();
    auto h = unit_rows({{1, 0}, {1, 0.1}, {1, 0.2}, {1, -0.1}});
    auto res = correct_labels(l, g, h, Matrix<double>(4, 2), CorrectionConfig{});
    EXPECT_EQ(res.relabeled, 0u);
    EXPECT_EQ(res.records[0].verdict, Verdict::Kept);
    EXPECT_EQ(res.records[0].majority, 1);
    EXPECT_EQ(res.labels.working, l.working);
}

TEST(CorrectLabels, NoisyNodeAmongSimilarNeighborsIsRelabeled) {
    std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}};
    auto g = Graph::from_edges(4, e);
    LabelStore l(4, 2);
    l.clean = {1, 1, 1, 1};
    l.train_mask = {true, false, false, false};
    l.reset_observed_from_clean();
    l.observed[0] = l.working[0] = 0;
    Matrix<float> q(4, 2);
    for (std::size_t i = 1; i < 4; ++i) q(i, 1) = 1;
    const double s = 0.95, t = std::sqrt(1 - s * s);
    Matrix<float> h(4, 3);
    h(0, 0) = 1;
    h(1, 0) = h(2, 0) = h(3, 0) = static_cast<float>(s);
    h(1, 1) = static_cast<float>(t);
    h(2, 2) = static_cast<float>(t);
    h(3, 1) = static_cast<float>(-t);
    auto res = correct_labels(l, g, h, q, CorrectionConfig{0.8, 0.8});
    EXPECT_EQ(res.relabeled, 1u);
    EXPECT_EQ(res.records[0].verdict, Verdict::Relabeled);
    EXPECT_DOUBLE_EQ(*res.records[0].score, 1.0);
    EXPECT_EQ(res.records[0].old_label, 0);
    EXPECT_EQ(res.records[0].new_label, 1);
    EXPECT_EQ(res.labels.working[0], 1);
    EXPECT_EQ(res.labels.observed[0], 0);
}

TEST(CorrectLabels, IsolatedNodeSkipped) {
    LabelStore l(2, 2);
    l.clean = {0, 1};
    l.train_mask = {true, false};
    l.reset_observed_from_clean();
    auto res = correct_labels(l, Graph::from_edges(2, {}), unit_rows({{1, 0}, {0, 1}}), Matrix<double>(2, 2),
                              CorrectionConfig{});
    ASSERT_EQ(res.records.size(), 1u);
    EXPECT_EQ(res.records[0].verdict, Verdict::Skipped);
    EXPECT_FALSE(res.records[0].score.has_value());
}

TEST(CorrectLabels, StraightLineOracle) {
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto in = random_instance(60, 3, seed);
        const double gamma = 0.3 + 0.05 * static_cast<double>(seed % 10);
        const double omega = 0.4 + 0.05 * static_cast<double>(seed % 7);
        auto res = correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{gamma, omega});
        const auto want = oracle_pass(in, gamma, omega);
        ASSERT_EQ(res.labels.working, want.working) << "seed " << seed;
        for (const auto& r : res.records) {
            EXPECT_EQ(r.majority, want.majority[r.node]);
            ASSERT_EQ(r.score.has_value(), want.score[r.node].has_value());
            if (r.score) {
                EXPECT_NEAR(*r.score, *want.score[r.node], 1e-9);
            }
        }
        total += res.relabeled;
    }
    EXPECT_GT(total, 100u);
}

TEST(CorrectLabels, RecordInvariants) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto in = random_instance(60, 4, seed, 0.08);
        const CorrectionConfig cfg{0.4, 0.5};
        auto res = correct_labels(in.labels, in.g, in.h, in.q, cfg);
        auto ystar_store = in.labels;
        const auto y = effective_labels(ystar_store, in.q);
        EXPECT_EQ(res.labels.pseudo, ystar_store.pseudo);
        EXPECT_EQ(res.labels.observed, in.labels.observed);
        EXPECT_EQ(res.labels.clean, in.labels.clean);
        EXPECT_EQ(res.records.size(), in.labels.train_nodes().size());
        std::size_t relabeled = 0;
        for (const auto& r : res.records) {
            EXPECT_TRUE(in.labels.train_mask[r.node]);
            EXPECT_EQ(r.old_label, *in.labels.working[r.node]);
            EXPECT_EQ(res.labels.working[r.node], r.new_label);
            switch (r.verdict) {
                case Verdict::Relabeled: {
                    ++relabeled;
                    EXPECT_NE(r.old_label, r.new_label);
                    EXPECT_GT(*r.score, cfg.omega);
                    auto nb = in.g.neighbors(r.node);
                    EXPECT_TRUE(std::any_of(nb.begin(), nb.end(), [&](NodeId j) { return y[j] == r.new_label; }));
                    break;
                }
                case Verdict::Skipped:
                    EXPECT_EQ(in.g.degree(r.node), 0u);
                    EXPECT_EQ(r.old_label, r.new_label);
                    break;
                case Verdict::Kept:
                    EXPECT_EQ(r.old_label, r.new_label);
                    ASSERT_TRUE(r.score.has_value());
                    EXPECT_GE(*r.score, 0.0);
                    EXPECT_LE(*r.score, 1.0);
                    break;
            }
        }
        EXPECT_EQ(relabeled, res.relabeled);
        for (std::size_t i = 0; i < 60; ++i) {
            if (!in.labels.train_mask[i]) {
                EXPECT_FALSE(res.labels.working[i].has_value());
            }
        }
    }
}

TEST(CorrectLabels, OmegaOneDisablesRelabeling) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto in = random_instance(60, 3, seed);
        auto res = correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{-0.99, 1.0});
        EXPECT_EQ(res.relabeled, 0u);
        EXPECT_EQ(res.labels.working, in.labels.working);
    }
}

TEST(CorrectLabels, QuietPassStaysQuiet) {
    int quiet = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto in = random_instance(60, 3, seed);
        auto first = correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{0.9, 0.9});
        if (first.relabeled != 0) continue;
        ++quiet;
        auto second = correct_labels(first.labels, in.g, in.h, in.q, CorrectionConfig{0.9, 0.9});
        EXPECT_EQ(second.relabeled, 0u);
        EXPECT_EQ(second.labels.working, first.labels.working);
    }
    EXPECT_GT(quiet, 0);
}

TEST(CorrectLabels, MonotoneInThresholds) {
    const std::vector<double> gammas{-0.5, 0.0, 0.3, 0.5, 0.7, 0.9};
    const std::vector<double> omegas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto in = random_instance(60, 3, seed);
        std::vector<double> prev;
        for (double gamma : gammas) {
            auto res = correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{gamma, 0.5});
            std::vector<double> scores;
            for (const auto& r : res.records) scores.push_back(r.score.value_or(-1));
            for (std::size_t k = 0; k < prev.size(); ++k) EXPECT_LE(scores[k], prev[k]);
            prev = scores;
        }
        std::size_t last = SIZE_MAX;
        for (double omega : omegas) {
            auto res = correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{0.5, omega});
            EXPECT_LE(res.relabeled, last);
            last = res.relabeled;
        }
    }
}

TEST(CorrectLabels, Errors) {
    auto in = random_instance(10, 2, 0);
    EXPECT_THROW(correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{-1.0, 0.5}), ContractError);
    EXPECT_THROW(correct_labels(in.labels, in.g, in.h, in.q, CorrectionConfig{0.5, 1.1}), ContractError);
    EXPECT_THROW(correct_labels(in.labels, in.g, Matrix<double>(9, 4), in.q, CorrectionConfig{}), ShapeError);
    EXPECT_THROW(correct_labels(in.labels, in.g, Matrix<double>(10, 4), in.q, CorrectionConfig{}), NumericError);
}
