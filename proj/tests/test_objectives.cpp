#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cgnn/augmentation.hpp"
#include "cgnn/encoder.hpp"
#include "cgnn/objectives.hpp"
#include "oracles.hpp"

using namespace cgnn;
using namespace testing_support;
using namespace oracles;

namespace {

double contrastive(const Matrix<double>& h1, const Matrix<double>& h2, double tau = 0.5) {
    Tape<double> tape(false);
    return contrastive_loss(tape, Tensor<double>::constant(h1), Tensor<double>::constant(h2), tau).item();
}

double pair(NodeId i, const Matrix<double>& h1, const Matrix<double>& h2, double tau = 0.5) {
    Tape<double> tape(false);
    return ntxent_pair(tape, i, Tensor<double>::constant(h1), Tensor<double>::constant(h2), tau).item();
}

Matrix<double> unit_rows(std::size_t n, std::size_t e, Rng& rng) {
    auto m = offzero_matrix<double>(n, e, rng);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (double v : m.row(i)) s += v * v;
        for (double& v : m.row(i)) v /= std::sqrt(s);
    }
    return m;
}

Matrix<double> repeated_row(std::size_t n, std::vector<double> row) {
    Matrix<double> m(n, row.size());
    for (std::size_t i = 0; i < n; ++i) std::copy(row.begin(), row.end(), m.row(i).begin());
    return m;
}

}  // namespace

TEST(NtXent, IdenticalUnitRowsGiveLogN) {
    for (std::size_t n = 1; n <= 8; ++n) {
        auto h = repeated_row(n, {0.6, 0.0, 0.8});
        for (NodeId i = 0; i < static_cast<NodeId>(n); ++i) EXPECT_NEAR(pair(i, h, h), std::log(n), 1e-12);
        EXPECT_NEAR(contrastive(h, h), std::log(n), 1e-12);
    }
}

TEST(NtXent, SingleNodeIsZero) {
    auto rng = make_rng(0);
    auto a = random_matrix<double>(1, 3, rng), b = random_matrix<double>(1, 3, rng);
    EXPECT_NEAR(pair(0, a, b), 0.0, 1e-15);
    EXPECT_NEAR(contrastive(a, b), 0.0, 1e-15);
}

TEST(NtXent, PairMatchesScalarOracle) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rng = make_rng(seed);
        auto h1 = unit_rows(4, 3, rng), h2 = unit_rows(4, 3, rng);
        for (NodeId i = 0; i < 4; ++i) EXPECT_NEAR(pair(i, h1, h2), oracle_pair(i, h1, h2, 0.5), 1e-12);
    }
}

TEST(Contrastive, MatchesScalarOracleOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        auto rng = make_rng(seed, 1);
        const auto n = 1 + seed % 8, e = 1 + (seed / 8) % 4;
        auto h1 = offzero_matrix<double>(n, e, rng), h2 = offzero_matrix<double>(n, e, rng);
        const double tau = seed % 3 == 0 ? 0.5 : 0.1 + 0.01 * static_cast<double>(seed % 50);
        EXPECT_NEAR(contrastive(h1, h2, tau), oracle_contrastive(h1, h2, tau), 1e-10) << "seed " << seed;
    }
}

TEST(Contrastive, SixNodeOracleAndSymmetry) {
    auto rng = make_rng(6);
    auto h1 = random_matrix<double>(6, 5, rng), h2 = random_matrix<double>(6, 5, rng);
    EXPECT_NEAR(contrastive(h1, h2), oracle_contrastive(h1, h2, 0.5), 1e-12);
    EXPECT_NEAR(contrastive(h1, h2), contrastive(h2, h1), 1e-12);
}

TEST(Contrastive, NonNegativeAndScaleInvariant) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rng = make_rng(seed, 2);
        auto h1 = offzero_matrix<double>(7, 4, rng), h2 = offzero_matrix<double>(7, 4, rng);
        const double base = contrastive(h1, h2);
        for (NodeId i = 0; i < 7; ++i) EXPECT_GE(pair(i, h1, h2), 0.0);
        auto scaled = h1;
        std::uniform_real_distribution<double> u(0.1, 10);
        for (std::size_t i = 0; i < scaled.rows(); ++i) {
            const double s = u(rng);
            for (double& v : scaled.row(i)) v *= s;
        }
        EXPECT_NEAR(contrastive(scaled, h2), base, 1e-12);
    }
}

TEST(Contrastive, Errors) {
    Matrix<double> z(3, 2);
    auto rng = make_rng(1);
    auto h = random_matrix<double>(3, 2, rng);
    EXPECT_THROW(contrastive(z, h), NumericError);
    EXPECT_THROW(pair(0, h, z), NumericError);
    EXPECT_THROW(contrastive(h, random_matrix<double>(4, 2, rng)), ShapeError);
    EXPECT_THROW(contrastive(h, h, 0.0), ContractError);
}

TEST(Contrastive, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_rng(seed, 3);
        std::vector<Tensor<double>> in{Tensor<double>::parameter(offzero_matrix<double>(5, 3, rng)),
                                       Tensor<double>::parameter(offzero_matrix<double>(5, 3, rng))};
        auto f = [](Tape<double>& t, std::span<const Tensor<double>> x) { return contrastive_loss(t, x[0], x[1], 0.5); };
        EXPECT_LT(grad_check<double>(f, in, 1e-5, 1e-4).max_rel_error, 1e-4);
        auto g = [](Tape<double>& t, std::span<const Tensor<double>> x) { return ntxent_pair(t, 2, x[0], x[1], 0.5); };
        EXPECT_LT(grad_check<double>(g, in, 1e-5, 1e-4).max_rel_error, 1e-4);
    }
}

namespace {

double supervised(const Matrix<double>& q, const std::vector<OptLabel>& y, const std::vector<bool>& mask,
                  std::size_t* clamps = nullptr) {
    Tape<double> tape(false);
    auto l = supervised_loss(tape, Tensor<double>::constant(q), std::span<const OptLabel>(y), mask).item();
    if (clamps) *clamps = tape.clamp_count();
    return l;
}

Matrix<double> random_distributions(std::size_t n, std::size_t c, Rng& rng) {
    auto m = random_matrix<double>(n, c, rng, 0.05, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = std::accumulate(m.row(i).begin(), m.row(i).end(), 0.0);
        for (double& v : m.row(i)) v /= s;
    }
    return m;
}

}  // namespace

TEST(Supervised, OneHotIsZeroUniformIsLogC) {
    Matrix<double> onehot(4, 3);
    std::vector<OptLabel> y{2, 0, 1, std::nullopt};
    for (int i = 0; i < 3; ++i) onehot(i, *y[i]) = 1;
    onehot(3, 0) = 1;
    EXPECT_DOUBLE_EQ(supervised(onehot, y, {true, true, true, false}), 0.0);
    Matrix<double> uniform(4, 3, 1.0 / 3);
    EXPECT_NEAR(supervised(uniform, y, {true, false, true, false}), std::log(3.0), 1e-15);
}

TEST(Supervised, MatchesScalarOracle) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rng = make_rng(seed);
        auto q = random_distributions(12, 3, rng);
        std::vector<OptLabel> y(12);
        std::vector<bool> mask(12, false);
        std::uniform_int_distribution<int> cls(0, 2);
        for (int k = 0; k < 8; ++k) {
            mask[k + 2] = true;
            y[k + 2] = cls(rng);
        }
        double ref = 0;
        for (int i = 0; i < 12; ++i) {
            if (mask[i]) ref -= std::log(q(i, *y[i]));
        }
        EXPECT_NEAR(supervised(q, y, mask), ref / 8, 1e-12);
    }
}

TEST(Supervised, PermutationInvariantOverMaskedNodes) {
    auto rng = make_rng(3);
    auto q = random_distributions(10, 4, rng);
    std::vector<OptLabel> y(10);
    for (int i = 0; i < 10; ++i) y[i] = i % 4;
    std::vector<bool> mask(10, true);
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix<double> pq(10, 4);
    std::vector<OptLabel> py(10);
    for (int i = 0; i < 10; ++i) {
        std::copy(q.row(i).begin(), q.row(i).end(), pq.row(perm[i]).begin());
        py[perm[i]] = y[i];
    }
    EXPECT_NEAR(supervised(q, y, mask), supervised(pq, py, mask), 1e-14);
}

TEST(Supervised, ZeroProbabilityIsClampedAndCounted) {
    Matrix<double> q(2, 2, std::vector<double>{1, 0, 0.5, 0.5});
    std::size_t clamps = 0;
    const double l = supervised(q, {1, 0}, {true, true}, &clamps);
    EXPECT_EQ(clamps, 1u);
    EXPECT_NEAR(l, (-std::log(1e-12) - std::log(0.5)) / 2, 1e-12);
}

TEST(Supervised, Errors) {
    Matrix<double> q(2, 2, 0.5);
    EXPECT_THROW(supervised(q, {0, 1}, {false, false}), ContractError);
    EXPECT_THROW(supervised(q, {0, std::nullopt}, {true, true}), ContractError);
    EXPECT_THROW(supervised(q, {0}, {true, true}), ShapeError);
}

TEST(Supervised, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rng = make_rng(seed, 4);
        std::vector<Tensor<double>> in{Tensor<double>::parameter(random_matrix<double>(8, 3, rng, -2, 2))};
        std::vector<OptLabel> y(8);
        std::vector<bool> mask(8);
        for (int i = 0; i < 8; ++i) {
            y[i] = i % 3;
            mask[i] = i % 2 == 0;
        }
        auto f = [&](Tape<double>& t, std::span<const Tensor<double>> x) {
            return supervised_loss(t, t.softmax_rows(x[0]), std::span<const OptLabel>(y), mask);
        };
        EXPECT_LT(grad_check<double>(f, in, 1e-5, 1e-4).max_rel_error, 1e-4);
    }
}

TEST(TotalLoss, Arithmetic) {
    Tape<double> tape(false);
    auto cl = Tensor<double>::scalar(0.7), sup = Tensor<double>::scalar(1.3);
    EXPECT_DOUBLE_EQ(total_loss(tape, cl, sup, LossConfig{0.5, 1.0}).item(), 2.0);
    EXPECT_DOUBLE_EQ(total_loss(tape, cl, sup, LossConfig{0.5, 0.0}).item(), 1.3);
    auto zero = Tensor<double>::scalar(0.0);
    EXPECT_DOUBLE_EQ(total_loss(tape, zero, zero, LossConfig{}).item(), 0.0);
    EXPECT_THROW((LossConfig{0.0, 1.0}.validate()), ContractError);
    EXPECT_THROW((LossConfig{0.5, -1.0}.validate()), ContractError);
}

TEST(CompositeLoss, FiniteDifferencesOnSixNodes) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto res = composite_gradient_check(seed);
        EXPECT_LT(res.max_rel_error, 1e-3) << "seed " << seed << " input " << res.worst_input;
    }
}
