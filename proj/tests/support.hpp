#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cgnn/graph.hpp"
#include "cgnn/matrix.hpp"
#include "cgnn/rng.hpp"

namespace testing_support {

using namespace cgnn;

/// Erdos-Renyi edge list, i < j.
inline std::vector<Edge> random_edges(std::size_t n, double p, Rng& rng) {
    std::bernoulli_distribution coin(p);
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (coin(rng)) out.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        }
    }
    return out;
}

inline Graph random_graph(std::size_t n, double p, Rng& rng) {
    auto e = random_edges(n, p, rng);
    return Graph::from_edges(n, e);
}

template <class T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix<T> m(r, c);
    for (auto& v : m.values()) v = static_cast<T>(u(rng));
    return m;
}

/// Entries with magnitude in [0.1, 1] and random sign; keeps inputs off relu kinks.
template <class T>
Matrix<T> offzero_matrix(std::size_t r, std::size_t c, Rng& rng) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    Matrix<T> m(r, c);
    for (auto& v : m.values()) v = static_cast<T>(sign(rng) ? u(rng) : -u(rng));
    return m;
}

inline std::vector<std::vector<bool>> dense_adjacency(const Graph& g) {
    std::vector<std::vector<bool>> a(g.num_nodes(), std::vector<bool>(g.num_nodes(), false));
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        for (NodeId j : g.neighbors(static_cast<NodeId>(i))) a[i][j] = true;
    }
    return a;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cgnn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support
