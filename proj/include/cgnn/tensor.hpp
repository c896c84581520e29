#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/matrix.hpp"

namespace cgnn {

/// Storage behind a Tensor handle. `grad` stays empty until something writes to it.
template <class T>
struct TensorNode {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;

    Matrix<T>& grad_buffer() {
        if (grad.empty()) grad = Matrix<T>(value.rows(), value.cols());
        return grad;
    }
};

/// Shared handle to a rank <= 2 array (vectors are 1 x n or n x 1, scalars 1 x 1).
/// Copies alias the same storage, the way parameters are shared between the
/// model and the optimizer.
template <class T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Matrix<T> value) { return make(std::move(value), false); }
    static Tensor parameter(Matrix<T> value) { return make(std::move(value), true); }
    static Tensor scalar(T v, bool requires_grad = false) { return make(Matrix<T>(1, 1, v), requires_grad); }

    explicit operator bool() const noexcept { return static_cast<bool>(node_); }

    std::size_t rows() const noexcept { return node_->value.rows(); }
    std::size_t cols() const noexcept { return node_->value.cols(); }
    std::size_t size() const noexcept { return node_->value.size(); }
    bool is_scalar() const noexcept { return rows() == 1 && cols() == 1; }
    bool requires_grad() const noexcept { return node_->requires_grad; }

    const Matrix<T>& value() const noexcept { return node_->value; }
    /// Direct write access, for optimizers and finite-difference probes.
    Matrix<T>& mutable_value() noexcept { return node_->value; }
    T operator()(std::size_t r, std::size_t c) const noexcept { return node_->value(r, c); }

    T item() const {
        if (!is_scalar()) throw ContractError("item() on a non-scalar tensor");
        return node_->value(0, 0);
    }

    bool has_grad() const noexcept { return !node_->grad.empty(); }
    /// Gradient buffer; zero-filled if nothing has been accumulated yet.
    const Matrix<T>& grad() const { return node_->grad_buffer(); }
    Matrix<T>& mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(T(0));
    }

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    static Tensor make(Matrix<T> value, bool requires_grad) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    std::shared_ptr<Node> node_;
};

/// Records executed ops in execution order (hence topological order) and
/// replays them backwards. One tape per forward pass; not shared across threads.
template <class T>
class Tape {
public:
    using Acc = double;
    using Mat = Matrix<T>;
    using Map = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using CMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    /// A non-recording tape evaluates forward values only (inference, probes).
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const noexcept { return entries_.size(); }
    bool recording() const noexcept { return recording_; }
    /// Number of entries clamped by log() with a positive floor.
    std::size_t clamp_count() const noexcept { return clamp_count_; }

    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
        if (a.cols() != b.rows()) {
            throw ShapeError("matmul: " + shape(a) + " x " + shape(b));
        }
        Mat out(a.rows(), b.cols());
        map(out).noalias() = cmap(a.value()) * cmap(b.value());
        return emit("matmul", std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()).noalias() += cmap(g) * cmap(bn->value).transpose();
            if (bn->requires_grad) map(bn->grad_buffer()).noalias() += cmap(an->value).transpose() * cmap(g);
        });
    }

    /// Elementwise sum. `b` may also be a 1 x cols row or rows x 1 column, broadcast over `a`.
    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
        const std::size_t r = a.rows(), c = a.cols();
        enum { Same, Row, Col } mode;
        if (b.rows() == r && b.cols() == c) mode = Same;
        else if (b.rows() == 1 && b.cols() == c) mode = Row;
        else if (b.cols() == 1 && b.rows() == r) mode = Col;
        else throw ShapeError("add: " + shape(a) + " + " + shape(b));

        Mat out = a.value();
        const Mat& bv = b.value();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                out(i, j) += mode == Same ? bv(i, j) : mode == Row ? bv(0, j) : bv(i, 0);
            }
        }
        return emit("add", std::move(out), {a, b}, [an = a.node(), bn = b.node(), mode, r, c](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()) += cmap(g);
            if (!bn->requires_grad) return;
            Mat& gb = bn->grad_buffer();
            if (mode == Same) {
                map(gb) += cmap(g);
            } else if (mode == Row) {
                for (std::size_t j = 0; j < c; ++j) {
                    Acc s = 0;
                    for (std::size_t i = 0; i < r; ++i) s += g(i, j);
                    gb(0, j) += static_cast<T>(s);
                }
            } else {
                for (std::size_t i = 0; i < r; ++i) {
                    Acc s = 0;
                    for (std::size_t j = 0; j < c; ++j) s += g(i, j);
                    gb(i, 0) += static_cast<T>(s);
                }
            }
        });
    }

    Tensor<T> scale(const Tensor<T>& a, T s) {
        Mat out = a.value();
        map(out) *= s;
        return emit("scale", std::move(out), {a}, [an = a.node(), s](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()) += s * cmap(g);
        });
    }

    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) {
            throw ShapeError("mul: " + shape(a) + " * " + shape(b));
        }
        Mat out(a.rows(), a.cols());
        map(out) = cmap(a.value()).cwiseProduct(cmap(b.value()));
        return emit("mul", std::move(out), {a, b}, [an = a.node(), bn = b.node()](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()) += cmap(g).cwiseProduct(cmap(bn->value));
            if (bn->requires_grad) map(bn->grad_buffer()) += cmap(g).cwiseProduct(cmap(an->value));
        });
    }

    Tensor<T> transpose(const Tensor<T>& a) {
        Mat out(a.cols(), a.rows());
        map(out) = cmap(a.value()).transpose();
        return emit("transpose", std::move(out), {a}, [an = a.node()](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()) += cmap(g).transpose();
        });
    }

    Tensor<T> relu(const Tensor<T>& a) {
        Mat out = a.value();
        for (auto& v : out.values()) v = v > T(0) ? v : T(0);
        return emit("relu", std::move(out), {a}, [an = a.node()](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) {
                if (an->value.data()[k] > T(0)) ga.data()[k] += g.data()[k];
            }
        });
    }

    Tensor<T> exp(const Tensor<T>& a) {
        Mat out = a.value();
        for (auto& v : out.values()) v = std::exp(v);
        auto t = emit("exp", std::move(out), {a}, nullptr);
        attach(t, [an = a.node(), on = t.node()](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()) += cmap(g).cwiseProduct(cmap(on->value));
        });
        return t;
    }

    /// Natural log. With floor > 0, inputs below floor are clamped to it (counted
    /// in clamp_count()) and pass no gradient.
    Tensor<T> log(const Tensor<T>& a, T floor = T(0)) {
        Mat out = a.value();
        std::vector<bool> clamped(out.size(), false);
        for (std::size_t k = 0; k < out.size(); ++k) {
            T& v = out.data()[k];
            if (floor > T(0) && v < floor) {
                v = floor;
                clamped[k] = true;
                ++clamp_count_;
            }
            v = std::log(v);
        }
        return emit("log", std::move(out), {a}, [an = a.node(), clamped = std::move(clamped)](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) {
                if (!clamped[k]) ga.data()[k] += g.data()[k] / an->value.data()[k];
            }
        });
    }

    Tensor<T> softmax_rows(const Tensor<T>& a) {
        Mat out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
            auto x = a.value().row(i);
            auto y = out.row(i);
            const T mx = *std::max_element(x.begin(), x.end());
            Acc s = 0;
            for (std::size_t j = 0; j < x.size(); ++j) s += std::exp(static_cast<Acc>(x[j] - mx));
            for (std::size_t j = 0; j < x.size(); ++j) y[j] = static_cast<T>(std::exp(static_cast<Acc>(x[j] - mx)) / s);
        }
        auto t = emit("softmax_rows", std::move(out), {a}, nullptr);
        attach(t, [an = a.node(), on = t.node()](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            const Mat& y = on->value;
            for (std::size_t i = 0; i < y.rows(); ++i) {
                Acc dot = 0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += static_cast<Acc>(g(i, j)) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += static_cast<T>(y(i, j) * (g(i, j) - dot));
            }
        });
        return t;
    }

    Tensor<T> log_softmax_rows(const Tensor<T>& a) {
        Mat out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i) {
            auto x = a.value().row(i);
            const T mx = *std::max_element(x.begin(), x.end());
            Acc s = 0;
            for (T v : x) s += std::exp(static_cast<Acc>(v - mx));
            const Acc lse = static_cast<Acc>(mx) + std::log(s);
            for (std::size_t j = 0; j < x.size(); ++j) out(i, j) = static_cast<T>(x[j] - lse);
        }
        auto t = emit("log_softmax_rows", std::move(out), {a}, nullptr);
        attach(t, [an = a.node(), on = t.node()](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            const Mat& y = on->value;
            for (std::size_t i = 0; i < y.rows(); ++i) {
                Acc gs = 0;
                for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    ga(i, j) += static_cast<T>(g(i, j) - std::exp(static_cast<Acc>(y(i, j))) * gs);
                }
            }
        });
        return t;
    }

    /// Divides every row by its L2 norm. A zero row has no direction and is an error.
    Tensor<T> l2_normalize_rows(const Tensor<T>& a) {
        Mat out(a.rows(), a.cols());
        std::vector<Acc> norms(a.rows());
        for (std::size_t i = 0; i < a.rows(); ++i) {
            Acc s = 0;
            for (T v : a.value().row(i)) s += static_cast<Acc>(v) * v;
            if (!(s > 0)) throw NumericError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
            norms[i] = std::sqrt(s);
            for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = static_cast<T>(a(i, j) / norms[i]);
        }
        auto t = emit("l2_normalize_rows", std::move(out), {a}, nullptr);
        attach(t, [an = a.node(), on = t.node(), norms = std::move(norms)](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            const Mat& y = on->value;
            for (std::size_t i = 0; i < y.rows(); ++i) {
                Acc dot = 0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += static_cast<Acc>(g(i, j)) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    ga(i, j) += static_cast<T>((g(i, j) - y(i, j) * dot) / norms[i]);
                }
            }
        });
        return t;
    }

    Tensor<T> sum(const Tensor<T>& a) {
        Acc s = 0;
        for (T v : a.value().values()) s += v;
        return emit("sum", Mat(1, 1, static_cast<T>(s)), {a}, [an = a.node()](const Mat& g) {
            if (an->requires_grad) map(an->grad_buffer()).array() += g(0, 0);
        });
    }

    Tensor<T> mean(const Tensor<T>& a) {
        return scale(sum(a), T(1) / static_cast<T>(a.size()));
    }

    /// Mean over every entry of the rows selected by `row_mask`.
    Tensor<T> masked_mean(const Tensor<T>& a, const std::vector<bool>& row_mask) {
        if (row_mask.size() != a.rows()) throw ShapeError("masked_mean: mask length differs from rows");
        std::size_t count = 0;
        Acc s = 0;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            if (!row_mask[i]) continue;
            ++count;
            for (T v : a.value().row(i)) s += v;
        }
        if (count == 0) throw ContractError("masked_mean: empty mask");
        const Acc denom = static_cast<Acc>(count * a.cols());
        return emit("masked_mean", Mat(1, 1, static_cast<T>(s / denom)), {a},
                    [an = a.node(), row_mask, denom](const Mat& g) {
                        if (!an->requires_grad) return;
                        auto& ga = an->grad_buffer();
                        const T w = static_cast<T>(g(0, 0) / denom);
                        for (std::size_t i = 0; i < ga.rows(); ++i) {
                            if (!row_mask[i]) continue;
                            for (auto& v : ga.row(i)) v += w;
                        }
                    });
    }

    Tensor<T> gather_rows(const Tensor<T>& a, std::span<const NodeId> idx) {
        Mat out(idx.size(), a.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= a.rows()) {
                throw IndexError("gather_rows: row " + std::to_string(idx[k]) + " out of range");
            }
            std::copy_n(a.value().row(idx[k]).begin(), a.cols(), out.row(k).begin());
        }
        return emit("gather_rows", std::move(out), {a},
                    [an = a.node(), idx = std::vector<NodeId>(idx.begin(), idx.end())](const Mat& g) {
                        if (!an->requires_grad) return;
                        auto& ga = an->grad_buffer();
                        for (std::size_t k = 0; k < idx.size(); ++k) {
                            auto dst = ga.row(idx[k]);
                            auto src = g.row(k);
                            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                        }
                    });
    }

    /// out[i] = a[i, cols[i]] as a rows x 1 column.
    Tensor<T> pick(const Tensor<T>& a, std::span<const ClassId> cols) {
        if (cols.size() != a.rows()) throw ShapeError("pick: index count differs from rows");
        Mat out(a.rows(), 1);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= a.cols()) {
                throw IndexError("pick: column " + std::to_string(cols[i]) + " out of range");
            }
            out(i, 0) = a(i, cols[i]);
        }
        return emit("pick", std::move(out), {a},
                    [an = a.node(), cols = std::vector<ClassId>(cols.begin(), cols.end())](const Mat& g) {
                        if (!an->requires_grad) return;
                        auto& ga = an->grad_buffer();
                        for (std::size_t i = 0; i < cols.size(); ++i) ga(i, cols[i]) += g(i, 0);
                    });
    }

    /// Main diagonal of a square matrix as an n x 1 column.
    Tensor<T> diagonal(const Tensor<T>& a) {
        if (a.rows() != a.cols()) throw ShapeError("diagonal: " + shape(a) + " is not square");
        Mat out(a.rows(), 1);
        for (std::size_t i = 0; i < a.rows(); ++i) out(i, 0) = a(i, i);
        return emit("diagonal", std::move(out), {a}, [an = a.node()](const Mat& g) {
            if (!an->requires_grad) return;
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.rows(); ++i) ga(i, i) += g(i, 0);
        });
    }

    /// Row i becomes the mean of a's rows over N(i); isolated nodes get zeros.
    Tensor<T> neighbor_mean(const Graph& graph, const Tensor<T>& a) {
        if (graph.num_nodes() != a.rows()) {
            throw ShapeError("neighbor_mean: graph has " + std::to_string(graph.num_nodes()) +
                             " nodes, features " + shape(a));
        }
        const std::size_t n = a.rows(), c = a.cols();
        auto offsets = graph.offsets();
        auto nbrs = graph.neighbor_ids();
        Mat out(n, c);
        std::vector<Acc> acc(c);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t deg = offsets[i + 1] - offsets[i];
            if (deg == 0) continue;
            std::fill(acc.begin(), acc.end(), Acc(0));
            for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
                auto src = a.value().row(nbrs[k]);
                for (std::size_t j = 0; j < c; ++j) acc[j] += src[j];
            }
            auto dst = out.row(i);
            for (std::size_t j = 0; j < c; ++j) dst[j] = static_cast<T>(acc[j] / static_cast<Acc>(deg));
        }
        // Backward only needs the CSR arrays, so keep a copy instead of a reference to the graph.
        return emit("neighbor_mean", std::move(out), {a},
                    [an = a.node(), off = std::vector<std::size_t>(offsets.begin(), offsets.end()),
                     nb = std::vector<NodeId>(nbrs.begin(), nbrs.end())](const Mat& g) {
                        if (!an->requires_grad) return;
                        auto& ga = an->grad_buffer();
                        for (std::size_t i = 0; i + 1 < off.size(); ++i) {
                            const std::size_t deg = off[i + 1] - off[i];
                            if (deg == 0) continue;
                            const T w = T(1) / static_cast<T>(deg);
                            auto src = g.row(i);
                            for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
                                auto dst = ga.row(nb[k]);
                                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
                            }
                        }
                    });
    }

    /// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from loss.
    /// Intermediate gradients are reset first, so repeated calls add one more
    /// copy of the gradient into the leaves.
    void backward(const Tensor<T>& loss) {
        if (!loss.is_scalar()) throw ContractError("backward: loss must be a scalar, got " + shape(loss));
        if (!recording_) throw ContractError("backward: tape was not recording");
        if (!loss.requires_grad()) return;
        for (auto& e : entries_) e.out->grad = Mat();
        loss.node()->grad_buffer()(0, 0) += T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->out->grad.empty()) continue;
            it->backward(it->out->grad);
        }
    }

private:
    using BackwardFn = std::function<void(const Mat&)>;

    struct Entry {
        const char* op;
        std::shared_ptr<TensorNode<T>> out;
        BackwardFn backward;
    };

    static Map map(Mat& m) { return Map(m.data(), m.rows(), m.cols()); }
    static CMap cmap(const Mat& m) { return CMap(m.data(), m.rows(), m.cols()); }

    static std::string shape(const Tensor<T>& t) {
        return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
    }

    Tensor<T> emit(const char* op, Mat value, std::initializer_list<Tensor<T>> inputs, BackwardFn fn) {
        if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
        bool needs = false;
        for (const auto& in : inputs) needs = needs || in.requires_grad();
        auto node = std::make_shared<TensorNode<T>>();
        node->value = std::move(value);
        node->requires_grad = recording_ && needs;
        if (node->requires_grad && fn) entries_.push_back({op, node, std::move(fn)});
        return Tensor<T>(std::move(node));
    }

    /// Late-binds a backward closure that needs the output node itself.
    void attach(const Tensor<T>& out, BackwardFn fn) {
        if (out.requires_grad()) entries_.push_back({"", out.node(), std::move(fn)});
    }

    bool recording_;
    std::size_t clamp_count_ = 0;
    std::vector<Entry> entries_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    bool passed = true;
    std::size_t worst_input = 0;
    std::size_t worst_entry = 0;
};

/// Compares analytic gradients of f at `inputs` against central differences.
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8). `f` receives a
/// fresh tape and the inputs and must return a scalar.
template <class T, class F>
GradCheckResult grad_check(F&& f, std::vector<Tensor<T>> inputs, double step, double tol) {
    if (!(step > 0)) throw ContractError("grad_check: step must be positive");
    for (auto& t : inputs) {
        if (!t.requires_grad()) throw ContractError("grad_check: every input must require grad");
        t.zero_grad();
    }
    auto eval = [&] {
        Tape<T> tape(false);
        return static_cast<double>(f(tape, std::span<const Tensor<T>>(inputs)).item());
    };

    {
        Tape<T> tape;
        auto loss = f(tape, std::span<const Tensor<T>>(inputs));
        tape.backward(loss);
    }
    const double base = eval();
    if (eval() != base) throw ContractError("grad_check: function is not deterministic");

    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Matrix<T> analytic = inputs[k].grad();
        auto& v = inputs[k].mutable_value();
        for (std::size_t e = 0; e < v.size(); ++e) {
            const T saved = v.data()[e];
            v.data()[e] = saved + static_cast<T>(step);
            const double up = eval();
            v.data()[e] = saved - static_cast<T>(step);
            const double down = eval();
            v.data()[e] = saved;
            const double numeric = (up - down) / (2 * step);
            const double a = analytic.data()[e];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (err > res.max_rel_error) {
                res.max_rel_error = err;
                res.worst_input = k;
                res.worst_entry = e;
            }
        }
    }
    res.passed = res.max_rel_error < tol;
    return res;
}

}  // namespace cgnn
