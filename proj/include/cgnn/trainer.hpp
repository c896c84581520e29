#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cgnn/augmentation.hpp"
#include "cgnn/correction.hpp"
#include "cgnn/encoder.hpp"
#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"
#include "cgnn/io.hpp"
#include "cgnn/noise.hpp"
#include "cgnn/objectives.hpp"
#include "cgnn/rng.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t warmup = 100;
    std::size_t correction_period = 20;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool use_contrastive = true;
    bool use_correction = true;
    EncoderConfig encoder;
    AugmentConfig augment;
    LossConfig loss;
    CorrectionConfig correction;

    void validate() const {
        if (epochs == 0) throw ContractError("epochs must be positive");
        if (warmup == 0 || warmup > epochs) throw ContractError("warmup must lie in [1, epochs]");
        if (correction_period == 0) throw ContractError("correction period must be positive");
        if (!(learning_rate >= 0)) throw ContractError("learning rate must be non-negative");
        augment.validate();
        loss.validate();
        correction.validate();
    }

    /// Correction fires after epochs W, W + R, W + 2R, ... (1-based).
    bool is_correction_epoch(std::size_t epoch) const noexcept {
        return epoch >= warmup && (epoch - warmup) % correction_period == 0;
    }

    /// Name of the ablation cell these flags select.
    std::string variant() const {
        if (use_contrastive && use_correction) return "full";
        if (!use_contrastive && !use_correction) return "baseline";
        return use_contrastive ? "w/o-corr" : "w/o-contr";
    }
};

/// Full-batch first-order optimizer over a fixed parameter list.
template <class T>
class Optimizer {
public:
    Optimizer(std::vector<Tensor<T>> params, const TrainConfig& cfg)
        : params_(std::move(params)), kind_(cfg.optimizer), lr_(cfg.learning_rate), beta1_(cfg.beta1),
          beta2_(cfg.beta2), eps_(cfg.epsilon) {
        if (kind_ == OptimizerKind::Adam) {
            for (const auto& p : params_) {
                m_.emplace_back(p.rows(), p.cols());
                v_.emplace_back(p.rows(), p.cols());
            }
        }
    }

    /// Points the optimizer at another parameter list of the same shapes.
    void rebind(std::vector<Tensor<T>> params) {
        if (params.size() != params_.size()) throw ShapeError("optimizer: parameter count differs");
        params_ = std::move(params);
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            if (!p.has_grad()) continue;
            auto w = p.mutable_value().values();
            auto g = p.grad().values();
            if (kind_ == OptimizerKind::Sgd) {
                for (std::size_t e = 0; e < w.size(); ++e) w[e] -= static_cast<T>(lr_ * g[e]);
                continue;
            }
            auto m = m_[k].values();
            auto v = v_[k].values();
            for (std::size_t e = 0; e < w.size(); ++e) {
                m[e] = static_cast<T>(beta1_ * m[e] + (1 - beta1_) * g[e]);
                v[e] = static_cast<T>(beta2_ * v[e] + (1 - beta2_) * static_cast<double>(g[e]) * g[e]);
                const double mhat = m[e] / c1;
                const double vhat = v[e] / c2;
                w[e] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    std::vector<Tensor<T>> params_;
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<Matrix<T>> m_, v_;
    std::size_t t_ = 0;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double total_loss = 0;
    double contrastive_loss = 0;
    double supervised_loss = 0;
    double train_accuracy = 0;  // vs working labels
    double test_accuracy = 0;   // vs clean labels
};

struct RoundMetrics {
    std::size_t epoch = 0;
    std::size_t relabeled = 0;
    std::size_t correct_relabels = 0;  // new label == clean
    std::size_t noisy_before = 0;      // working != clean entering the round
    std::size_t fixed = 0;             // of those, now equal to clean
    std::optional<double> precision;
    std::optional<double> recall;
    std::vector<CorrectionRecord> records;
};

struct RunMetrics {
    std::vector<EpochMetrics> epochs;
    std::vector<RoundMetrics> rounds;
    double final_test_accuracy = 0;
    /// Correct relabels / all relabels over the run; unset when nothing was relabeled.
    std::optional<double> relabel_precision;
    /// Fraction of initially noisy train labels that end the run clean.
    std::optional<double> relabel_recall;
    std::size_t relabeled = 0;
    std::size_t probability_clamps = 0;
};

template <class T>
struct TrainResult {
    ModelParams<T> params;
    RunMetrics metrics;
    LabelStore labels;
};

/// Fraction of masked nodes whose argmax prediction equals `truth`.
template <class T>
double accuracy(const Matrix<T>& q, std::span<const OptLabel> truth, const std::vector<bool>& mask) {
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        if (!mask[i]) continue;
        if (!truth[i]) throw ContractError("accuracy: masked node " + std::to_string(i) + " has no reference label");
        ++total;
        if (argmax_row(q.row(i)) == *truth[i]) ++hit;
    }
    if (total == 0) throw ContractError("accuracy: empty mask");
    return static_cast<double>(hit) / static_cast<double>(total);
}

template <class T>
struct Forward {
    Matrix<T> embeddings;
    Matrix<T> probabilities;
};

/// Inference pass on the unaugmented graph.
template <class T>
Forward<T> infer(const ModelParams<T>& params, const Graph& g, const Matrix<T>& x) {
    Tape<T> tape(false);
    auto h = encode(tape, g, x, params);
    auto q = predict(tape, h, params);
    return {h.value(), q.value()};
}

/// Test-style accuracy of `params` against clean labels on `mask`.
template <class T>
double evaluate(const ModelParams<T>& params, const Dataset& ds, const std::vector<bool>& mask) {
    auto fwd = infer(params, ds.graph, ds.attributes.cast<T>());
    return accuracy(fwd.probabilities, std::span<const OptLabel>(ds.labels.clean), mask);
}

/// Resumable training loop over one dataset. Copies are deep (parameters and
/// optimizer state are cloned), so a run can be forked at any epoch.
template <class T = float>
class Trainer {
public:
    /// `ds` must outlive the trainer; split and observed labels already in place.
    Trainer(const Dataset& ds, TrainConfig cfg) : ds_(&ds), cfg_(std::move(cfg)) {
        cfg_.validate();
        ds.validate();
        if (ds.labels.train_nodes().empty()) throw ContractError("train: empty train mask");
        cfg_.encoder.input_dim = ds.attributes.cols();
        auto init_rng = make_rng(cfg_.seed, stream::kInit);
        aug_rng_ = make_rng(cfg_.seed, stream::kAugment);
        params_ = init_params<T>(cfg_.encoder, ds.labels.num_classes, init_rng);
        opt_.emplace(params_.all(), cfg_);
        labels_ = ds.labels;
        x_ = ds.attributes.cast<T>();
        has_test_ = !labels_.test_nodes().empty();
    }

    Trainer(const Trainer& o)
        : ds_(o.ds_), cfg_(o.cfg_), aug_rng_(o.aug_rng_), params_(o.params_.clone()), opt_(o.opt_),
          labels_(o.labels_), metrics_(o.metrics_), x_(o.x_), has_test_(o.has_test_), epoch_(o.epoch_) {
        opt_->rebind(params_.all());
    }
    Trainer& operator=(const Trainer&) = delete;
    Trainer(Trainer&&) noexcept = default;
    Trainer& operator=(Trainer&&) noexcept = default;

    const TrainConfig& config() const noexcept { return cfg_; }
    std::size_t epoch() const noexcept { return epoch_; }
    bool done() const noexcept { return epoch_ >= cfg_.epochs; }
    const ModelParams<T>& params() const noexcept { return params_; }
    const LabelStore& labels() const noexcept { return labels_; }
    RunMetrics& metrics() noexcept { return metrics_; }
    const RunMetrics& metrics() const noexcept { return metrics_; }

    /// One optimizer step: two augmented views -> contrastive loss, clean graph
    /// -> supervised loss on working labels.
    void step() {
        if (done()) throw ContractError("train: all epochs already run");
        const std::size_t epoch = ++epoch_;
        EpochMetrics em;
        em.epoch = epoch;
        try {
            Tape<T> tape;
            Tensor<T> cl;
            if (cfg_.use_contrastive) {
                auto [v1, v2] = make_views(ds_->graph, x_, cfg_.augment, aug_rng_);
                auto h1 = encode(tape, v1.graph, v1.attributes, params_);
                auto h2 = encode(tape, v2.graph, v2.attributes, params_);
                cl = contrastive_loss(tape, h1, h2, static_cast<T>(cfg_.loss.temperature));
                em.contrastive_loss = cl.item();
            }
            auto h = encode(tape, ds_->graph, x_, params_);
            auto q = predict(tape, h, params_);
            auto sup = supervised_loss(tape, q, std::span<const OptLabel>(labels_.working), labels_.train_mask);
            auto total = cfg_.use_contrastive ? total_loss(tape, cl, sup, cfg_.loss) : sup;
            em.supervised_loss = sup.item();
            em.total_loss = total.item();
            em.train_accuracy = accuracy(q.value(), std::span<const OptLabel>(labels_.working), labels_.train_mask);
            if (has_test_) em.test_accuracy = accuracy(q.value(), std::span<const OptLabel>(labels_.clean), labels_.test_mask);
            params_.zero_grad();
            tape.backward(total);
            opt_->step();
            metrics_.probability_clamps += tape.clamp_count();
        } catch (const NumericError& e) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        metrics_.epochs.push_back(em);
    }

    bool correction_due() const noexcept { return cfg_.use_correction && cfg_.is_correction_epoch(epoch_); }

    Forward<T> inference() const {
        try {
            return infer(params_, ds_->graph, x_);
        } catch (const NumericError& e) {
            throw TrainingError("inference failed after epoch " + std::to_string(epoch_) + ": " + e.what());
        }
    }

    struct Proposal {
        LabelStore labels;
        RoundMetrics round;
    };

    /// Correction round under `cc` against the current working labels; nothing is committed.
    Proposal propose(const Forward<T>& fwd, const CorrectionConfig& cc) const {
        RoundMetrics rm;
        rm.epoch = epoch_;
        std::vector<bool> noisy(labels_.size(), false);
        for (NodeId i : labels_.train_nodes()) {
            noisy[i] = labels_.clean[i] && labels_.working[i] != labels_.clean[i];
            rm.noisy_before += noisy[i];
        }
        auto res = correct_labels(labels_, ds_->graph, fwd.embeddings, fwd.probabilities, cc);
        rm.relabeled = res.relabeled;
        for (const auto& rec : res.records) {
            if (rec.verdict != Verdict::Relabeled) continue;
            const bool right = res.labels.clean[rec.node] && rec.new_label == *res.labels.clean[rec.node];
            rm.correct_relabels += right;
            rm.fixed += noisy[rec.node] && right;
        }
        if (rm.relabeled) rm.precision = static_cast<double>(rm.correct_relabels) / static_cast<double>(rm.relabeled);
        if (rm.noisy_before) rm.recall = static_cast<double>(rm.fixed) / static_cast<double>(rm.noisy_before);
        rm.records = std::move(res.records);
        return {std::move(res.labels), std::move(rm)};
    }

    void commit(Proposal p) {
        labels_ = std::move(p.labels);
        metrics_.rounds.push_back(std::move(p.round));
    }

    /// Runs the remaining epochs and correction rounds.
    void run() {
        while (!done()) {
            step();
            if (correction_due()) commit(propose(inference(), cfg_.correction));
        }
    }

    /// Run totals and final test accuracy from a fresh inference pass.
    TrainResult<T> finish() const {
        TrainResult<T> out{params_.clone(), metrics_, labels_};
        auto& m = out.metrics;
        std::size_t relabeled = 0, correct = 0, initially_noisy = 0, recovered = 0;
        for (const auto& rm : m.rounds) {
            relabeled += rm.relabeled;
            correct += rm.correct_relabels;
        }
        for (NodeId i : labels_.train_nodes()) {
            if (!labels_.clean[i] || labels_.observed[i] == labels_.clean[i]) continue;
            ++initially_noisy;
            recovered += labels_.working[i] == labels_.clean[i];
        }
        m.relabeled = relabeled;
        m.relabel_precision.reset();
        m.relabel_recall.reset();
        if (relabeled) m.relabel_precision = static_cast<double>(correct) / static_cast<double>(relabeled);
        if (initially_noisy) m.relabel_recall = static_cast<double>(recovered) / static_cast<double>(initially_noisy);
        if (has_test_) {
            auto fwd = inference();
            m.final_test_accuracy = accuracy(fwd.probabilities, std::span<const OptLabel>(labels_.clean), labels_.test_mask);
        }
        return out;
    }

private:
    const Dataset* ds_;
    TrainConfig cfg_;
    Rng aug_rng_;
    ModelParams<T> params_;
    std::optional<Optimizer<T>> opt_;
    LabelStore labels_;
    RunMetrics metrics_;
    Matrix<T> x_;
    bool has_test_ = false;
    std::size_t epoch_ = 0;
};

template <class T = float>
TrainResult<T> train(const Dataset& ds, TrainConfig cfg) {
    Trainer<T> t(ds, std::move(cfg));
    t.run();
    return t.finish();
}

/// Runs fn(0..count-1) on up to `jobs` threads; the first exception is rethrown.
inline void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t k; (k = next++) < count;) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

struct Stat {
    double mean = 0;
    double std = 0;  // population
    std::size_t count = 0;
};

inline Stat summarize(const std::vector<double>& xs) {
    Stat s;
    s.count = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(xs.size()));
    return s;
}

struct ProtocolSpec {
    io::SplitSpec split = io::SplitSpec::with_rate(0.01, 0);
    NoiseSpec noise;
    std::size_t num_runs = 5;
    std::size_t jobs = 1;
};

struct RunRecord {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    RunMetrics metrics;
    ModelParams<float> params;
};

struct ProtocolSummary {
    std::string variant;
    std::size_t num_runs = 0;
    Stat test_accuracy;
    Stat relabel_precision;  // over runs that relabeled anything
    Stat relabel_recall;     // over runs that had noisy train labels
    std::vector<RunRecord> runs;
};

/// Prepares run r of a protocol: fresh split (seed + r) and noise (seed + r)
/// on a copy of the base dataset. A file or absent split keeps base masks.
inline Dataset prepare_run(const Dataset& base, const ProtocolSpec& spec, std::size_t run) {
    Dataset ds = base;
    if (spec.split.kind == io::SplitSpec::Kind::Rate) {
        auto rng = make_rng(spec.split.seed + run, stream::kSplit);
        apply_split(ds.labels, make_split(ds.labels.clean, ds.labels.num_classes, spec.split.rate, rng));
    }
    if (spec.noise.kind != NoiseKind::None) {
        NoiseSpec noise = spec.noise;
        noise.seed += run;
        ds.labels = inject_noise(std::move(ds.labels), noise);
    }
    return ds;
}

inline void fill_summary(ProtocolSummary& summary) {
    std::vector<double> acc, prec, rec;
    for (const auto& run : summary.runs) {
        acc.push_back(run.metrics.final_test_accuracy);
        if (run.metrics.relabel_precision) prec.push_back(*run.metrics.relabel_precision);
        if (run.metrics.relabel_recall) rec.push_back(*run.metrics.relabel_recall);
    }
    summary.num_runs = summary.runs.size();
    summary.test_accuracy = summarize(acc);
    summary.relabel_precision = summarize(prec);
    summary.relabel_recall = summarize(rec);
}

/// num_runs independent runs with seeds base + run index; mean and population std.
inline ProtocolSummary run_protocol(const Dataset& base, const ProtocolSpec& spec, const TrainConfig& cfg) {
    if (spec.num_runs == 0) throw ContractError("run_protocol: need at least one run");
    ProtocolSummary summary;
    summary.variant = cfg.variant();
    summary.runs.resize(spec.num_runs);
    parallel_for(spec.num_runs, spec.jobs, [&](std::size_t r) {
        Dataset ds = prepare_run(base, spec, r);
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + r;
        auto res = train<float>(ds, run_cfg);
        summary.runs[r] = RunRecord{r, run_cfg.seed, std::move(res.metrics), std::move(res.params)};
    });
    fill_summary(summary);
    return summary;
}

struct SweepCell {
    double gamma = 0;
    double omega = 0;
    ProtocolSummary summary;
};

/// Runs the protocol once per correction setting in `cells` (other settings
/// from `cfg`). Cells that have produced the same working labels so far share
/// one training trajectory, which is split when their corrections disagree;
/// every cell's result equals an independent run_protocol with its setting.
inline std::vector<SweepCell> run_sweep(const Dataset& base, const ProtocolSpec& spec, const TrainConfig& cfg,
                                        const std::vector<CorrectionConfig>& cells) {
    if (spec.num_runs == 0) throw ContractError("run_sweep: need at least one run");
    if (cells.empty()) throw ContractError("run_sweep: empty grid");
    for (const auto& c : cells) c.validate();
    std::vector<SweepCell> out(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        out[k].gamma = cells[k].gamma;
        out[k].omega = cells[k].omega;
        TrainConfig cell_cfg = cfg;
        cell_cfg.correction = cells[k];
        out[k].summary.variant = cell_cfg.variant();
        out[k].summary.runs.resize(spec.num_runs);
    }

    parallel_for(spec.num_runs, spec.jobs, [&](std::size_t r) {
        const Dataset ds = prepare_run(base, spec, r);
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + r;
        struct Branch {
            Trainer<float> trainer;
            std::vector<std::size_t> cells;
        };
        std::vector<std::vector<RoundMetrics>> rounds(cells.size());
        std::vector<Branch> live;
        std::vector<std::size_t> all(cells.size());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
        live.push_back({Trainer<float>(ds, run_cfg), all});

        auto finish = [&](const Branch& b) {
            Trainer<float> t = b.trainer;
            for (std::size_t k : b.cells) {
                t.metrics().rounds = rounds[k];
                auto res = t.finish();
                out[k].summary.runs[r] = RunRecord{r, run_cfg.seed, std::move(res.metrics), std::move(res.params)};
            }
        };

        while (!live.empty()) {
            std::vector<Branch> next;
            for (auto& b : live) {
                b.trainer.step();
                if (b.trainer.correction_due()) {
                    const auto fwd = b.trainer.inference();
                    std::vector<std::pair<Trainer<float>::Proposal, std::vector<std::size_t>>> groups;
                    for (std::size_t k : b.cells) {
                        auto p = b.trainer.propose(fwd, cells[k]);
                        rounds[k].push_back(p.round);
                        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
                            return g.first.labels.working == p.labels.working;
                        });
                        if (it == groups.end()) {
                            groups.emplace_back(std::move(p), std::vector<std::size_t>{k});
                        } else {
                            it->second.push_back(k);
                        }
                    }
                    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                        auto& [proposal, members] = groups[gi];
                        Branch nb = gi + 1 == groups.size() ? Branch{std::move(b.trainer), {}} : Branch{b.trainer, {}};
                        nb.trainer.commit(std::move(proposal));
                        nb.cells = std::move(members);
                        if (nb.trainer.done()) {
                            finish(nb);
                        } else {
                            next.push_back(std::move(nb));
                        }
                    }
                } else if (b.trainer.done()) {
                    finish(b);
                } else {
                    next.push_back(std::move(b));
                }
            }
            live = std::move(next);
        }
    });
    for (auto& c : out) fill_summary(c.summary);
    return out;
}

}  // namespace cgnn
