#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgnn/io.hpp"
#include "cgnn/trainer.hpp"

namespace cgnn::report {

using nlohmann::json;
namespace fs = std::filesystem;

template <class U>
json or_null(const std::optional<U>& v) {
    return v ? json(*v) : json(nullptr);
}

inline json to_json(const EpochMetrics& m, std::size_t run) {
    return {{"run", run},
            {"epoch", m.epoch},
            {"total_loss", m.total_loss},
            {"contrastive_loss", m.contrastive_loss},
            {"supervised_loss", m.supervised_loss},
            {"train_accuracy", m.train_accuracy},
            {"test_accuracy", m.test_accuracy}};
}

inline json to_json(const CorrectionRecord& r, std::size_t run, std::size_t epoch) {
    return {{"run", run},
            {"epoch", epoch},
            {"node", r.node},
            {"c", or_null(r.majority)},
            {"a", or_null(r.score)},
            {"verdict", to_string(r.verdict)},
            {"old", r.old_label},
            {"new", r.new_label}};
}

inline json to_json(const RoundMetrics& m, std::size_t run) {
    return {{"run", run},
            {"epoch", m.epoch},
            {"relabeled", m.relabeled},
            {"correct_relabels", m.correct_relabels},
            {"noisy_before", m.noisy_before},
            {"fixed", m.fixed},
            {"precision", or_null(m.precision)},
            {"recall", or_null(m.recall)}};
}

inline json to_json(const Stat& s) {
    if (s.count == 0) return {{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
    return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
}

inline json to_json(const ProtocolSummary& s) {
    json runs = json::array();
    for (const auto& r : s.runs) {
        runs.push_back({{"run", r.run},
                        {"seed", r.seed},
                        {"final_test_accuracy", r.metrics.final_test_accuracy},
                        {"relabeled", r.metrics.relabeled},
                        {"relabel_precision", or_null(r.metrics.relabel_precision)},
                        {"relabel_recall", or_null(r.metrics.relabel_recall)},
                        {"probability_clamps", r.metrics.probability_clamps},
                        {"rounds", r.metrics.rounds.size()}});
    }
    return {{"variant", s.variant},
            {"num_runs", s.num_runs},
            {"test_accuracy", to_json(s.test_accuracy)},
            {"relabel_precision", to_json(s.relabel_precision)},
            {"relabel_recall", to_json(s.relabel_recall)},
            {"runs", std::move(runs)}};
}

inline void write_json(const fs::path& path, const json& j) {
    auto out = io::detail::open_out(path);
    out << j.dump(2) << '\n';
}

/// metrics.jsonl (per epoch), rounds.jsonl (per correction round),
/// corrections.jsonl (per node and round) and summary.json.
inline void write_protocol(const fs::path& dir, const ProtocolSummary& s) {
    fs::create_directories(dir);
    auto metrics = io::detail::open_out(dir / "metrics.jsonl");
    auto rounds = io::detail::open_out(dir / "rounds.jsonl");
    auto corrections = io::detail::open_out(dir / "corrections.jsonl");
    for (const auto& r : s.runs) {
        for (const auto& e : r.metrics.epochs) metrics << to_json(e, r.run).dump() << '\n';
        for (const auto& rm : r.metrics.rounds) {
            rounds << to_json(rm, r.run).dump() << '\n';
            for (const auto& rec : rm.records) corrections << to_json(rec, r.run, rm.epoch).dump() << '\n';
        }
    }
    write_json(dir / "summary.json", to_json(s));
}

/// Shortest text that reads back to the same double.
inline std::string exact(double v) {
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::stod(buf) == v) break;
    }
    return buf;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
    out << "gamma,omega,mean_acc,std_acc\n";
    for (const auto& c : cells) {
        out << exact(c.gamma) << ',' << exact(c.omega) << ',' << exact(c.summary.test_accuracy.mean) << ','
            << exact(c.summary.test_accuracy.std) << '\n';
    }
}

}  // namespace cgnn::report
