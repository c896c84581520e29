#pragma once

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cgnn/checkpoint.hpp"
#include "cgnn/config.hpp"
#include "cgnn/io.hpp"
#include "cgnn/noise.hpp"
#include "cgnn/report.hpp"
#include "cgnn/trainer.hpp"

namespace cgnn::cli {

namespace fs = std::filesystem;

inline fs::path out_dir(const ExperimentConfig& cfg) { return cfg.get("out_dir"); }

/// The dataset named by `data.dir`, or a synthetic one from `synth.*`. A split
/// file (from `data.split`, or split.txt in the directory when `data.split` is
/// none) is applied here; rate splits are drawn per run later.
inline Dataset load_source(const ExperimentConfig& cfg, std::ostream& log) {
    const auto& dir = cfg.get("data.dir");
    if (dir.empty()) {
        auto ds = gen_synthetic(cfg.synth_spec());
        log << "synthetic dataset: " << ds.graph.num_nodes() << " nodes, " << ds.graph.num_undirected_edges()
            << " edges, " << ds.labels.num_classes << " classes\n";
        return ds;
    }
    auto split = cfg.split_spec();
    if (split.kind == io::SplitSpec::Kind::Rate) {
        split = io::SplitSpec::none();
    } else if (split.kind == io::SplitSpec::Kind::None && fs::exists(fs::path(dir) / io::kSplitFile)) {
        split = io::SplitSpec::from_file(fs::path(dir) / io::kSplitFile);
    }
    io::LoadReport rep;
    auto ds = io::load_dataset(io::DatasetPaths::in_dir(dir), split, &rep);
    log << "loaded " << dir << ": " << ds.graph.num_nodes() << " nodes, " << ds.graph.num_undirected_edges()
        << " edges, " << ds.labels.num_classes << " classes";
    if (rep.self_loops_dropped) log << ", " << rep.self_loops_dropped << " self-loops dropped";
    log << '\n';
    return ds;
}

/// Run-0 view of the source: split applied, no noise.
inline Dataset split_source(const ExperimentConfig& cfg, std::ostream& log) {
    auto ds = load_source(cfg, log);
    auto spec = cfg.protocol_spec();
    spec.noise = {};
    ds = prepare_run(ds, spec, 0);
    if (ds.labels.train_nodes().empty()) throw ContractError("no split: set data.split");
    return ds;
}

inline Dataset cmd_synth(const ExperimentConfig& cfg, std::ostream& log) {
    auto ds = gen_synthetic(cfg.synth_spec());
    io::write_dataset(out_dir(cfg), ds);
    log << "wrote " << ds.graph.num_nodes() << " nodes, " << ds.graph.num_undirected_edges() << " edges to "
        << out_dir(cfg).string() << '\n';
    return ds;
}

/// Splits the source (run 0), corrupts train labels with `noise.*` and writes
/// the result; training on it needs data.split=none and noise.kind=none.
inline Dataset cmd_inject(const ExperimentConfig& cfg, std::ostream& log) {
    auto ds = split_source(cfg, log);
    ds.labels = inject_noise(std::move(ds.labels), cfg.noise_spec());
    std::size_t flipped = 0;
    for (NodeId i : ds.labels.train_nodes()) flipped += ds.labels.observed[i] != ds.labels.clean[i];
    io::write_dataset(out_dir(cfg), ds);
    log << to_string(cfg.noise_spec().kind) << " noise: " << flipped << " of " << ds.labels.train_nodes().size()
        << " train labels flipped\n";
    return ds;
}

inline ProtocolSummary cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    const auto base = load_source(cfg, log);
    const auto tc = cfg.train_config();
    log << "training " << tc.variant() << ", " << cfg.count("train.runs") << " runs\n";
    auto summary = run_protocol(base, cfg.protocol_spec(), tc);
    const auto dir = out_dir(cfg);
    report::write_protocol(dir, summary);
    for (const auto& r : summary.runs) {
        write_checkpoint(dir / ("run" + std::to_string(r.run) + ".ckpt"), export_params(r.params));
    }
    {
        auto out = io::detail::open_out(dir / "config.txt");
        out << cfg.dump();
    }
    for (const auto& r : summary.runs) {
        log << "run " << r.run << " seed " << r.seed << ": test accuracy " << r.metrics.final_test_accuracy
            << ", relabeled " << r.metrics.relabeled << '\n';
    }
    log << summary.variant << ": accuracy " << summary.test_accuracy.mean << " +- " << summary.test_accuracy.std
        << '\n';
    return summary;
}

struct SweepReport {
    std::vector<SweepCell> cells;
    double spread = 0;  // max - min of mean accuracy over cells
};

inline SweepReport cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    const auto base = load_source(cfg, log);
    std::vector<CorrectionConfig> grid;
    for (double g : cfg.reals("sweep.gamma")) {
        for (double o : cfg.reals("sweep.omega")) grid.push_back({g, o});
    }
    log << "sweeping " << grid.size() << " cells\n";
    SweepReport rep;
    rep.cells = run_sweep(base, cfg.protocol_spec(), cfg.train_config(), grid);
    auto [lo, hi] = std::minmax_element(rep.cells.begin(), rep.cells.end(), [](const auto& a, const auto& b) {
        return a.summary.test_accuracy.mean < b.summary.test_accuracy.mean;
    });
    rep.spread = hi->summary.test_accuracy.mean - lo->summary.test_accuracy.mean;

    const auto dir = out_dir(cfg);
    fs::create_directories(dir);
    {
        auto out = io::detail::open_out(dir / "sweep.csv");
        report::write_sweep_csv(out, rep.cells);
    }
    report::json cells = report::json::array();
    for (const auto& c : rep.cells) {
        cells.push_back({{"gamma", c.gamma}, {"omega", c.omega}, {"summary", report::to_json(c.summary)}});
    }
    report::write_json(dir / "sweep.json", {{"cells", std::move(cells)},
                                            {"spread", rep.spread},
                                            {"reference_spread", 0.01},
                                            {"within_reference", rep.spread < 0.01}});
    log << "accuracy spread over the grid: " << rep.spread * 100 << " points (reference: under 1 point, "
        << (rep.spread < 0.01 ? "within" : "outside") << ")\n";
    return rep;
}

/// Test accuracy of the checkpoint in `eval.checkpoint` on the run-0 split.
inline double cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
    const auto& ckpt = cfg.get("eval.checkpoint");
    if (ckpt.empty()) throw ConfigError("eval.checkpoint", "required by eval");
    const auto params = import_params<float>(read_checkpoint(ckpt));
    const auto ds = split_source(cfg, log);
    if (ds.labels.test_nodes().empty()) throw ContractError("eval: empty test mask");
    const double acc = evaluate(params, ds, ds.labels.test_mask);
    fs::create_directories(out_dir(cfg));
    report::write_json(out_dir(cfg) / "eval.json",
                       {{"checkpoint", ckpt}, {"test_accuracy", acc}, {"num_test", ds.labels.test_nodes().size()}});
    log << "test accuracy " << acc << " on " << ds.labels.test_nodes().size() << " nodes\n";
    return acc;
}

}  // namespace cgnn::cli
