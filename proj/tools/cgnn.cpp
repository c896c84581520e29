#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgnn/commands.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive graph learning under label noise"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    bool no_contr = false, no_corr = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "seed for synthesis, split, noise and training");
    app.add_option("--out", out, "output directory (out_dir)");
    app.add_flag("--no-contr", no_contr, "disable the contrastive term");
    app.add_flag("--no-corr", no_corr, "disable label correction");

    const std::vector<std::pair<std::string, std::string>> subs = {
        {"synth", "generate a synthetic dataset"},
        {"inject", "split a dataset and corrupt its train labels"},
        {"train", "run the multi-seed training protocol"},
        {"sweep", "gamma/omega sensitivity grid"},
        {"eval", "evaluate a checkpoint on the test split"},
    };
    for (const auto& [name, help] : subs) {
        app.add_subcommand(name, help)->add_option("overrides", overrides, "key=value overrides");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigExit;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    cgnn::ExperimentConfig cfg;
    try {
        if (!config_path.empty()) cfg = cgnn::ExperimentConfig::load(config_path);
        for (const auto& o : overrides) cfg.apply_override(o);
        if (seed) cfg.set_seed(*seed);
        if (!out.empty()) cfg.set("out_dir", out);
        if (no_contr) cfg.set("train.contrastive", "false");
        if (no_corr) cfg.set("train.correction", "false");
        cfg.validate();
    } catch (const cgnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    }

    try {
        if (cmd == "synth") cgnn::cli::cmd_synth(cfg, std::cerr);
        if (cmd == "inject") cgnn::cli::cmd_inject(cfg, std::cerr);
        if (cmd == "train") cgnn::cli::cmd_train(cfg, std::cerr);
        if (cmd == "sweep") cgnn::cli::cmd_sweep(cfg, std::cerr);
        if (cmd == "eval") cgnn::cli::cmd_eval(cfg, std::cerr);
    } catch (const cgnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeExit;
    }
    return 0;
}
