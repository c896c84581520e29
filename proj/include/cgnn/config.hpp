#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/io.hpp"
#include "cgnn/noise.hpp"
#include "cgnn/trainer.hpp"

namespace cgnn {

/// Flat `key = value` experiment document. Every key has a default; unknown
/// keys and invalid values raise ConfigError naming the key.
class ExperimentConfig {
public:
    ExperimentConfig() {
        for (const auto& k : schema()) values_[k.name] = k.fallback;
    }

    /// `key = value` lines; `#` starts a comment.
    static ExperimentConfig parse(std::istream& in) {
        ExperimentConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto text = trim(line);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
            }
            cfg.set(std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1))));
        }
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("--config", "cannot open " + path.string());
        return parse(in);
    }

    /// Sets one key after checking it is known and its value parses.
    void set(const std::string& key, const std::string& value) {
        const auto* spec = find(key);
        if (!spec) throw ConfigError(key, "unknown key");
        spec->check(key, value);
        values_[key] = value;
    }

    /// Applies a `key=value` override string.
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError(assignment, "override must look like key=value");
        set(std::string(trim(std::string_view(assignment).substr(0, eq))),
            std::string(trim(std::string_view(assignment).substr(eq + 1))));
    }

    /// One seed for every consumer (synthesis, split, noise, training).
    void set_seed(std::uint64_t seed) {
        for (const char* k : {"synth.seed", "noise.seed", "train.seed", "data.split_seed"}) set(k, std::to_string(seed));
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(key, "unknown key");
        return it->second;
    }

    double real(const std::string& key) const { return *io::detail::parse_real(get(key)); }
    std::size_t count(const std::string& key) const { return *io::detail::parse_int<std::size_t>(get(key)); }
    std::uint64_t seed(const std::string& key) const { return *io::detail::parse_int<std::uint64_t>(get(key)); }
    bool flag(const std::string& key) const { return parse_bool(get(key)).value(); }
    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (auto tok : split_list(get(key))) out.push_back(*io::detail::parse_real(tok));
        return out;
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    SynthSpec synth_spec() const {
        SynthSpec s;
        s.num_nodes = count("synth.n");
        s.num_classes = count("synth.C");
        s.p_in = real("synth.p_in");
        s.p_out = real("synth.p_out");
        s.dim = count("synth.d");
        s.attr_signal = real("synth.attr_signal");
        s.seed = seed("synth.seed");
        return s;
    }

    NoiseSpec noise_spec() const {
        NoiseSpec n;
        const auto& kind = get("noise.kind");
        n.kind = kind == "uniform" ? NoiseKind::Uniform : kind == "pair" ? NoiseKind::Pair : NoiseKind::None;
        n.rate = real("noise.rate");
        n.seed = seed("noise.seed");
        for (auto tok : split_list(get("noise.pair_map"))) n.pair_map.push_back(*io::detail::parse_int<ClassId>(tok));
        return n;
    }

    /// `data.split` with `data.split_seed` folded in when the spec is a rate.
    io::SplitSpec split_spec() const {
        const auto& text = get("data.split");
        if (text.rfind("rate=", 0) == 0 && text.find("seed=") == std::string::npos) {
            return io::SplitSpec::parse(text + ",seed=" + get("data.split_seed"));
        }
        return io::SplitSpec::parse(text);
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.epochs = count("train.epochs");
        t.warmup = count("train.warmup");
        t.correction_period = count("train.period");
        t.learning_rate = real("train.lr");
        t.optimizer = get("train.optimizer") == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
        t.seed = seed("train.seed");
        t.use_contrastive = flag("train.contrastive");
        t.use_correction = flag("train.correction");
        t.encoder.num_layers = count("enc.layers");
        t.encoder.hidden_dim = count("enc.hidden");
        t.encoder.embed_dim = count("enc.embed");
        t.augment.edge_drop_prob = real("aug.edge_drop");
        t.augment.attr_mask_prob = real("aug.attr_mask");
        t.loss.temperature = real("loss.tau");
        t.loss.contrastive_weight = real("loss.contrastive_weight");
        t.correction.gamma = real("corr.gamma");
        t.correction.omega = real("corr.omega");
        return t;
    }

    ProtocolSpec protocol_spec() const {
        ProtocolSpec p;
        p.split = split_spec();
        p.noise = noise_spec();
        p.num_runs = count("train.runs");
        p.jobs = count("train.jobs");
        return p;
    }

    /// Cross-key invariants; per-key syntax was checked by set().
    void validate() const {
        const auto t = train_config();
        if (t.warmup > t.epochs) throw ConfigError("train.warmup", "must not exceed train.epochs");
        const auto s = synth_spec();
        if (!(s.p_in > s.p_out)) throw ConfigError("synth.p_in", "must exceed synth.p_out");
        if (s.num_classes > s.num_nodes) throw ConfigError("synth.C", "exceeds synth.n");
        const auto n = noise_spec();
        if (!n.pair_map.empty()) {
            try {
                validate_pair_map(n.pair_map, n.pair_map.size());
            } catch (const ContractError& e) {
                throw ConfigError("noise.pair_map", e.what());
            }
        }
        split_spec();
    }

    /// Serializes every key in sorted order (the effective configuration).
    std::string dump() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
        return os.str();
    }

private:
    using Check = std::function<void(const std::string&, const std::string&)>;
    struct KeySpec {
        std::string name;
        std::string fallback;
        Check check;
    };

    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    static std::vector<std::string_view> split_list(std::string_view s) {
        std::vector<std::string_view> out;
        if (trim(s).empty()) return out;
        while (true) {
            auto comma = s.find(',');
            out.push_back(trim(s.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            s.remove_prefix(comma + 1);
        }
        return out;
    }

    static std::optional<bool> parse_bool(std::string_view v) {
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        return std::nullopt;
    }

    static Check real_in(double lo, double hi, bool lo_open = false, bool hi_open = false) {
        return [=](const std::string& key, const std::string& v) {
            auto x = io::detail::parse_real(v);
            if (!x) throw ConfigError(key, "expected a number, got '" + v + "'");
            const bool ok_lo = lo_open ? *x > lo : *x >= lo;
            const bool ok_hi = hi_open ? *x < hi : *x <= hi;
            if (!ok_lo || !ok_hi) {
                std::ostringstream os;
                os << "value " << *x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
                throw ConfigError(key, os.str());
            }
        };
    }

    static Check integer(std::size_t min) {
        return [=](const std::string& key, const std::string& v) {
            auto x = io::detail::parse_int<std::size_t>(v);
            if (!x) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
            if (*x < min) throw ConfigError(key, "must be at least " + std::to_string(min));
        };
    }

    static Check seed_value() {
        return [](const std::string& key, const std::string& v) {
            if (!io::detail::parse_int<std::uint64_t>(v)) throw ConfigError(key, "expected a non-negative integer seed");
        };
    }

    static Check one_of(std::vector<std::string> options) {
        return [options = std::move(options)](const std::string& key, const std::string& v) {
            if (std::find(options.begin(), options.end(), v) == options.end()) {
                std::string all;
                for (const auto& o : options) all += (all.empty() ? "" : "|") + o;
                throw ConfigError(key, "expected one of " + all + ", got '" + v + "'");
            }
        };
    }

    static Check boolean() {
        return [](const std::string& key, const std::string& v) {
            if (!parse_bool(v)) throw ConfigError(key, "expected true or false, got '" + v + "'");
        };
    }

    static Check any_text() {
        return [](const std::string&, const std::string&) {};
    }

    static Check real_list(double lo, double hi, bool lo_open) {
        return [=](const std::string& key, const std::string& v) {
            auto each = real_in(lo, hi, lo_open);
            auto items = split_list(v);
            if (items.empty()) throw ConfigError(key, "expected a comma-separated list");
            for (auto tok : items) each(key, std::string(tok));
        };
    }

    static Check int_list() {
        return [](const std::string& key, const std::string& v) {
            for (auto tok : split_list(v)) {
                if (!io::detail::parse_int<ClassId>(tok)) throw ConfigError(key, "expected comma-separated class ids");
            }
        };
    }

    static Check split_text() {
        return [](const std::string& key, const std::string& v) {
            try {
                io::SplitSpec::parse(v);
            } catch (const ConfigError& e) {
                throw ConfigError(key, e.what());
            }
        };
    }

    static const std::vector<KeySpec>& schema() {
        static const std::vector<KeySpec> keys = {
            {"out_dir", "out", any_text()},
            {"synth.n", "400", integer(1)},
            {"synth.C", "4", integer(1)},
            {"synth.p_in", "0.08", real_in(0, 1)},
            {"synth.p_out", "0.01", real_in(0, 1)},
            {"synth.d", "16", integer(1)},
            {"synth.attr_signal", "1.0", real_in(0, 1e6)},
            {"synth.seed", "0", seed_value()},
            {"noise.kind", "uniform", one_of({"none", "uniform", "pair"})},
            {"noise.rate", "0.2", real_in(0, 1)},
            {"noise.seed", "0", seed_value()},
            {"noise.pair_map", "", int_list()},
            {"data.dir", "", any_text()},
            {"data.split", "rate=0.01", split_text()},
            {"data.split_seed", "0", seed_value()},
            {"enc.layers", "3", integer(1)},
            {"enc.hidden", "256", integer(1)},
            {"enc.embed", "0", integer(0)},
            {"aug.edge_drop", "0.2", real_in(0, 1)},
            {"aug.attr_mask", "0.2", real_in(0, 1)},
            {"loss.tau", "0.5", real_in(0, 1e6, true)},
            {"loss.contrastive_weight", "1.0", real_in(0, 1e6)},
            {"corr.gamma", "0.8", real_in(-1, 1, true)},
            {"corr.omega", "0.8", real_in(0, 1)},
            {"train.epochs", "300", integer(1)},
            {"train.warmup", "100", integer(1)},
            {"train.period", "20", integer(1)},
            {"train.lr", "0.01", real_in(0, 1e6)},
            {"train.optimizer", "adam", one_of({"adam", "sgd"})},
            {"train.seed", "0", seed_value()},
            {"train.runs", "5", integer(1)},
            {"train.jobs", "1", integer(1)},
            {"train.contrastive", "true", boolean()},
            {"train.correction", "true", boolean()},
            {"sweep.gamma", "0.6,0.7,0.8,0.9,0.95", real_list(-1, 1, true)},
            {"sweep.omega", "0.6,0.7,0.8,0.9,0.95", real_list(0, 1, false)},
            {"eval.checkpoint", "", any_text()},
        };
        return keys;
    }

    static const KeySpec* find(const std::string& key) {
        for (const auto& k : schema()) {
            if (k.name == key) return &k;
        }
        return nullptr;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace cgnn
