#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cgnn/error.hpp"
#include "cgnn/graph.hpp"

namespace cgnn::io {

namespace fs = std::filesystem;

// Canonical file names inside a dataset directory.
inline constexpr const char* kGraphFile = "graph.txt";
inline constexpr const char* kAttrFile = "attrs.bin";
inline constexpr const char* kLabelFile = "labels.txt";
inline constexpr const char* kCleanFile = "labels.clean";
inline constexpr const char* kSplitFile = "split.txt";
inline constexpr const char* kClassesSuffix = ".classes";
inline constexpr std::array<char, 4> kAttrMagic{'N', 'N', 'A', '1'};

namespace detail {

inline std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool is_skippable(const std::vector<std::string_view>& tok) {
    return tok.empty() || tok.front().front() == '#';
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<double> parse_real(std::string_view s) {
    // from_chars for floating point is available in libstdc++ 11.
    double v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

template <class U>
void put_le(std::ostream& out, U v) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> buf;
    for (std::size_t b = 0; b < sizeof(U); ++b) buf[b] = static_cast<char>((v >> (8 * b)) & 0xff);
    out.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& in, const std::string& what) {
    std::array<unsigned char, sizeof(U)> buf;
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError("truncated " + what);
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(buf[b]) << (8 * b);
    return v;
}

inline void put_f32(std::ostream& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}

}  // namespace detail

struct GraphFile {
    Graph graph;
    std::size_t self_loops_dropped = 0;
};

/// Edge-list text: `u v` per line, `#` comments, optional `N <count>` header.
inline GraphFile read_graph(std::istream& in) {
    std::vector<Edge> edges;
    std::optional<std::size_t> header;
    std::int64_t max_id = -1;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::tokenize(line);
        if (detail::is_skippable(tok)) continue;
        if (tok[0] == "N") {
            auto n = tok.size() == 2 ? detail::parse_int<std::size_t>(tok[1]) : std::nullopt;
            if (!n) throw ParseError("malformed node-count header", lineno);
            if (header || !edges.empty()) throw ParseError("node-count header must come first", lineno);
            header = *n;
            continue;
        }
        if (tok.size() != 2) throw ParseError("expected two node ids", lineno);
        auto u = detail::parse_int<std::int64_t>(tok[0]);
        auto v = detail::parse_int<std::int64_t>(tok[1]);
        if (!u || !v) throw ParseError("node ids must be integers", lineno);
        if (*u < 0 || *v < 0 || (header && (*u >= static_cast<std::int64_t>(*header) ||
                                            *v >= static_cast<std::int64_t>(*header)))) {
            throw ValidationError("node id out of range on line " + std::to_string(lineno));
        }
        if (*u > std::numeric_limits<NodeId>::max() || *v > std::numeric_limits<NodeId>::max()) {
            throw ValidationError("node id too large on line " + std::to_string(lineno));
        }
        max_id = std::max({max_id, *u, *v});
        edges.emplace_back(static_cast<NodeId>(*u), static_cast<NodeId>(*v));
    }
    const std::size_t n = header ? *header : static_cast<std::size_t>(max_id + 1);
    GraphFile out;
    out.graph = Graph::from_edges(n, edges, &out.self_loops_dropped);
    return out;
}

inline GraphFile read_graph(const fs::path& path) {
    auto in = detail::open_in(path);
    return read_graph(in);
}

inline void write_graph(std::ostream& out, const Graph& g) {
    out << "N " << g.num_nodes() << '\n';
    for (const auto& [u, v] : g.undirected_edges()) out << u << ' ' << v << '\n';
}

inline void write_graph(const fs::path& path, const Graph& g) {
    auto out = detail::open_out(path);
    write_graph(out, g);
    if (!out) throw IoError("failed writing " + path.string());
}

/// Binary `NNA1` attributes, or CSV when the path ends in `.csv`.
inline AttributeMatrix read_attributes(const fs::path& path) {
    if (path.extension() == ".csv") {
        auto in = detail::open_in(path);
        std::vector<float> values;
        std::size_t cols = 0, rows = 0, lineno = 0;
        std::string line;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::size_t count = 0;
            std::string_view rest(line);
            while (true) {
                auto comma = rest.find(',');
                auto field = rest.substr(0, comma);
                while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front()))) field.remove_prefix(1);
                while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
                auto v = detail::parse_real(field);
                if (!v) throw ParseError("bad attribute value '" + std::string(field) + "'", lineno);
                values.push_back(static_cast<float>(*v));
                ++count;
                if (comma == std::string_view::npos) break;
                rest.remove_prefix(comma + 1);
            }
            if (rows == 0) cols = count;
            if (count != cols) throw ParseError("attribute row has " + std::to_string(count) +
                                                " values, expected " + std::to_string(cols), lineno);
            ++rows;
        }
        return AttributeMatrix(rows, cols, std::move(values));
    }
    auto in = detail::open_in(path, std::ios::binary);
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kAttrMagic) throw ParseError("attribute file lacks NNA1 magic", 1);
    const auto rows = detail::get_le<std::uint64_t>(in, "attribute header");
    const auto cols = detail::get_le<std::uint64_t>(in, "attribute header");
    AttributeMatrix x(rows, cols);
    for (auto& v : x.values()) v = detail::get_f32(in, "attribute payload");
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after attribute payload", 1);
    return x;
}

inline void write_attributes(const fs::path& path, const AttributeMatrix& x) {
    if (path.extension() == ".csv") {
        auto out = detail::open_out(path);
        out.precision(9);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < x.cols(); ++c) out << (c ? "," : "") << x(r, c);
            out << '\n';
        }
        return;
    }
    auto out = detail::open_out(path, std::ios::binary);
    out.write(kAttrMagic.data(), kAttrMagic.size());
    detail::put_le<std::uint64_t>(out, x.rows());
    detail::put_le<std::uint64_t>(out, x.cols());
    for (float v : x.values()) detail::put_f32(out, v);
    if (!out) throw IoError("failed writing " + path.string());
}

/// Raw `node_id class_token` records, tokens not yet mapped to ids.
struct LabelRecords {
    std::vector<std::pair<NodeId, std::string>> entries;
};

inline LabelRecords read_label_records(const fs::path& path) {
    auto in = detail::open_in(path);
    LabelRecords rec;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::tokenize(line);
        if (detail::is_skippable(tok)) continue;
        if (tok.size() != 2) throw ParseError("expected `node_id class_id`", lineno);
        auto id = detail::parse_int<std::int64_t>(tok[0]);
        if (!id) throw ParseError("node id must be an integer", lineno);
        if (*id < 0 || *id > std::numeric_limits<NodeId>::max()) {
            throw ValidationError("label node id out of range on line " + std::to_string(lineno));
        }
        rec.entries.emplace_back(static_cast<NodeId>(*id), std::string(tok[1]));
    }
    return rec;
}

/// Maps class tokens to dense ids. All-integer tokens are used as-is; any
/// non-integer token switches to first-seen order (or to a sidecar mapping).
class ClassMapper {
public:
    explicit ClassMapper(std::vector<std::string> fixed_names = {}) : names_(std::move(fixed_names)) {
        for (std::size_t k = 0; k < names_.size(); ++k) index_[names_[k]] = static_cast<ClassId>(k);
        fixed_ = !names_.empty();
        symbolic_ = fixed_;
    }

    void observe(const std::vector<const LabelRecords*>& sources) {
        if (fixed_) return;
        for (auto* src : sources) {
            for (const auto& [node, tok] : src->entries) {
                if (!detail::parse_int<ClassId>(tok) || tok.front() == '-') symbolic_ = true;
            }
        }
        if (!symbolic_) return;
        for (auto* src : sources) {
            for (const auto& [node, tok] : src->entries) {
                if (index_.emplace(tok, static_cast<ClassId>(names_.size())).second) names_.push_back(tok);
            }
        }
    }

    ClassId map(const std::string& tok) const {
        if (!symbolic_) return *detail::parse_int<ClassId>(tok);
        auto it = index_.find(tok);
        if (it == index_.end()) throw ValidationError("class token '" + tok + "' missing from mapping");
        return it->second;
    }

    bool symbolic() const noexcept { return symbolic_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, ClassId> index_;
    bool fixed_ = false;
    bool symbolic_ = false;
};

/// `rate=<float>,seed=<int>`, a path to explicit `node_id {train|test}` lines,
/// or none (no masks; the caller splits later).
struct SplitSpec {
    enum class Kind { None, Rate, File } kind = Kind::None;
    double rate = 0.0;
    std::uint64_t seed = 0;
    fs::path path;

    static SplitSpec none() { return {}; }
    static SplitSpec with_rate(double rate, std::uint64_t seed) { return {Kind::Rate, rate, seed, {}}; }
    static SplitSpec from_file(fs::path p) { return {Kind::File, 0.0, 0, std::move(p)}; }

    static SplitSpec parse(const std::string& text) {
        if (text.empty() || text == "none") return none();
        if (text.rfind("rate=", 0) != 0) return from_file(text);
        SplitSpec spec{Kind::Rate, 0.0, 0, {}};
        bool have_rate = false;
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ',')) {
            auto eq = part.find('=');
            if (eq == std::string::npos) throw ConfigError("split", "expected key=value in '" + part + "'");
            auto key = part.substr(0, eq);
            auto value = std::string_view(part).substr(eq + 1);
            if (key == "rate") {
                auto r = detail::parse_real(value);
                if (!r || !(*r > 0.0 && *r < 1.0)) throw ConfigError("split", "rate must be in (0, 1)");
                spec.rate = *r;
                have_rate = true;
            } else if (key == "seed") {
                auto s = detail::parse_int<std::uint64_t>(value);
                if (!s) throw ConfigError("split", "seed must be a non-negative integer");
                spec.seed = *s;
            } else {
                throw ConfigError("split", "unknown split field '" + key + "'");
            }
        }
        if (!have_rate) throw ConfigError("split", "missing rate");
        return spec;
    }

    std::string to_string() const {
        switch (kind) {
            case Kind::None: return "none";
            case Kind::Rate: {
                std::ostringstream os;
                os << "rate=" << rate << ",seed=" << seed;
                return os.str();
            }
            case Kind::File: return path.string();
        }
        return {};
    }
};

inline SplitMasks read_split_file(const fs::path& path, std::size_t n) {
    auto in = detail::open_in(path);
    SplitMasks masks{std::vector<bool>(n, false), std::vector<bool>(n, false)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::tokenize(line);
        if (detail::is_skippable(tok)) continue;
        if (tok.size() != 2) throw ParseError("expected `node_id train|test`", lineno);
        auto id = detail::parse_int<std::int64_t>(tok[0]);
        if (!id) throw ParseError("node id must be an integer", lineno);
        if (*id < 0 || static_cast<std::size_t>(*id) >= n) {
            throw ValidationError("split node id out of range on line " + std::to_string(lineno));
        }
        if (tok[1] == "train") {
            masks.train[*id] = true;
        } else if (tok[1] == "test") {
            masks.test[*id] = true;
        } else {
            throw ParseError("split role must be train or test", lineno);
        }
        if (masks.train[*id] && masks.test[*id]) {
            throw ValidationError("node " + std::to_string(*id) + " is both train and test");
        }
    }
    return masks;
}

inline void write_split_file(const fs::path& path, const LabelStore& labels) {
    auto out = detail::open_out(path);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.train_mask[i]) out << i << " train\n";
        else if (labels.test_mask[i]) out << i << " test\n";
    }
}

inline void write_labels(const fs::path& path, std::span<const OptLabel> labels,
                         const std::vector<std::string>& class_names = {}) {
    auto out = detail::open_out(path);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        out << i << ' ';
        if (class_names.empty()) out << *labels[i];
        else out << class_names.at(static_cast<std::size_t>(*labels[i]));
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<std::string> read_class_names(const fs::path& path) {
    auto in = detail::open_in(path);
    std::vector<std::string> names;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::tokenize(line);
        if (detail::is_skippable(tok)) continue;
        auto id = tok.size() == 2 ? detail::parse_int<std::size_t>(tok[0]) : std::nullopt;
        if (!id || *id != names.size()) throw ParseError("class mapping must list `id name` in id order", lineno);
        names.emplace_back(tok[1]);
    }
    return names;
}

inline void write_class_names(const fs::path& path, const std::vector<std::string>& names) {
    auto out = detail::open_out(path);
    for (std::size_t k = 0; k < names.size(); ++k) out << k << ' ' << names[k] << '\n';
}

struct LoadReport {
    std::size_t self_loops_dropped = 0;
};

struct DatasetPaths {
    fs::path graph;
    fs::path attributes;
    fs::path labels;
    /// Ground-truth labels; when absent the label file doubles as ground truth.
    std::optional<fs::path> clean;

    /// Canonical layout of a directory written by write_dataset().
    static DatasetPaths in_dir(const fs::path& dir) {
        DatasetPaths p{dir / kGraphFile, dir / kAttrFile, dir / kLabelFile, std::nullopt};
        if (fs::exists(dir / kCleanFile)) p.clean = dir / kCleanFile;
        return p;
    }
};

/// Loads and validates a dataset. Observed labels come from the label file on
/// train nodes; clean labels from the clean file (or the label file).
inline Dataset load_dataset(const DatasetPaths& paths, const SplitSpec& split, LoadReport* report = nullptr) {
    auto gf = read_graph(paths.graph);
    if (report) report->self_loops_dropped = gf.self_loops_dropped;
    Dataset ds;
    ds.graph = std::move(gf.graph);
    const std::size_t n = ds.graph.num_nodes();
    ds.attributes = read_attributes(paths.attributes);
    validate_attributes(ds.attributes, n);

    auto observed_rec = read_label_records(paths.labels);
    std::optional<LabelRecords> clean_rec;
    if (paths.clean) clean_rec = read_label_records(*paths.clean);

    fs::path sidecar = paths.labels;
    sidecar += kClassesSuffix;
    ClassMapper mapper(fs::exists(sidecar) ? read_class_names(sidecar) : std::vector<std::string>{});
    std::vector<const LabelRecords*> sources{&observed_rec};
    if (clean_rec) sources.push_back(&*clean_rec);
    mapper.observe(sources);

    auto to_array = [&](const LabelRecords& rec, const fs::path& where) {
        std::vector<OptLabel> out(n);
        for (const auto& [node, tok] : rec.entries) {
            if (static_cast<std::size_t>(node) >= n) {
                throw ValidationError("label for node " + std::to_string(node) + " in " + where.string() +
                                      " exceeds node count " + std::to_string(n));
            }
            const ClassId c = mapper.map(tok);
            if (out[node] && *out[node] != c) {
                throw ValidationError("conflicting labels for node " + std::to_string(node) + " in " + where.string());
            }
            out[node] = c;
        }
        return out;
    };
    auto file_labels = to_array(observed_rec, paths.labels);
    auto clean = clean_rec ? to_array(*clean_rec, *paths.clean) : file_labels;

    std::size_t num_classes = mapper.symbolic() ? mapper.names().size() : 0;
    for (const auto* arr : {&file_labels, &clean}) {
        for (const auto& l : *arr) {
            if (l) num_classes = std::max(num_classes, static_cast<std::size_t>(*l) + 1);
        }
    }
    if (num_classes == 0) throw ValidationError("label files define no classes");

    ds.labels = LabelStore(n, num_classes);
    ds.labels.clean = clean;
    if (mapper.symbolic()) ds.class_names = mapper.names();

    switch (split.kind) {
        case SplitSpec::Kind::None: break;
        case SplitSpec::Kind::Rate: {
            auto rng = make_rng(split.seed, stream::kSplit);
            auto masks = make_split(clean, num_classes, split.rate, rng);
            ds.labels.train_mask = masks.train;
            ds.labels.test_mask = masks.test;
            break;
        }
        case SplitSpec::Kind::File: {
            auto masks = read_split_file(split.path, n);
            ds.labels.train_mask = masks.train;
            ds.labels.test_mask = masks.test;
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!ds.labels.train_mask[i]) continue;
        if (!file_labels[i]) {
            throw ValidationError("train node " + std::to_string(i) + " has no label in " + paths.labels.string());
        }
        ds.labels.observed[i] = file_labels[i];
    }
    ds.labels.working = ds.labels.observed;
    ds.validate();
    return ds;
}

/// Writes graph/attribute/label files in canonical layout. The label file holds
/// observed labels when a split exists, otherwise the clean labels.
inline void write_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    write_graph(dir / kGraphFile, ds.graph);
    write_attributes(dir / kAttrFile, ds.attributes);
    const bool has_split = std::find(ds.labels.train_mask.begin(), ds.labels.train_mask.end(), true) !=
                           ds.labels.train_mask.end();
    write_labels(dir / kLabelFile, has_split ? ds.labels.observed : ds.labels.clean, ds.class_names);
    write_labels(dir / kCleanFile, ds.labels.clean, ds.class_names);
    if (has_split) write_split_file(dir / kSplitFile, ds.labels);
    if (!ds.class_names.empty()) {
        fs::path sidecar = dir / kLabelFile;
        sidecar += kClassesSuffix;
        write_class_names(sidecar, ds.class_names);
    }
}

/// Reloads a directory produced by write_dataset().
inline Dataset load_dataset_dir(const fs::path& dir, LoadReport* report = nullptr) {
    const auto split = fs::exists(dir / kSplitFile) ? SplitSpec::from_file(dir / kSplitFile) : SplitSpec::none();
    return load_dataset(DatasetPaths::in_dir(dir), split, report);
}

}  // namespace cgnn::io
