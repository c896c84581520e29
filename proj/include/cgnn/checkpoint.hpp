#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cgnn/encoder.hpp"
#include "cgnn/error.hpp"
#include "cgnn/io.hpp"
#include "cgnn/matrix.hpp"

namespace cgnn {

inline constexpr std::array<char, 4> kCheckpointMagic{'C', 'G', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedMatrix = std::pair<std::string, Matrix<float>>;

/// Layout: magic `CGNN`, u32 version, then per parameter: u32 name length,
/// UTF-8 name, u32 rank, u64 dims, little-endian f32 payload. Row vectors are
/// stored as rank 1.
inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& params) {
    auto out = io::detail::open_out(path, std::ios::binary);
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    io::detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    for (const auto& [name, m] : params) {
        io::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        if (m.rows() == 1) {
            io::detail::put_le<std::uint32_t>(out, 1);
            io::detail::put_le<std::uint64_t>(out, m.cols());
        } else {
            io::detail::put_le<std::uint32_t>(out, 2);
            io::detail::put_le<std::uint64_t>(out, m.rows());
            io::detail::put_le<std::uint64_t>(out, m.cols());
        }
        for (float v : m.values()) io::detail::put_f32(out, v);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path) {
    auto in = io::detail::open_in(path, std::ios::binary);
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kCheckpointMagic) throw ParseError("checkpoint lacks CGNN magic", 1);
    const auto version = io::detail::get_le<std::uint32_t>(in, "checkpoint header");
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 1);
    }
    std::vector<NamedMatrix> out;
    while (in.peek() != std::char_traits<char>::eof()) {
        const auto len = io::detail::get_le<std::uint32_t>(in, "parameter name");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) throw IoError("truncated parameter name");
        const auto rank = io::detail::get_le<std::uint32_t>(in, "parameter rank");
        if (rank < 1 || rank > 2) throw ParseError("parameter " + name + " has rank " + std::to_string(rank), 1);
        std::uint64_t rows = 1, cols = 0;
        if (rank == 2) rows = io::detail::get_le<std::uint64_t>(in, "parameter dims");
        cols = io::detail::get_le<std::uint64_t>(in, "parameter dims");
        Matrix<float> m(rows, cols);
        for (auto& v : m.values()) v = io::detail::get_f32(in, "parameter payload");
        out.emplace_back(std::move(name), std::move(m));
    }
    return out;
}

template <class T>
std::vector<NamedMatrix> export_params(const ModelParams<T>& params) {
    std::vector<NamedMatrix> out;
    for (const auto& [name, t] : params.named()) out.emplace_back(name, t.value().template cast<float>());
    return out;
}

/// Rebuilds ModelParams from checkpoint entries, inferring layer counts from names.
template <class T>
ModelParams<T> import_params(const std::vector<NamedMatrix>& entries) {
    ModelParams<T> p;
    auto find = [&](const std::string& name) -> const Matrix<float>* {
        for (const auto& [n, m] : entries) {
            if (n == name) return &m;
        }
        return nullptr;
    };
    auto take = [&](const std::string& name) {
        const auto* m = find(name);
        if (!m) throw ValidationError("checkpoint is missing " + name);
        return Tensor<T>::parameter(m->template cast<T>());
    };
    for (std::size_t k = 0; find("enc.k." + std::to_string(k) + ".w"); ++k) {
        p.layer_weights.push_back(take("enc.k." + std::to_string(k) + ".w"));
        p.layer_biases.push_back(take("enc.k." + std::to_string(k) + ".b"));
    }
    for (std::size_t k = 0; k < 2; ++k) {
        p.head_weights.push_back(take("head." + std::to_string(k) + ".w"));
        p.head_biases.push_back(take("head." + std::to_string(k) + ".b"));
    }
    if (p.layer_weights.empty()) throw ValidationError("checkpoint has no encoder layers");
    if (entries.size() != 2 * (p.layer_weights.size() + 2)) throw ValidationError("checkpoint has unexpected entries");
    return p;
}

}  // namespace cgnn
