#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sspe/encoder.hpp"
#include "sspe/pos_embed.hpp"

namespace sspe {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian fp64");

constexpr char kCheckpointMagic[8] = {'S', 'S', 'P', 'E', 'V', 'I', 'T', '1'};

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated");
    return v;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
    write_u64(out, m.rows);
    write_u64(out, m.cols);
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

inline Matrix read_matrix(std::istream& in) {
    const std::uint64_t rows = read_u64(in);
    const std::uint64_t cols = read_u64(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated matrix payload");
    return m;
}

}  // namespace detail

// Layout: magic, u64 JSON byte count, config record (canonical JSON), u64
// matrix count, then all matrices in declaration order (the position table
// first, then every encoder matrix) as little-endian fp64. Bit-exact.
inline void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                            const ModelState& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, 8);

    nlohmann::json full = meta;
    full["model"] = {{"patch_dim", m.params.patch_dim},
                     {"d", m.params.d},
                     {"heads", m.params.heads},
                     {"depth", m.params.depth},
                     {"mlp_hidden", m.params.mlp_hidden},
                     {"pe_kind", to_string(m.pe.kind)},
                     {"pe_grid_rows", m.pe.grid_rows},
                     {"pe_grid_cols", m.pe.grid_cols},
                     {"pe_trainable", m.pe_trainable}};
    const std::string blob = full.dump();
    detail::write_u64(out, blob.size());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    std::uint64_t count = 1;  // the position table row is always present
    m.params.for_each([&count](const Matrix&) { ++count; });
    detail::write_u64(out, count);
    detail::write_matrix(out, m.pe.table);
    m.params.for_each([&out](const Matrix& mat) { detail::write_matrix(out, mat); });
    if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

struct LoadedCheckpoint {
    nlohmann::json meta;
    ModelState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint64_t blob_len = detail::read_u64(in);
    std::string blob(blob_len, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(blob_len));
    if (!in) throw std::runtime_error("checkpoint: truncated config record");

    LoadedCheckpoint out;
    out.meta = nlohmann::json::parse(blob);
    const auto& model = out.meta.at("model");

    EncoderParams skeleton;
    skeleton.patch_dim = model.at("patch_dim").get<int>();
    skeleton.d = model.at("d").get<int>();
    skeleton.heads = model.at("heads").get<int>();
    skeleton.depth = model.at("depth").get<int>();
    skeleton.mlp_hidden = model.at("mlp_hidden").get<int>();
    skeleton.blocks.resize(static_cast<std::size_t>(skeleton.depth));
    out.state.params = skeleton;
    out.state.pe.kind = pe_kind_from_string(model.at("pe_kind").get<std::string>());
    out.state.pe.grid_rows = model.at("pe_grid_rows").get<int>();
    out.state.pe.grid_cols = model.at("pe_grid_cols").get<int>();
    out.state.pe_trainable = model.at("pe_trainable").get<bool>();

    const std::uint64_t count = detail::read_u64(in);
    std::uint64_t expected = 1;
    out.state.params.for_each([&expected](const Matrix&) { ++expected; });
    if (count != expected) throw std::runtime_error("checkpoint: matrix count mismatch");
    out.state.pe.table = detail::read_matrix(in);
    out.state.params.for_each([&in](Matrix& mat) { mat = detail::read_matrix(in); });
    return out;
}

}  // namespace sspe
