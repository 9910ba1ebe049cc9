#include "gapnp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gapnp::ad {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'P', 'N', 'P', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = kFormatVersion;
    header["seed"] = ckpt.seed;
    header["step"] = ckpt.step;
    header["metadata"] = ckpt.metadata;
    header["params"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.params.items()) {
        header["params"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size();
    }
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, t] : ckpt.params.items()) {
        out.write(reinterpret_cast<const char*>(t.storage().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw CheckpointError("not a checkpoint file: " + path.string());
    }
    const std::uint64_t header_len = read_u64(in);
    if (!in || header_len > (1u << 26)) throw CheckpointError("corrupt checkpoint header length");
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw CheckpointError("truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (header.value("format", 0) != kFormatVersion) {
        throw CheckpointError("unsupported checkpoint format version");
    }

    Checkpoint ckpt;
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("params")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
            throw CheckpointError("checkpoint parameter '" + name + "' has an unexpected offset");
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.storage().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw CheckpointError("truncated values for parameter '" + name + "'");
        expected_offset += t.size();
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace gapnp::ad
