#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "gapnp/autodiff.hpp"

namespace gapnp::ad {

/// Raised when a checkpoint cannot be read or does not match expectations.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    ParameterSet params;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    nlohmann::json metadata = nlohmann::json::object();
};

// Layout (see docs/formats.md):
//   8 bytes   magic "GAPNPCK1"
//   8 bytes   header length N, little-endian uint64
//   N bytes   UTF-8 JSON header {format, seed, step, metadata, params:[{name, shape, offset}]}
//   rest      parameter values as little-endian IEEE-754 float64, in header order
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gapnp::ad
