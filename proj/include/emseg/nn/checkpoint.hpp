#pragma once

#include <filesystem>

#include "emseg/nn/network.hpp"

namespace emseg::nn {

struct Checkpoint {
    NetworkSpec spec;
    ModelState state;
};

/// `EMSEG-CKPT v1` header, text network descriptor, then parameters, first
/// and second moments as u64-length-prefixed little-endian float32 arrays.
void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const ModelState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace emseg::nn
