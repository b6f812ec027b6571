#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "scaleformer/autodiff.hpp"

namespace scaleformer {

inline constexpr const char* kCheckpointVersion = "scaleformer-ckpt-v1";

// Layout: the version tag on its own line, a one-line JSON header
// {"meta": ..., "tensors": [{"name", "shape"}...]}, then every tensor's
// entries as little-endian IEEE-754 doubles in header order.
struct Checkpoint {
    ParameterSet params;
    nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from `src` into the same-named, same-shaped entries of `dst`.
void assign_parameters(ParameterSet& dst, const ParameterSet& src);

}  // namespace scaleformer
