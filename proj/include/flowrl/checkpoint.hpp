#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowrl/nn.hpp"

namespace flowrl {

// Named parameter blocks serialized as a plain-text shape manifest followed
// by a flat little-endian float64 stream (per net: each layer's weight
// row-major, then its bias).
struct Checkpoint {
    std::vector<std::pair<std::string, MlpParams>> nets;

    void add(const std::string& name, const MlpParams& params);
    const MlpParams* find(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace flowrl
