#pragma once

#include <filesystem>

#include "gdvm/model.hpp"

namespace gdvm {

// Binary checkpoint: 8-byte magic, u32 version, length-prefixed model-spec
// JSON, then the named parameter arrays with shapes and raw little-endian
// doubles. Round-trips are bit-exact in double precision.
void save_checkpoint(const std::filesystem::path& path, const GdvmModel& model);
GdvmModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gdvm
