#pragma once

#include <filesystem>

#include "gasfusion/model.hpp"

namespace gasfusion {

// Model container: "GFMB" magic + format version, a JSON header carrying the
// kind, specs and training metadata, then each parameter tensor as explicit
// extents plus little-endian IEEE-754 doubles. Round-trips bit-exactly.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

} // namespace gasfusion
