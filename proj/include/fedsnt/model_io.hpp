#pragma once

#include <filesystem>

#include "fedsnt/core.hpp"

namespace fedsnt {

// "FEDSNT01", uint32 little-endian dim, then dim little-endian float64 values.
void save_model(const std::filesystem::path& path, const ParameterVector& model);
ParameterVector load_model(const std::filesystem::path& path);

}  // namespace fedsnt
