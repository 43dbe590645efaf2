#pragma once

#include <string>

#include "maskcon/model.hpp"

namespace maskcon {

// "MKCN" container: magic, u32 format version, u32 tensor count, then per
// tensor a u32 name length + UTF-8 name, u32 ndim, u32 dims, f64
// little-endian payload. Tensors are written in named_tensors order, so
// save -> load -> save round-trips byte-identically.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace maskcon
