#pragma once

#include <string>

#include "core/flow_field.hpp"

namespace flowseed::io {

// Middlebury .flo: float 202021.25 magic, int32 width/height, then
// interleaved (u, v) float32 pairs in row order. All fields little-endian
// regardless of host. In-memory double fields are narrowed to float32 on
// write; a round trip therefore preserves every sample at float32 precision
// bit-exactly.
FlowField flo_read(const std::string& path);
void flo_write(const FlowField& flow, const std::string& path);

}  // namespace flowseed::io
