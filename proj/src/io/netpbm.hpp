#pragma once

#include <string>

#include "core/image.hpp"

namespace flowseed::io {

// Binary netpbm only (P5 grayscale, P6 color), maxval 255. Reads map bytes
// to [0, 1] via v/255; writes round half-up. ASCII variants are rejected.
Image pgm_read(const std::string& path);
void pgm_write(const Image& img, const std::string& path);
void ppm_write(const RgbImage& img, const std::string& path);

}  // namespace flowseed::io
