#pragma once

#include "vsm/image.hpp"

#include <string>

namespace vsm {

// Readers/writers for 8-bit PNG (gray or RGB) and binary PGM/PPM (maxval 255).
// Values are quantized v -> round(v*255)/255 on save, so save/load round-trips
// exactly on 8-bit-representable images. Dispatch is by file extension.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// Masks serialize as PGM with values {0,255}; the loader rejects anything else.
Mask load_mask(const std::string& path);
void save_mask(const Mask& m, const std::string& path);

}  // namespace vsm
