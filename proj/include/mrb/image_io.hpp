#pragma once

#include <string>

#include "mrb/tensor.hpp"

namespace mrb {

// 8-bit sources decode to [0,1] via v/255. Supported: PPM (P6), PGM (P5), PNG
// (8-bit gray/RGB/RGBA; alpha dropped).
Image load_image(const std::string& path);

// Writers quantize with round-to-nearest after clipping to [0,1].
void save_ppm(const std::string& path, const Image& img);

// BT.601 luma; returns {H,W,1}.
Image to_luma(const Image& img);

}  // namespace mrb
