#pragma once

#include <string>

#include "dea/image.hpp"

namespace dea {

// PNG (8-bit gray/RGB/RGBA, non-interlaced) and binary PGM/PPM.
// Format is detected from magic bytes on read and from the extension on write.
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);  // quantizes to 8-bit

}  // namespace dea
