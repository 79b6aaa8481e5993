#pragma once

#include "illusion/raster.hpp"

#include <filesystem>

namespace illusion {

/// Writes an 8-bit RGB PNG. Output bytes are a pure function of the image.
void write_png(const RasterImage& img, const std::filesystem::path& path);

/// Reads any 8-bit PNG and expands it to RGB (gray is replicated, alpha dropped).
RasterImage read_png(const std::filesystem::path& path);

}  // namespace illusion
