#pragma once

#include "metahdr/image.hpp"

#include <filesystem>

namespace metahdr {

/// Reads a PNG as a 3-channel image in [0, 1]: samples divided by 255, or by
/// 65535 for 16-bit files.
/// Grey and alpha inputs are converted to RGB.
Image read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

/// Display preview of a normalized HDR image: clamp to [0, 1], then ^(1/gamma).
Image display_preview(const Image& hdr_normalized, double gamma = 2.2);

}  // namespace metahdr
