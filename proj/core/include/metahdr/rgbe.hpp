#pragma once

// Radiance RGBE (.hdr) picture codec.
//
// Supported: "#?RADIANCE" / "#?RGBE" magic, FORMAT=32-bit_rle_rgbe (or no
// FORMAT line), a "-Y <height> +X <width>" resolution line, and flat,
// old-style run-length or adaptive run-length scanlines. A quadruple
// (r, g, b, e) with e > 0 decodes to (byte + 0.5) / 256 * 2^(e - 128) per
// channel; e = 0 is black.

#include "metahdr/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace metahdr {

/// Largest accepted width or height.
inline constexpr int kMaxRgbeExtent = 32768;
/// Largest accepted pixel count.
inline constexpr std::int64_t kMaxRgbePixels = std::int64_t{1} << 27;

/// Throws ParseError (with byte offset) on malformed input.
Image decode_rgbe(std::span<const std::uint8_t> bytes);
/// Encodes a 3-channel image; negative values are stored as 0.
std::vector<std::uint8_t> encode_rgbe(const Image& image);

/// Shared-exponent quantization of one pixel (exposed for tests).
std::array<std::uint8_t, 4> rgbe_from_float(float r, float g, float b);
std::array<float, 3> float_from_rgbe(std::array<std::uint8_t, 4> rgbe);

Image read_rgbe_file(const std::filesystem::path& path);
void write_rgbe_file(const std::filesystem::path& path, const Image& image);

}  // namespace metahdr
