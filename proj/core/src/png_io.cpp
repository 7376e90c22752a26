#include "metahdr/png_io.hpp"

#include "metahdr/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace metahdr {

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
        throw Error("cannot read PNG " + path.string() + ": " + png.message);
    }
    // 16-bit files are read as they are stored; asking for 8-bit output would
    // push them through the sRGB curve.
    const bool wide = (png.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    png.format = wide ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&png);
        throw Error("cannot decode PNG " + path.string() + ": " + png.message);
    }
    const int w = static_cast<int>(png.width), h = static_cast<int>(png.height);
    Image img(3, h, w);
    const std::size_t plane = img.pixels();
    if (wide) {
        const auto* samples = reinterpret_cast<const png_uint_16*>(buffer.data());
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) img.data[c * plane + i] = samples[3 * i + c] / 65535.0f;
    } else {
        for (std::size_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c) img.data[c * plane + i] = buffer[3 * i + c] / 255.0f;
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 3) throw DimensionError("write_png: need a 3-channel image");
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    const std::size_t plane = image.pixels();
    std::vector<png_byte> buffer(plane * 3);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(image.data[c * plane + i], 0.0f, 1.0f);
            buffer[3 * i + c] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
        throw Error("cannot write PNG " + path.string() + ": " + png.message);
    }
}

Image display_preview(const Image& hdr_normalized, double gamma) {
    Image out = hdr_normalized;
    const float inv = static_cast<float>(1.0 / gamma);
    for (auto& v : out.data) v = std::pow(std::clamp(v, 0.0f, 1.0f), inv);
    return out;
}

}  // namespace metahdr
