#include "metahdr/rgbe.hpp"

#include "metahdr/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace metahdr {

std::array<std::uint8_t, 4> rgbe_from_float(float r, float g, float b) {
    r = std::max(r, 0.0f);
    g = std::max(g, 0.0f);
    b = std::max(b, 0.0f);
    const float v = std::max({r, g, b});
    if (v < 1e-32f) return {0, 0, 0, 0};
    int e = 0;
    const double m = std::frexp(static_cast<double>(v), &e);
    if (e + 128 > 255) return {255, 255, 255, 255};
    if (e + 128 < 1) return {0, 0, 0, 0};
    const double s = m * 256.0 / v;
    auto q = [s](float c) { return static_cast<std::uint8_t>(std::min(255.0, std::floor(c * s))); };
    return {q(r), q(g), q(b), static_cast<std::uint8_t>(e + 128)};
}

std::array<float, 3> float_from_rgbe(std::array<std::uint8_t, 4> p) {
    if (p[3] == 0) return {0.0f, 0.0f, 0.0f};
    const int shift = static_cast<int>(p[3]) - (128 + 8);
    return {static_cast<float>(std::ldexp(p[0] + 0.5, shift)), static_cast<float>(std::ldexp(p[1] + 0.5, shift)),
            static_cast<float>(std::ldexp(p[2] + 0.5, shift))};
}

namespace {

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ >= bytes_.size(); }

    std::uint8_t byte(const char* what) {
        if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated data while reading ") + what, pos_);
        return bytes_[pos_++];
    }

    /// Reads up to (not including) '\n'. Header lines are bounded in length.
    std::string line() {
        std::string out;
        const std::size_t start = pos_;
        while (true) {
            if (pos_ >= bytes_.size()) throw ParseError("truncated header", start);
            const char c = static_cast<char>(bytes_[pos_++]);
            if (c == '\n') return out;
            out.push_back(c);
            if (out.size() > 4096) throw ParseError("header line too long", start);
        }
    }

    std::uint8_t peek(std::size_t ahead) const {
        return pos_ + ahead < bytes_.size() ? bytes_[pos_ + ahead] : 0;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

struct Resolution {
    int height = 0;
    int width = 0;
};

Resolution parse_resolution(std::string text, std::size_t offset) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    char ysign = 0, yaxis = 0, xsign = 0, xaxis = 0;
    long long h = 0, w = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), " %c%c %lld %c%c %lld%n", &ysign, &yaxis, &h, &xsign, &xaxis, &w, &consumed) != 6 ||
        static_cast<std::size_t>(consumed) != text.size()) {
        throw ParseError("malformed resolution line '" + text + "'", offset);
    }
    if (ysign != '-' || yaxis != 'Y' || xsign != '+' || xaxis != 'X') {
        throw ParseError("unsupported scanline orientation '" + text + "' (only -Y H +X W)", offset);
    }
    if (h <= 0 || w <= 0) throw ParseError("non-positive image dimensions", offset);
    if (h > kMaxRgbeExtent || w > kMaxRgbeExtent || h * w > kMaxRgbePixels) {
        throw ParseError("image dimensions " + std::to_string(w) + "x" + std::to_string(h) + " exceed limits", offset);
    }
    return {static_cast<int>(h), static_cast<int>(w)};
}

// Flat scanline, with the old run-length convention: (1,1,1,n) repeats the
// previous pixel n << shift times, consecutive repeat markers shifting by 8.
void read_flat_scanline(Reader& in, std::uint8_t* row, int width) {
    int x = 0;
    int shift = 0;
    while (x < width) {
        const std::size_t at = in.offset();
        std::array<std::uint8_t, 4> p{};
        for (auto& v : p) v = in.byte("scanline pixel");
        if (p[0] == 1 && p[1] == 1 && p[2] == 1) {
            if (x == 0) throw ParseError("run-length repeat before first pixel", at);
            const long long count = static_cast<long long>(p[3]) << shift;
            if (count > width - x) throw ParseError("run-length repeat overruns scanline", at);
            for (long long k = 0; k < count; ++k, ++x) std::memcpy(row + 4 * x, row + 4 * (x - 1), 4);
            shift += 8;
            if (shift > 24) throw ParseError("run-length repeat count overflow", at);
        } else {
            std::memcpy(row + 4 * x, p.data(), 4);
            ++x;
            shift = 0;
        }
    }
}

void read_rle_scanline(Reader& in, std::uint8_t* row, int width) {
    const std::size_t start = in.offset();
    in.byte("scanline marker");
    in.byte("scanline marker");
    const int encoded_width = (in.byte("scanline width") << 8) | in.byte("scanline width");
    if (encoded_width != width) throw ParseError("scanline width does not match resolution", start);
    std::vector<std::uint8_t> channel(static_cast<std::size_t>(width));
    for (int c = 0; c < 4; ++c) {
        int x = 0;
        while (x < width) {
            const std::size_t at = in.offset();
            int count = in.byte("run header");
            if (count > 128) {
                count -= 128;
                if (count > width - x) throw ParseError("run overruns scanline", at);
                const std::uint8_t value = in.byte("run value");
                std::fill_n(channel.begin() + x, count, value);
            } else {
                if (count == 0 || count > width - x) throw ParseError("bad literal run length", at);
                for (int k = 0; k < count; ++k) channel[static_cast<std::size_t>(x + k)] = in.byte("literal run");
            }
            x += count;
        }
        for (int i = 0; i < width; ++i) row[4 * i + c] = channel[static_cast<std::size_t>(i)];
    }
}

void append_rle_channel(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& v) {
    const int n = static_cast<int>(v.size());
    auto run_at = [&](int i) {
        int r = 1;
        while (i + r < n && r < 127 && v[static_cast<std::size_t>(i + r)] == v[static_cast<std::size_t>(i)]) ++r;
        return r;
    };
    int i = 0;
    while (i < n) {
        const int r = run_at(i);
        if (r >= 4) {
            out.push_back(static_cast<std::uint8_t>(128 + r));
            out.push_back(v[static_cast<std::size_t>(i)]);
            i += r;
            continue;
        }
        const int start = i;
        while (i < n && i - start < 128 && (i == start || run_at(i) < 4)) ++i;
        out.push_back(static_cast<std::uint8_t>(i - start));
        out.insert(out.end(), v.begin() + start, v.begin() + i);
    }
}

}  // namespace

Image decode_rgbe(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    const std::string magic = in.line();
    if (!magic.starts_with("#?RADIANCE") && !magic.starts_with("#?RGBE")) {
        throw ParseError("missing #?RADIANCE or #?RGBE signature", 0);
    }
    while (true) {
        const std::size_t at = in.offset();
        const std::string line = in.line();
        if (line.empty()) break;
        if (line.starts_with("FORMAT=") && line != "FORMAT=32-bit_rle_rgbe") {
            throw ParseError("unsupported pixel format '" + line.substr(7) + "'", at);
        }
        if (at > 65536) throw ParseError("header too long", at);
    }
    const std::size_t res_at = in.offset();
    const Resolution res = parse_resolution(in.line(), res_at);

    Image img(3, res.height, res.width);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(res.width) * 4);
    const std::size_t plane = img.pixels();
    for (int y = 0; y < res.height; ++y) {
        const bool rle = res.width >= 8 && res.width < 32768 && in.peek(0) == 2 && in.peek(1) == 2 &&
                         (in.peek(2) & 0x80) == 0;
        if (rle)
            read_rle_scanline(in, row.data(), res.width);
        else
            read_flat_scanline(in, row.data(), res.width);
        for (int x = 0; x < res.width; ++x) {
            const auto rgb = float_from_rgbe({row[4 * x], row[4 * x + 1], row[4 * x + 2], row[4 * x + 3]});
            const std::size_t i = static_cast<std::size_t>(y) * res.width + x;
            img.data[i] = rgb[0];
            img.data[plane + i] = rgb[1];
            img.data[2 * plane + i] = rgb[2];
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_rgbe(const Image& image) {
    if (image.channels != 3 || image.height <= 0 || image.width <= 0) {
        throw DimensionError("encode_rgbe: need a non-empty 3-channel image");
    }
    const std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(image.height) + " +X " +
                               std::to_string(image.width) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const int w = image.width;
    const std::size_t plane = image.pixels();
    const bool rle = w >= 8 && w < 32768;
    std::array<std::vector<std::uint8_t>, 4> channels;
    for (auto& c : channels) c.resize(static_cast<std::size_t>(w));
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const auto p = rgbe_from_float(image.data[i], image.data[plane + i], image.data[2 * plane + i]);
            if (!rle) {
                out.insert(out.end(), p.begin(), p.end());
                continue;
            }
            for (int c = 0; c < 4; ++c) channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(x)] = p[static_cast<std::size_t>(c)];
        }
        if (!rle) continue;
        out.insert(out.end(), {2, 2, static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w & 0xff)});
        for (const auto& c : channels) append_rle_channel(out, c);
    }
    return out;
}

Image read_rgbe_file(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return decode_rgbe(bytes);
}

void write_rgbe_file(const std::filesystem::path& path, const Image& image) {
    const auto bytes = encode_rgbe(image);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error("cannot write " + path.string());
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace metahdr
