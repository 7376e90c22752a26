#pragma once

#include "metahdr/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace metahdr {

/// Planar float image, channel-major (C x H x W).
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    bool empty() const { return data.empty(); }
    bool same_dims(const Image& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

/// Stacks same-sized images into an N x C x H x W constant tensor.
template <class T>
Tensor<T> to_batch(std::span<const Image> images);

template <class T>
Tensor<T> to_tensor(const Image& image) {
    return to_batch<T>(std::span<const Image>(&image, 1));
}

/// Extracts batch entry `index` of an N x C x H x W tensor.
template <class T>
Image to_image(const Tensor<T>& batch, std::int64_t index = 0);

}  // namespace metahdr
