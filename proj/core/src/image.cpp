#include "metahdr/image.hpp"

#include <algorithm>

namespace metahdr {

template <class T>
Tensor<T> to_batch(std::span<const Image> images) {
    if (images.empty()) throw DimensionError("to_batch: no images");
    const Image& first = images.front();
    std::vector<T> values;
    values.reserve(images.size() * first.data.size());
    for (const auto& img : images) {
        if (!img.same_dims(first)) {
            throw DimensionError("to_batch: images differ in size (" + std::to_string(img.channels) + "x" +
                                 std::to_string(img.height) + "x" + std::to_string(img.width) + " vs " +
                                 std::to_string(first.channels) + "x" + std::to_string(first.height) + "x" +
                                 std::to_string(first.width) + ")");
        }
        values.insert(values.end(), img.data.begin(), img.data.end());
    }
    return Tensor<T>({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width},
                     std::move(values));
}

template <class T>
Image to_image(const Tensor<T>& batch, std::int64_t index) {
    if (batch.rank() != 4 || index < 0 || index >= batch.dim(0)) {
        throw DimensionError("to_image: need an N x C x H x W tensor with entry " + std::to_string(index) +
                             ", got " + shape_string(batch.shape()));
    }
    Image img(static_cast<int>(batch.dim(1)), static_cast<int>(batch.dim(2)), static_cast<int>(batch.dim(3)));
    auto v = batch.values();
    const auto n = static_cast<std::int64_t>(img.data.size());
    std::transform(v.begin() + index * n, v.begin() + (index + 1) * n, img.data.begin(),
                   [](T x) { return static_cast<float>(x); });
    return img;
}

template Tensor<float> to_batch<float>(std::span<const Image>);
template Tensor<double> to_batch<double>(std::span<const Image>);
template Image to_image<float>(const Tensor<float>&, std::int64_t);
template Image to_image<double>(const Tensor<double>&, std::int64_t);

}  // namespace metahdr
