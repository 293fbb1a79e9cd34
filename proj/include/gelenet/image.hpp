#pragma once

#include "gelenet/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gelenet {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Planar (c,h,w) image with values in [0,1].
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), values(c * h * w, fill)
    {
    }

    double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    std::size_t plane() const { return height * width; }
};

/// Reads any PNG as 8-bit gray (channels = 1) or RGB (channels = 3); alpha is dropped.
Image read_png(const std::filesystem::path& path);
/// Writes 1- or 3-channel images as 8-bit PNG; values are clamped and quantized as round(255 v).
void write_png(const std::filesystem::path& path, const Image& image);

std::uint8_t quantize(double v);

Image to_gray(const Image& image);
Image to_rgb(const Image& image);

/// Half-pixel-centre bilinear resize, matching the network's upsampling convention.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
Image resize_nearest(const Image& image, std::size_t height, std::size_t width);

/// Image <-> one batch entry of an (n,c,h,w) tensor.
Image image_from_tensor(const Tensor& t, std::size_t index);
void copy_into_tensor(const Image& image, Tensor& t, std::size_t index);
Tensor stack_images(const std::vector<const Image*>& images);

} // namespace gelenet
