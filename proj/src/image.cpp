#include "gelenet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace gelenet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f)
        throw ImageError("cannot open '" + path.string() + "'");
    return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg)
{
    auto* where = static_cast<std::string*>(png_get_error_ptr(png));
    *where = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

// Map source coordinate for output index o under scale factor in/out, half-pixel centres.
double source_coord(std::size_t o, std::size_t in, std::size_t out)
{
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::max(s, 0.0);
}

} // namespace

std::uint8_t quantize(double v)
{
    if (std::isnan(v))
        throw ImageError("cannot quantize NaN pixel");
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image read_png(const std::filesystem::path& path)
{
    FilePtr file = open_file(path, "rb");
    unsigned char header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw ImageError("'" + path.string() + "' is not a PNG file");

    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    if (!png)
        throw ImageError("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageError("libpng: out of memory");
    }

    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int channels = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageError("cannot decode '" + path.string() + "': " + error);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16)
        png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 1 && channels != 3)
        throw ImageError("'" + path.string() + "': unsupported channel count " + std::to_string(channels));
    Image img(static_cast<std::size_t>(channels), height, width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
                img.at(c, y, x) = rows[y][x * img.channels + c] / 255.0;
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image)
{
    if (image.channels != 1 && image.channels != 3)
        throw ImageError("write_png: only 1- or 3-channel images are supported");
    if (image.width == 0 || image.height == 0)
        throw ImageError("write_png: empty image");

    const std::size_t stride = image.width * image.channels;
    std::vector<png_byte> pixels(stride * image.height);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            for (std::size_t c = 0; c < image.channels; ++c)
                pixels[y * stride + x * image.channels + c] = quantize(image.at(c, y, x));
    std::vector<png_bytep> rows(image.height);
    for (std::size_t y = 0; y < image.height; ++y)
        rows[y] = pixels.data() + y * stride;

    FilePtr file = open_file(path, "wb");
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    if (!png)
        throw ImageError("libpng: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageError("libpng: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageError("cannot encode '" + path.string() + "': " + error);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image to_gray(const Image& image)
{
    if (image.channels == 1)
        return image;
    if (image.channels != 3)
        throw ImageError("to_gray: expected 1 or 3 channels");
    Image out(1, image.height, image.width);
    for (std::size_t i = 0; i < image.plane(); ++i)
        out.values[i] = 0.299 * image.values[i] + 0.587 * image.values[image.plane() + i] +
                        0.114 * image.values[2 * image.plane() + i];
    return out;
}

Image to_rgb(const Image& image)
{
    if (image.channels == 3)
        return image;
    if (image.channels != 1)
        throw ImageError("to_rgb: expected 1 or 3 channels");
    Image out(3, image.height, image.width);
    for (std::size_t c = 0; c < 3; ++c)
        std::copy(image.values.begin(), image.values.end(), out.values.begin() + c * image.plane());
    return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width)
{
    if (height == 0 || width == 0 || image.plane() == 0)
        throw ImageError("resize: empty size");
    if (height == image.height && width == image.width)
        return image;
    Image out(image.channels, height, width);
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = source_coord(y, image.height, height);
        const std::size_t y0 = std::min(static_cast<std::size_t>(sy), image.height - 1);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = source_coord(x, image.width, width);
            const std::size_t x0 = std::min(static_cast<std::size_t>(sx), image.width - 1);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t c = 0; c < image.channels; ++c) {
                const double top = image.at(c, y0, x0) * (1 - fx) + image.at(c, y0, x1) * fx;
                const double bot = image.at(c, y1, x0) * (1 - fx) + image.at(c, y1, x1) * fx;
                out.at(c, y, x) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

Image resize_nearest(const Image& image, std::size_t height, std::size_t width)
{
    if (height == 0 || width == 0 || image.plane() == 0)
        throw ImageError("resize: empty size");
    Image out(image.channels, height, width);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(y * image.height / height, image.height - 1);
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = std::min(x * image.width / width, image.width - 1);
            for (std::size_t c = 0; c < image.channels; ++c)
                out.at(c, y, x) = image.at(c, sy, sx);
        }
    }
    return out;
}

Image image_from_tensor(const Tensor& t, std::size_t index)
{
    const Shape& s = t.shape();
    if (index >= s.n)
        throw ShapeError("image_from_tensor: index " + std::to_string(index) + " out of range for " + s.str());
    Image img(s.c, s.h, s.w);
    const std::size_t n = s.c * s.plane();
    std::copy_n(t.ptr() + index * n, n, img.values.begin());
    return img;
}

void copy_into_tensor(const Image& image, Tensor& t, std::size_t index)
{
    const Shape& s = t.shape();
    if (index >= s.n || image.channels != s.c || image.height != s.h || image.width != s.w)
        throw ShapeError("copy_into_tensor: image " + std::to_string(image.channels) + "x" +
                         std::to_string(image.height) + "x" + std::to_string(image.width) + " does not fit " + s.str());
    std::copy(image.values.begin(), image.values.end(), t.ptr() + index * image.values.size());
}

Tensor stack_images(const std::vector<const Image*>& images)
{
    if (images.empty())
        throw ShapeError("stack_images: no images");
    const Image& first = *images.front();
    Tensor t(Shape{images.size(), first.channels, first.height, first.width});
    for (std::size_t i = 0; i < images.size(); ++i)
        copy_into_tensor(*images[i], t, i);
    return t;
}

} // namespace gelenet
