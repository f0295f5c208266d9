#include "vapdiff/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace vapdiff {

Image Image::zeros(int channels, int height, int width) {
    Image img;
    img.channels = channels;
    img.height = height;
    img.width = width;
    img.data.assign(static_cast<size_t>(channels) * height * width, 0.0);
    return img;
}

double& Image::at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
}

double Image::at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

void save_png(const Image& img, const std::string& path) {
    if (img.channels != 3) {
        throw ValidationError("save_png: expected 3-channel image");
    }
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw ValidationError("save_png: cannot open " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw ValidationError("load_png: cannot open " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("load_png: not a readable PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    // Normalize every supported layout to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    Image img = Image::zeros(3, height, width);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace vapdiff
