#pragma once

#include <string>
#include <vector>

#include "vapdiff/schedule.hpp"

namespace vapdiff {

// CHW image with values in [0, 1].
struct Image {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    static Image zeros(int channels, int height, int width);
    double& at(int c, int y, int x);
    double at(int c, int y, int x) const;
    LatentDims dims() const { return {channels, height, width}; }
};

// 8-bit RGB PNG round trip. Values are clamped to [0,1] and quantized on save.
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

}  // namespace vapdiff
