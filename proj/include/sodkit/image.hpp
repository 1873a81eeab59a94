#pragma once

#include <filesystem>

#include "sodkit/common.hpp"

namespace sodkit {

// 8-bit image carrier, values normalized to [0,1]. channels is 1 (PGM) or 3
// (PPM), interleaved per pixel on disk, stored planar here (CHW).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> v;  // channels * height * width, planar

    double& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

Image read_pnm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

// IO-boundary resampling (network-internal rescaling never goes through this
// in pixel-shuffle mode).
Image resize_bilinear(const Image& img, int out_w, int out_h);

inline int quantize8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<int>(std::lround(c * 255.0));
}

}  // namespace sodkit
