#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ilnet {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    static Image blank(int w, int h) {
        Image im;
        im.width = w;
        im.height = h;
        im.rgb.assign(static_cast<size_t>(w) * h * 3, 0);
        return im;
    }
    uint8_t* px(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const uint8_t* px(int x, int y) const {
        return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
};

// Minimal PNG codec. Writes 8-bit truecolor, filter 0 rows; reads 8-bit
// truecolor with any of the five standard row filters, non-interlaced only.
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const uint8_t* data, size_t n);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace ilnet
