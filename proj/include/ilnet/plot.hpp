#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ilnet/image_io.hpp"

namespace ilnet {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

// Raster drawing surface over an RGB image. Coordinates are pixels, origin
// top-left; out-of-bounds writes are dropped.
struct Canvas {
    Image img;

    Canvas(int width, int height, Rgb background = {255, 255, 255});
    void set_px(int x, int y, Rgb c);
    void line(int x0, int y0, int x1, int y1, Rgb c);
    void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
    // 5x7 bitmap font, scale 1 => 6px advance. Unknown glyphs render as boxes;
    // lowercase is uppercased.
    void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
};

int text_width(const std::string& s, int scale = 1);

struct Series {
    std::string label;
    std::vector<double> x, y;  // equal length
    Rgb color;
};

// Axes, ticks, numeric tick labels, legend, one polyline (with point markers)
// per series. Throws std::invalid_argument when no series has a point.
Image line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                const std::vector<Series>& series, int width = 720, int height = 440);

// One bar per bin; overlay values (same length, drawn as inner bars) may be
// empty. Throws std::invalid_argument on empty values.
Image bar_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
               const std::vector<std::string>& bin_labels, const std::vector<double>& values,
               const std::vector<double>& overlay, const std::string& values_label,
               const std::string& overlay_label, int width = 720, int height = 440);

}  // namespace ilnet
