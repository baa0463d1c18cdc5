#include "ilnet/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace ilnet {

namespace {

// 5x7 glyphs, row strings top to bottom, '#' = on.
const std::map<char, std::array<const char*, 7>>& font() {
    static const std::map<char, std::array<const char*, 7>> f = {
        {' ', {"     ", "     ", "     ", "     ", "     ", "     ", "     "}},
        {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
        {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
        {'3', {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "}},
        {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
        {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
        {'6', {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "}},
        {'7', {"#####", "    #", "   # ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
        {'9', {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "}},
        {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
        {',', {"     ", "     ", "     ", "     ", " ##  ", "  #  ", " #   "}},
        {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
        {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
        {'_', {"     ", "     ", "     ", "     ", "     ", "     ", "#####"}},
        {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
        {'/', {"    #", "    #", "   # ", "  #  ", " #   ", "#    ", "#    "}},
        {'%', {"##  #", "##  #", "   # ", "  #  ", " #   ", "#  ##", "#  ##"}},
        {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
        {'(', {"  #  ", " #   ", "#    ", "#    ", "#    ", " #   ", "  #  "}},
        {')', {"  #  ", "   # ", "    #", "    #", "    #", "   # ", "  #  "}},
        {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
        {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
        {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
        {'D', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
        {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
        {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
        {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
        {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
        {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'J', {"    #", "    #", "    #", "    #", "    #", "#   #", " ### "}},
        {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
        {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
        {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
        {'N', {"#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"}},
        {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
        {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
        {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
        {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
        {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
        {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
        {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
        {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #"}},
        {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
        {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
        {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
    };
    return f;
}

const std::array<const char*, 7>& glyph(char ch) {
    static const std::array<const char*, 7> box = {"#####", "#   #", "#   #", "#   #",
                                                   "#   #", "#   #", "#####"};
    const auto& f = font();
    const auto it = f.find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    return it == f.end() ? box : it->second;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

struct AxisRange {
    double lo = 0, hi = 1;
};

AxisRange pad_range(double lo, double hi) {
    if (!(hi > lo)) {
        const double pad = std::max(1.0, std::abs(lo)) * 0.5;
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGridGray{225, 225, 225};
const std::vector<Rgb> kPalette = {
    {31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}, {23, 190, 207},
};

struct Frame {
    int left, right, top, bottom;  // plot rectangle in pixels
    AxisRange xr, yr;

    int px(double x) const {
        return left + static_cast<int>(std::lround((x - xr.lo) / (xr.hi - xr.lo) * (right - left)));
    }
    int py(double y) const {
        return bottom -
               static_cast<int>(std::lround((y - yr.lo) / (yr.hi - yr.lo) * (bottom - top)));
    }
};

void draw_axes(Canvas& cv, const Frame& f, const std::string& title, const std::string& x_label,
               const std::string& y_label) {
    const int n_ticks = 5;
    for (int i = 0; i <= n_ticks; ++i) {
        const double tx = f.xr.lo + (f.xr.hi - f.xr.lo) * i / n_ticks;
        const double ty = f.yr.lo + (f.yr.hi - f.yr.lo) * i / n_ticks;
        const int x = f.px(tx);
        const int y = f.py(ty);
        cv.line(x, f.top, x, f.bottom, kGridGray);
        cv.line(f.left, y, f.right, y, kGridGray);
        const std::string xs = fmt_tick(tx);
        cv.text(x - text_width(xs) / 2, f.bottom + 6, xs, kBlack);
        const std::string ys = fmt_tick(ty);
        cv.text(f.left - 6 - text_width(ys), y - 3, ys, kBlack);
        cv.line(x, f.bottom, x, f.bottom + 3, kBlack);
        cv.line(f.left - 3, y, f.left, y, kBlack);
    }
    cv.line(f.left, f.top, f.left, f.bottom, kBlack);
    cv.line(f.left, f.bottom, f.right, f.bottom, kBlack);
    cv.text((f.left + f.right) / 2 - text_width(title) / 2, 6, title, kBlack);
    cv.text((f.left + f.right) / 2 - text_width(x_label) / 2, f.bottom + 18, x_label, kBlack);
    cv.text(4, f.top - 12, y_label, kBlack);
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background) {
    img = Image::blank(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            uint8_t* p = img.px(x, y);
            p[0] = background.r;
            p[1] = background.g;
            p[2] = background.b;
        }
}

void Canvas::set_px(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    uint8_t* p = img.px(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set_px(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) set_px(x, y, c);
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
    int cx = x;
    for (char ch : s) {
        const auto& g = glyph(ch);
        for (int row = 0; row < 7; ++row)
            for (int col = 0; col < 5; ++col)
                if (g[static_cast<size_t>(row)][col] == '#')
                    fill_rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1,
                              y + row * scale + scale - 1, c);
        cx += 6 * scale;
    }
}

int text_width(const std::string& s, int scale) {
    return static_cast<int>(s.size()) * 6 * scale;
}

Image line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                const std::vector<Series>& series, int width, int height) {
    bool any = false;
    double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size())
            throw std::invalid_argument("line_plot: series x/y length mismatch");
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!any) {
                xlo = xhi = s.x[i];
                ylo = yhi = s.y[i];
                any = true;
            } else {
                xlo = std::min(xlo, s.x[i]);
                xhi = std::max(xhi, s.x[i]);
                ylo = std::min(ylo, s.y[i]);
                yhi = std::max(yhi, s.y[i]);
            }
        }
    }
    if (!any) throw std::invalid_argument("line_plot: no data points");

    Canvas cv(width, height);
    Frame f{64, width - 16, 28, height - 40, pad_range(xlo, xhi), pad_range(ylo, yhi)};
    draw_axes(cv, f, title, x_label, y_label);

    int color_i = 0;
    int legend_y = f.top + 4;
    for (const Series& s : series) {
        const Rgb c = (s.color.r || s.color.g || s.color.b)
                          ? s.color
                          : kPalette[static_cast<size_t>(color_i) % kPalette.size()];
        ++color_i;
        for (size_t i = 0; i + 1 < s.x.size(); ++i)
            cv.line(f.px(s.x[i]), f.py(s.y[i]), f.px(s.x[i + 1]), f.py(s.y[i + 1]), c);
        for (size_t i = 0; i < s.x.size(); ++i) {
            const int x = f.px(s.x[i]), y = f.py(s.y[i]);
            cv.fill_rect(x - 1, y - 1, x + 1, y + 1, c);
        }
        if (!s.label.empty()) {
            const int lx = f.right - 110;
            cv.fill_rect(lx, legend_y + 2, lx + 10, legend_y + 4, c);
            cv.text(lx + 14, legend_y, s.label, kBlack);
            legend_y += 11;
        }
    }
    return cv.img;
}

Image bar_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
               const std::vector<std::string>& bin_labels, const std::vector<double>& values,
               const std::vector<double>& overlay, const std::string& values_label,
               const std::string& overlay_label, int width, int height) {
    if (values.empty()) throw std::invalid_argument("bar_plot: no values");
    if (!overlay.empty() && overlay.size() != values.size())
        throw std::invalid_argument("bar_plot: overlay length mismatch");

    double vmax = 0;
    for (double v : values) vmax = std::max(vmax, v);
    for (double v : overlay) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;

    const int n = static_cast<int>(values.size());
    Canvas cv(width, height);
    Frame f{64, width - 16, 28, height - 40, {0, static_cast<double>(n)}, pad_range(0, vmax)};
    f.yr.lo = 0;  // bars grow from zero

    const int n_ticks = 5;
    for (int i = 0; i <= n_ticks; ++i) {
        const double ty = f.yr.hi * i / n_ticks;
        const int y = f.py(ty);
        cv.line(f.left, y, f.right, y, kGridGray);
        const std::string ys = fmt_tick(ty);
        cv.text(f.left - 6 - text_width(ys), y - 3, ys, kBlack);
    }
    cv.line(f.left, f.top, f.left, f.bottom, kBlack);
    cv.line(f.left, f.bottom, f.right, f.bottom, kBlack);
    cv.text((f.left + f.right) / 2 - text_width(title) / 2, 6, title, kBlack);
    cv.text((f.left + f.right) / 2 - text_width(x_label) / 2, f.bottom + 18, x_label, kBlack);
    cv.text(4, f.top - 12, y_label, kBlack);

    const Rgb main = kPalette[0], over = kPalette[1];
    for (int i = 0; i < n; ++i) {
        const int x0 = f.px(i + 0.12), x1 = f.px(i + 0.88);
        cv.fill_rect(x0, f.py(values[static_cast<size_t>(i)]), x1, f.bottom - 1, main);
        if (!overlay.empty()) {
            const int ox0 = f.px(i + 0.32), ox1 = f.px(i + 0.68);
            cv.fill_rect(ox0, f.py(overlay[static_cast<size_t>(i)]), ox1, f.bottom - 1, over);
        }
        if (i < static_cast<int>(bin_labels.size()) && (n <= 12 || i % (n / 12 + 1) == 0)) {
            const std::string& lab = bin_labels[static_cast<size_t>(i)];
            cv.text(f.px(i + 0.5) - text_width(lab) / 2, f.bottom + 6, lab, kBlack);
        }
    }
    if (!values_label.empty()) {
        const int lx = f.right - 110;
        cv.fill_rect(lx, f.top + 6, lx + 10, f.top + 8, main);
        cv.text(lx + 14, f.top + 4, values_label, kBlack);
        if (!overlay_label.empty()) {
            cv.fill_rect(lx, f.top + 17, lx + 10, f.top + 19, over);
            cv.text(lx + 14, f.top + 15, overlay_label, kBlack);
        }
    }
    return cv.img;
}

}  // namespace ilnet
