#pragma once

// Minimal self-contained line-chart renderer. Charts are stacked panels
// drawn into an 8-bit RGB buffer and written as a PNG (zlib handles the
// compression and checksums). Text uses a built-in 3x5 pixel font
// (uppercase letters, digits and basic punctuation), good enough for axis
// ticks and legends. CSV stays the authoritative output; these images are
// for quick visual inspection only.

#include <cstdint>
#include <string>
#include <vector>

namespace urfb::plot {

struct Color {
    std::uint8_t r = 0, g = 0, b = 0;
};

// a handful of well-separated default colors, cycled by series index
Color default_color(std::size_t i);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;  // NaN entries break the line
    Color color;
};

struct Panel {
    std::string title;
    std::string y_label;
    std::vector<Series> series;
};

// raw RGB canvas helpers (exposed for tests)
struct Canvas {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // width * height * 3, row-major

    Canvas(int w, int h, Color fill = {255, 255, 255});
    void set(int x, int y, Color c);
    void line(int x0, int y0, int x1, int y1, Color c);
    // 3x5 font scaled by `scale`; unknown characters render as blanks
    void text(int x, int y, const std::string& s, Color c, int scale = 2);
};

// width of a rendered string in pixels
int text_width(const std::string& s, int scale = 2);

// write the canvas as an RGB PNG; throws std::runtime_error on I/O failure
void write_png(const std::string& path, const Canvas& canvas);

// render stacked panels sharing the canvas width and write them as a PNG
void render_panels(const std::string& path, const std::vector<Panel>& panels, int width = 960,
                   int panel_height = 260);

}  // namespace urfb::plot
