#include "urfb/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace urfb::plot {

namespace {

// --- 3x5 pixel font -----------------------------------------------------------------

using Glyph = std::array<const char*, 5>;

Glyph glyph(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case '0': return {"111", "101", "101", "101", "111"};
        case '1': return {"010", "110", "010", "010", "111"};
        case '2': return {"111", "001", "111", "100", "111"};
        case '3': return {"111", "001", "111", "001", "111"};
        case '4': return {"101", "101", "111", "001", "001"};
        case '5': return {"111", "100", "111", "001", "111"};
        case '6': return {"111", "100", "111", "101", "111"};
        case '7': return {"111", "001", "001", "010", "010"};
        case '8': return {"111", "101", "111", "101", "111"};
        case '9': return {"111", "101", "111", "001", "111"};
        case 'A': return {"010", "101", "111", "101", "101"};
        case 'B': return {"110", "101", "110", "101", "110"};
        case 'C': return {"011", "100", "100", "100", "011"};
        case 'D': return {"110", "101", "101", "101", "110"};
        case 'E': return {"111", "100", "110", "100", "111"};
        case 'F': return {"111", "100", "110", "100", "100"};
        case 'G': return {"011", "100", "101", "101", "011"};
        case 'H': return {"101", "101", "111", "101", "101"};
        case 'I': return {"111", "010", "010", "010", "111"};
        case 'J': return {"001", "001", "001", "101", "010"};
        case 'K': return {"101", "110", "100", "110", "101"};
        case 'L': return {"100", "100", "100", "100", "111"};
        case 'M': return {"101", "111", "111", "101", "101"};
        case 'N': return {"110", "101", "101", "101", "101"};
        case 'O': return {"010", "101", "101", "101", "010"};
        case 'P': return {"110", "101", "110", "100", "100"};
        case 'Q': return {"010", "101", "101", "011", "001"};
        case 'R': return {"110", "101", "110", "110", "101"};
        case 'S': return {"011", "100", "010", "001", "110"};
        case 'T': return {"111", "010", "010", "010", "010"};
        case 'U': return {"101", "101", "101", "101", "111"};
        case 'V': return {"101", "101", "101", "101", "010"};
        case 'W': return {"101", "101", "111", "111", "101"};
        case 'X': return {"101", "101", "010", "101", "101"};
        case 'Y': return {"101", "101", "010", "010", "010"};
        case 'Z': return {"111", "001", "010", "100", "111"};
        case '-': return {"000", "000", "111", "000", "000"};
        case '+': return {"000", "010", "111", "010", "000"};
        case '=': return {"000", "111", "000", "111", "000"};
        case '.': return {"000", "000", "000", "000", "010"};
        case ',': return {"000", "000", "000", "010", "100"};
        case ':': return {"000", "010", "000", "010", "000"};
        case '/': return {"001", "001", "010", "100", "100"};
        case '%': return {"101", "001", "010", "100", "101"};
        case '_': return {"000", "000", "000", "000", "111"};
        case '(': return {"001", "010", "010", "010", "001"};
        case ')': return {"100", "010", "010", "010", "100"};
        default: return {"000", "000", "000", "000", "000"};
    }
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size())));
    put_u32_be(out, crc);
}

// axis tick placement: a step of 1/2/5 times a power of ten giving a
// handful of round values across [lo, hi]
std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
    const double range = hi - lo;
    if (!(range > 0.0) || !std::isfinite(range)) return {lo};
    const double rough = range / target;
    const double mag = std::pow(10.0, std::floor(std::log10(rough)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= rough) {
            step = mag * m;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * range; t += step)
        ticks.push_back(std::abs(t) < 1e-12 * range ? 0.0 : t);
    return ticks;
}

std::string format_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

Color default_color(std::size_t i) {
    static const Color palette[] = {
        {31, 119, 180},  // blue
        {214, 39, 40},   // red
        {44, 160, 44},   // green
        {148, 103, 189}, // purple
        {255, 127, 14},  // orange
        {23, 190, 207},  // cyan
        {140, 86, 75},   // brown
        {227, 119, 194}, // pink
    };
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

Canvas::Canvas(int w, int h, Color fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("Canvas: width and height must be positive");
    rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = fill.r;
        rgb[i + 1] = fill.g;
        rgb[i + 2] = fill.b;
    }
}

void Canvas::set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t at = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[at] = c.r;
    rgb[at + 1] = c.g;
    rgb[at + 2] = c.b;
}

void Canvas::line(int x0, int y0, int x1, int y1, Color c) {
    // Bresenham; endpoints may lie outside, set() clips per pixel
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
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

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
    int cx = x;
    for (char ch : s) {
        const Glyph g = glyph(ch);
        for (int r = 0; r < 5; ++r)
            for (int col = 0; col < 3; ++col) {
                if (g[r][col] != '1') continue;
                for (int py = 0; py < scale; ++py)
                    for (int px = 0; px < scale; ++px)
                        set(cx + col * scale + px, y + r * scale + py, c);
            }
        cx += 4 * scale;  // 3 columns + 1 gap
    }
}

int text_width(const std::string& s, int scale) {
    return static_cast<int>(s.size()) * 4 * scale;
}

void write_png(const std::string& path, const Canvas& canvas) {
    // raw image stream: one filter byte (0 = none) before each scanline
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(canvas.height) * (canvas.width * 3 + 1));
    for (int y = 0; y < canvas.height; ++y) {
        raw.push_back(0);
        const std::size_t at = static_cast<std::size_t>(y) * canvas.width * 3;
        raw.insert(raw.end(), canvas.rgb.begin() + at, canvas.rgb.begin() + at + canvas.width * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: compression failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(canvas.width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(canvas.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor RGB
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write_png: short write to " + path);
}

void render_panels(const std::string& path, const std::vector<Panel>& panels, int width,
                   int panel_height) {
    if (panels.empty()) throw std::invalid_argument("render_panels: no panels");
    const Color black{0, 0, 0}, gray{210, 210, 210}, frame{120, 120, 120};
    Canvas canvas(width, panel_height * static_cast<int>(panels.size()));

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const Panel& panel = panels[p];
        const int top = static_cast<int>(p) * panel_height;
        const int x0 = 64, x1 = width - 14;
        const int y0 = top + 26, y1 = top + panel_height - 26;

        // data range over finite points
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
        double ymin = xmin, ymax = -xmin;
        for (const Series& s : panel.series)
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        if (!std::isfinite(xmin)) {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        if (xmax <= xmin) xmax = xmin + 1.0;
        if (ymax <= ymin) {
            const double pad = std::abs(ymin) > 0 ? std::abs(ymin) * 0.1 : 1.0;
            ymin -= pad;
            ymax += pad;
        } else {
            const double pad = (ymax - ymin) * 0.05;
            ymin -= pad;
            ymax += pad;
        }

        auto px = [&](double x) {
            return x0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (x1 - x0)));
        };
        auto py = [&](double y) {
            return y1 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (y1 - y0)));
        };

        // frame, grid and ticks
        canvas.line(x0, y0, x0, y1, frame);
        canvas.line(x0, y1, x1, y1, frame);
        for (double t : nice_ticks(ymin, ymax)) {
            const int y = py(t);
            if (y < y0 || y > y1) continue;
            canvas.line(x0 + 1, y, x1, y, gray);
            canvas.line(x0 - 3, y, x0, y, frame);
            const std::string lab = format_tick(t);
            canvas.text(x0 - 6 - text_width(lab, 1), y - 2, lab, black, 1);
        }
        for (double t : nice_ticks(xmin, xmax, 6)) {
            const int x = px(t);
            if (x < x0 || x > x1) continue;
            canvas.line(x, y1, x, y1 + 3, frame);
            const std::string lab = format_tick(t);
            canvas.text(x - text_width(lab, 1) / 2, y1 + 6, lab, black, 1);
        }

        canvas.text(x0, top + 6, panel.title, black, 2);
        if (!panel.y_label.empty())
            canvas.text(x0 + 6, y0 + 4, panel.y_label, frame, 1);

        // series polylines and legend
        int legend_y = y0 + 4;
        const int legend_x = x1 - 150;
        for (std::size_t si = 0; si < panel.series.size(); ++si) {
            const Series& s = panel.series[si];
            bool pen_down = false;
            int lx = 0, ly = 0;
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                    pen_down = false;
                    continue;
                }
                const int cx = px(s.x[i]), cy = py(s.y[i]);
                if (pen_down) canvas.line(lx, ly, cx, cy, s.color);
                lx = cx;
                ly = cy;
                pen_down = true;
            }
            if (!s.label.empty()) {
                canvas.line(legend_x, legend_y + 3, legend_x + 14, legend_y + 3, s.color);
                canvas.text(legend_x + 18, legend_y, s.label, black, 1);
                legend_y += 10;
            }
        }
    }
    write_png(path, canvas);
}

}  // namespace urfb::plot
