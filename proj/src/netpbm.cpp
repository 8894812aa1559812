#include "ccnn/netpbm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ccnn {

namespace {

void write_netpbm(const std::string& path, const char* magic, int width, int height,
                  std::span<const uint8_t> pixels, int bytes_per_pixel) {
    if (static_cast<size_t>(width) * height * bytes_per_pixel != pixels.size())
        throw std::invalid_argument("netpbm: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("netpbm: cannot open '" + path + "' for writing");
    out << magic << "\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("netpbm: write to '" + path + "' failed");
}

// evenly spread hues, full saturation
void submap_color(int index, int total, uint8_t rgb[3]) {
    double hue = total > 0 ? 360.0 * index / total : 0.0;
    double sector = hue / 60.0;
    int i = static_cast<int>(sector) % 6;
    double f = sector - std::floor(sector);
    double q = 1.0 - f;
    double r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = 1; g = f; b = 0; break;
        case 1: r = q; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = f; break;
        case 3: r = 0; g = q; b = 1; break;
        case 4: r = f; g = 0; b = 1; break;
        default: r = 1; g = 0; b = q; break;
    }
    rgb[0] = static_cast<uint8_t>(55 + 200 * r);
    rgb[1] = static_cast<uint8_t>(55 + 200 * g);
    rgb[2] = static_cast<uint8_t>(55 + 200 * b);
}

}  // namespace

void write_pgm(const std::string& path, int width, int height, std::span<const uint8_t> gray) {
    write_netpbm(path, "P5", width, height, gray, 1);
}

void write_ppm(const std::string& path, int width, int height, std::span<const uint8_t> rgb) {
    write_netpbm(path, "P6", width, height, rgb, 3);
}

std::vector<uint8_t> render_trace_gray(const TraceState& state) {
    std::vector<uint8_t> pixels(
        static_cast<size_t>(state.original_height) * state.original_width, 0);
    for (auto [r, c] : trace_positions(state))
        pixels[static_cast<size_t>(r) * state.original_width + c] = 255;
    return pixels;
}

std::vector<uint8_t> render_trace_color(const TraceState& state) {
    std::vector<uint8_t> pixels(
        static_cast<size_t>(state.original_height) * state.original_width * 3, 0);
    int total = static_cast<int>(state.submaps.size());
    for (int m = 0; m < total; ++m) {
        const SubmapMeta& meta = state.submaps[static_cast<size_t>(m)];
        uint8_t rgb[3];
        submap_color(m, total, rgb);
        for (int i = 0; i < meta.height; ++i) {
            int row = meta.row_offset + i * meta.step_stride;
            if (row >= state.original_height) break;
            for (int j = 0; j < meta.width; ++j) {
                int col = meta.col_offset + j * meta.step_stride;
                if (col >= state.original_width) break;
                size_t at = (static_cast<size_t>(row) * state.original_width + col) * 3;
                pixels[at] = rgb[0];
                pixels[at + 1] = rgb[1];
                pixels[at + 2] = rgb[2];
            }
        }
    }
    return pixels;
}

}  // namespace ccnn
