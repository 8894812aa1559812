#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccnn/trace.hpp"

namespace ccnn {

/// Binary PGM (P5), one byte per pixel, maxval 255.
void write_pgm(const std::string& path, int width, int height, std::span<const uint8_t> gray);

/// Binary PPM (P6), three bytes per pixel, maxval 255.
void write_ppm(const std::string& path, int width, int height, std::span<const uint8_t> rgb);

/// Sampled positions white (255) on black.
std::vector<uint8_t> render_trace_gray(const TraceState& state);

/// Sampled positions colored by submap id on black; distinct hues per submap.
std::vector<uint8_t> render_trace_color(const TraceState& state);

}  // namespace ccnn
