/**
 * @file flowio.hpp
 * @brief Binary flow files and color-wheel visualization.
 *
 * File layout (all little-endian):
 *   bytes 0-3   ASCII "PIEH"
 *   bytes 4-7   int32 width
 *   bytes 8-11  int32 height
 *   then width*height pairs of float32 (u, v), row-major.
 * Invalid pixels are stored as u = v = 1e10; any component with magnitude
 * above 1e9 marks the pixel invalid on read, where it becomes (0, 0).
 */
#pragma once

#include "illusion/flow.hpp"
#include "illusion/raster.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace illusion::flowio {

inline constexpr float kInvalidSentinel = 1e10f;
inline constexpr double kInvalidThreshold = 1e9;

std::vector<std::uint8_t> encode_flow(const FlowField& f);
FlowField decode_flow(const std::vector<std::uint8_t>& bytes);

void write_flow(const FlowField& f, const std::filesystem::path& path);
FlowField read_flow(const std::filesystem::path& path);

/// Color of a flow direction; angle is atan2(-v, u) in radians (counterclockwise
/// as displayed, 0 = rightward = red, then yellow, green, cyan, blue, magenta).
Rgb wheel_color(double angle);

/// Hue encodes direction, brightness encodes magnitude / scale, clipped at 1.
/// With normalize the scale is the largest valid magnitude (an all-zero field
/// renders black); otherwise `scale` is used. Invalid pixels are black.
RasterImage flow_to_png(const FlowField& f, bool normalize, double scale = 1.0);

/// Square legend: each pixel shows the color of the flow vector pointing from
/// the center to it, at full brightness on the inscribed circle. White outside.
RasterImage wheel_legend(int size);

}  // namespace illusion::flowio
