#pragma once

#include <cstdint>
#include <vector>

namespace illusion {

/// Dense 2D motion field in pixels/frame, image coordinates (x right, y down).
///
/// Invalid pixels carry zero vectors; the mask is authoritative.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<std::uint8_t> valid;

    FlowField() = default;
    FlowField(int w, int h, bool all_valid = true)
        : width(w), height(h),
          u(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0),
          v(u.size(), 0.0),
          valid(u.size(), all_valid ? 1 : 0) {}

    std::size_t size() const { return u.size(); }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

}  // namespace illusion
