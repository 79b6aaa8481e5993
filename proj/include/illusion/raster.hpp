/**
 * @file raster.hpp
 * @brief 8-bit RGB raster images and the resampling helpers shared by the
 *        stimulus and viewing-condition code.
 */
#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace illusion {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};

/// Row-major interleaved RGB image, 3 bytes per pixel.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Rgb fill = kWhite);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb pixel(int x, int y) const {
        const auto i = index(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }
    void set_pixel(int x, int y, Rgb c) {
        const auto i = index(x, y);
        data_[i] = c[0];
        data_[i + 1] = c[1];
        data_[i + 2] = c[2];
    }

    std::vector<std::uint8_t>& data() { return data_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

    void fill(Rgb c);

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Single-channel double image, used for luma and intermediate filtering.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// ITU-R BT.601 luma in [0, 1].
double luma601(Rgb c);
GrayImage to_luma(const RasterImage& img);

/// Mean absolute per-sample difference in units of 1/255 over all channels.
double mean_abs_diff(const RasterImage& a, const RasterImage& b);

/// Horizontal flip (x -> width-1-x).
RasterImage mirror_horizontal(const RasterImage& img);

/// Area-averaging resample to an arbitrary size; exact pixel-overlap weights.
RasterImage resize_area(const RasterImage& img, int width, int height);
GrayImage resize_area(const GrayImage& img, int width, int height);

/// Bilinear sample at continuous pixel coordinates; outside samples take `outside`.
std::array<double, 3> sample_bilinear(const RasterImage& img, double x, double y, Rgb outside);

/// Copy `src` into a `width`x`height` canvas of `fill` with its top-left at (ox, oy), clipped.
RasterImage paste(const RasterImage& src, int width, int height, int ox, int oy, Rgb fill);

}  // namespace illusion
