#include "illusion/raster.hpp"

#include "illusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace illusion {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw ParameterError("negative image dimensions");
    data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    this->fill(fill);
}

void RasterImage::fill(Rgb c) {
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = c[0];
        data_[i + 1] = c[1];
        data_[i + 2] = c[2];
    }
}

double luma601(Rgb c) {
    return (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]) / 255.0;
}

GrayImage to_luma(const RasterImage& img) {
    GrayImage out(img.width(), img.height());
    const auto& d = img.data();
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = (0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2]) / 255.0;
    }
    return out;
}

double mean_abs_diff(const RasterImage& a, const RasterImage& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw ParameterError("mean_abs_diff: image sizes differ");
    if (a.empty()) return 0.0;
    std::uint64_t total = 0;
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) total += static_cast<std::uint64_t>(std::abs(int(da[i]) - int(db[i])));
    return static_cast<double>(total) / static_cast<double>(da.size());
}

RasterImage mirror_horizontal(const RasterImage& img) {
    RasterImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.set_pixel(img.width() - 1 - x, y, img.pixel(x, y));
    return out;
}

namespace {

struct Tap {
    int src;
    double weight;
};

// Per-output-pixel overlap weights of [o*scale, (o+1)*scale) with source pixels.
std::vector<std::vector<Tap>> area_taps(int src_len, int dst_len) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst_len));
    const double scale = static_cast<double>(src_len) / dst_len;
    for (int o = 0; o < dst_len; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(src_len - 1, static_cast<int>(std::ceil(hi)) - 1);
        double total = 0.0;
        for (int s = first; s <= last; ++s) {
            const double w = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (w > 0.0) {
                taps[o].push_back({s, w});
                total += w;
            }
        }
        for (auto& t : taps[o]) t.weight /= total;
    }
    return taps;
}

template <int C, typename Get, typename Put>
void resample_separable(int sw, int sh, int dw, int dh, Get get, Put put) {
    const auto tx = area_taps(sw, dw);
    const auto ty = area_taps(sh, dh);
    std::vector<double> rows(static_cast<std::size_t>(sh) * dw * C);
    for (int y = 0; y < sh; ++y)
        for (int x = 0; x < dw; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (const auto& t : tx[x]) acc += t.weight * get(t.src, y, c);
                rows[(static_cast<std::size_t>(y) * dw + x) * C + c] = acc;
            }
    for (int y = 0; y < dh; ++y)
        for (int x = 0; x < dw; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (const auto& t : ty[y]) acc += t.weight * rows[(static_cast<std::size_t>(t.src) * dw + x) * C + c];
                put(x, y, c, acc);
            }
}

}  // namespace

RasterImage resize_area(const RasterImage& img, int width, int height) {
    if (width <= 0 || height <= 0) throw ParameterError("resize target must be positive");
    if (width == img.width() && height == img.height()) return img;
    RasterImage out(width, height);
    auto& od = out.data();
    const auto& sd = img.data();
    const int sw = img.width();
    resample_separable<3>(
        img.width(), img.height(), width, height,
        [&](int x, int y, int c) { return static_cast<double>(sd[(static_cast<std::size_t>(y) * sw + x) * 3 + c]); },
        [&](int x, int y, int c, double v) {
            od[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
                static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        });
    return out;
}

GrayImage resize_area(const GrayImage& img, int width, int height) {
    if (width <= 0 || height <= 0) throw ParameterError("resize target must be positive");
    if (width == img.width && height == img.height) return img;
    GrayImage out(width, height);
    resample_separable<1>(
        img.width, img.height, width, height, [&](int x, int y, int) { return img.at(x, y); },
        [&](int x, int y, int, double v) { out.at(x, y) = v; });
    return out;
}

std::array<double, 3> sample_bilinear(const RasterImage& img, double x, double y, Rgb outside) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    auto fetch = [&](int xi, int yi) -> Rgb {
        if (xi < 0 || yi < 0 || xi >= img.width() || yi >= img.height()) return outside;
        return img.pixel(xi, yi);
    };
    const Rgb p00 = fetch(x0, y0), p10 = fetch(x0 + 1, y0), p01 = fetch(x0, y0 + 1), p11 = fetch(x0 + 1, y0 + 1);
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) {
        out[c] = (1 - fx) * (1 - fy) * p00[c] + fx * (1 - fy) * p10[c] + (1 - fx) * fy * p01[c] + fx * fy * p11[c];
    }
    return out;
}

RasterImage paste(const RasterImage& src, int width, int height, int ox, int oy, Rgb fill) {
    RasterImage out(width, height, fill);
    const int x_begin = std::max(0, ox);
    const int x_end = std::min(width, ox + src.width());
    const int y_begin = std::max(0, oy);
    const int y_end = std::min(height, oy + src.height());
    if (x_begin >= x_end) return out;
    const auto& sd = src.data();
    auto& od = out.data();
    const std::size_t span = static_cast<std::size_t>(x_end - x_begin) * 3;
    for (int y = y_begin; y < y_end; ++y) {
        const auto* from = &sd[(static_cast<std::size_t>(y - oy) * src.width() + (x_begin - ox)) * 3];
        auto* to = &od[(static_cast<std::size_t>(y) * width + x_begin) * 3];
        std::copy(from, from + span, to);
    }
    return out;
}

}  // namespace illusion
