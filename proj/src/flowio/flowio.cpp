#include "illusion/flowio.hpp"

#include "illusion/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace illusion::flowio {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "flow files need IEEE-754 float32");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_float(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

// Middlebury wheel: segment lengths red-yellow, yellow-green, green-cyan,
// cyan-blue, blue-magenta, magenta-red.
std::vector<std::array<double, 3>> make_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> w;
    for (int i = 0; i < RY; ++i) w.push_back({255, std::floor(255.0 * i / RY), 0});
    for (int i = 0; i < YG; ++i) w.push_back({255 - std::floor(255.0 * i / YG), 255, 0});
    for (int i = 0; i < GC; ++i) w.push_back({0, 255, std::floor(255.0 * i / GC)});
    for (int i = 0; i < CB; ++i) w.push_back({0, 255 - std::floor(255.0 * i / CB), 255});
    for (int i = 0; i < BM; ++i) w.push_back({std::floor(255.0 * i / BM), 0, 255});
    for (int i = 0; i < MR; ++i) w.push_back({255, 0, 255 - std::floor(255.0 * i / MR)});
    return w;
}

const std::vector<std::array<double, 3>>& wheel() {
    static const auto w = make_wheel();
    return w;
}

std::array<double, 3> wheel_rgb(double angle) {
    const auto& w = wheel();
    const int n = static_cast<int>(w.size());
    double t = std::fmod(angle, 2 * std::numbers::pi);
    if (t < 0) t += 2 * std::numbers::pi;
    const double fk = t / (2 * std::numbers::pi) * n;
    const int k0 = static_cast<int>(fk) % n;
    const int k1 = (k0 + 1) % n;
    const double f = fk - std::floor(fk);
    std::array<double, 3> c;
    for (int ch = 0; ch < 3; ++ch) c[ch] = (1 - f) * w[k0][ch] + f * w[k1][ch];
    return c;
}

Rgb shade(const std::array<double, 3>& c, double brightness) {
    Rgb out;
    for (int ch = 0; ch < 3; ++ch)
        out[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(c[ch] * brightness), 0L, 255L));
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_flow(const FlowField& f) {
    if (f.width < 0 || f.height < 0) throw FormatError("negative flow dimensions");
    if (f.u.size() != f.size() || f.v.size() != f.size() || f.valid.size() != f.size() ||
        f.size() != static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height))
        throw FormatError("flow field buffers are inconsistent with its dimensions");
    std::vector<std::uint8_t> out;
    out.reserve(12 + f.size() * 8);
    for (char c : {'P', 'I', 'E', 'H'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, static_cast<std::uint32_t>(f.width));
    put_u32(out, static_cast<std::uint32_t>(f.height));
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.valid[i]) {
            put_float(out, kInvalidSentinel);
            put_float(out, kInvalidSentinel);
            continue;
        }
        const auto u = static_cast<float>(f.u[i]);
        const auto v = static_cast<float>(f.v[i]);
        if (!std::isfinite(u) || !std::isfinite(v))
            throw FormatError("non-finite flow value at pixel " + std::to_string(i));
        if (std::abs(u) > kInvalidThreshold || std::abs(v) > kInvalidThreshold)
            throw FormatError("valid flow value collides with the invalid-pixel sentinel at pixel " + std::to_string(i));
        put_float(out, u);
        put_float(out, v);
    }
    return out;
}

FlowField decode_flow(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw FormatError("flow file shorter than its header");
    if (std::memcmp(bytes.data(), "PIEH", 4) != 0) throw FormatError("bad flow file magic");
    const auto w = static_cast<std::int32_t>(get_u32(bytes.data() + 4));
    const auto h = static_cast<std::int32_t>(get_u32(bytes.data() + 8));
    if (w < 0 || h < 0) throw FormatError("negative flow dimensions");
    const std::uint64_t n = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h);
    const std::uint64_t expected = 12 + n * 8;
    if (bytes.size() < expected) throw FormatError("truncated flow body");
    if (bytes.size() > expected) throw FormatError("trailing bytes after flow body");
    FlowField f(w, h);
    const std::uint8_t* p = bytes.data() + 12;
    for (std::size_t i = 0; i < f.size(); ++i, p += 8) {
        const float u = std::bit_cast<float>(get_u32(p));
        const float v = std::bit_cast<float>(get_u32(p + 4));
        if (!std::isfinite(u) || !std::isfinite(v))
            throw FormatError("non-finite flow value at pixel " + std::to_string(i));
        if (std::abs(u) > kInvalidThreshold || std::abs(v) > kInvalidThreshold) {
            f.valid[i] = 0;
            continue;
        }
        f.u[i] = u;
        f.v[i] = v;
    }
    return f;
}

void write_flow(const FlowField& f, const std::filesystem::path& path) {
    const auto bytes = encode_flow(f);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open flow file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_flow(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

Rgb wheel_color(double angle) { return shade(wheel_rgb(angle), 1.0); }

RasterImage flow_to_png(const FlowField& f, bool normalize, double scale) {
    if (f.size() == 0) throw ParameterError("cannot visualize an empty flow field");
    if (std::none_of(f.valid.begin(), f.valid.end(), [](std::uint8_t v) { return v != 0; }))
        throw ParameterError("cannot visualize an all-invalid flow field");
    if (!normalize && !(scale > 0.0)) throw ParameterError("visualization scale must be positive");
    if (normalize) {
        scale = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            if (f.valid[i]) scale = std::max(scale, std::hypot(f.u[i], f.v[i]));
    }
    RasterImage img(f.width, f.height, kBlack);
    if (scale == 0.0) return img;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const auto i = f.index(x, y);
            if (!f.valid[i]) continue;
            const double mag = std::hypot(f.u[i], f.v[i]);
            if (mag == 0.0) continue;
            img.set_pixel(x, y, shade(wheel_rgb(std::atan2(-f.v[i], f.u[i])), std::min(1.0, mag / scale)));
        }
    return img;
}

RasterImage wheel_legend(int size) {
    if (size < 3) throw ParameterError("legend size must be at least 3 px");
    RasterImage img(size, size, kWhite);
    const double c = (size - 1) / 2.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x - c, dy = y - c;
            const double r = std::hypot(dx, dy) / c;
            if (r > 1.0) continue;
            img.set_pixel(x, y, shade(wheel_rgb(std::atan2(-dy, dx)), r));
        }
    return img;
}

}  // namespace illusion::flowio
