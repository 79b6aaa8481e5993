#include "illusion/stimgen.hpp"

#include "illusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace illusion::stimgen {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr Rgb kMidGray{128, 128, 128};

std::uint8_t to_byte(double level) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(level * 255.0), 0L, 255L));
}

Rgb gray(double level) {
    const auto b = to_byte(level);
    return {b, b, b};
}

// Scales toward black or blends toward white until BT.601 luma hits `target`.
Rgb shade(Rgb base, double target) {
    const double lum = luma601(base);
    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        double v = base[c];
        if (target <= lum) {
            v *= target / lum;
        } else {
            const double t = (target - lum) / (1.0 - lum);
            v += t * (255.0 - v);
        }
        out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return out;
}

std::pair<Rgb, Rgb> scheme_pair(ColorScheme s) {
    switch (s) {
        case ColorScheme::BlueYellow: return {Rgb{0, 0, 255}, Rgb{255, 255, 0}};
        case ColorScheme::RedGreen: return {Rgb{255, 0, 0}, Rgb{0, 128, 0}};
        case ColorScheme::Grayscale: break;
    }
    return {kBlack, kWhite};
}

// Angle counterclockwise as displayed, in [0, 2pi).
double display_angle(double dx, double dy_down) {
    double a = std::atan2(-dy_down, dx);
    if (a < 0) a += kTwoPi;
    return a;
}

double frac(double x) { return x - std::floor(x); }

struct Geometry {
    double cx, cy, radius, inner, thickness;
};

Geometry geometry(const StimulusSpec& spec) {
    Geometry g{};
    g.cx = g.cy = spec.center();
    g.radius = spec.disk_radius();
    g.inner = spec.inner_radius_frac * g.radius;
    g.thickness = (g.radius - g.inner) / spec.rings;
    return g;
}

// Rotating Snakes / peripheral drift layout at a continuous position.
Region region_at(const StimulusSpec& spec, const Geometry& g, double x, double y) {
    const double dx = x - g.cx;
    const double dy = y - g.cy;
    const double r = std::hypot(dx, dy);
    Region reg;
    if (r > g.radius) return reg;
    if (r < g.inner) {
        reg.kind = Region::Center;
        return reg;
    }
    reg.kind = Region::Ring;
    reg.ring = std::min(spec.rings - 1, static_cast<int>((r - g.inner) / g.thickness));
    const double pos = display_angle(dx, dy) / (kTwoPi / spec.elements_per_ring) + ((reg.ring % 2) ? 0.5 : 0.0);
    reg.element = static_cast<int>(std::floor(pos)) % spec.elements_per_ring;
    reg.sub = std::min(3, static_cast<int>(frac(pos) * 4.0));
    return reg;
}

template <typename ColorAt>
RasterImage rasterize(const StimulusSpec& spec, ColorAt color_at) {
    const int n = spec.canvas_px;
    RasterImage img(n, n, kWhite);
    const double radius = spec.disk_radius();
    const double c = spec.center();
    const int lo = std::max(0, static_cast<int>(std::floor(c - radius - 1)));
    const int hi = std::min(n - 1, static_cast<int>(std::ceil(c + radius + 1)));
    for (int y = lo; y <= hi; ++y) {
        for (int x = lo; x <= hi; ++x) {
            if (std::hypot(x - c, y - c) > radius + 1.0) continue;
            if (!spec.antialias) {
                img.set_pixel(x, y, color_at(static_cast<double>(x), static_cast<double>(y)));
                continue;
            }
            // 4x4 supersampling box filter.
            std::array<int, 3> acc{};
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    const Rgb s = color_at(x - 0.375 + 0.25 * sx, y - 0.375 + 0.25 * sy);
                    for (int k = 0; k < 3; ++k) acc[k] += s[k];
                }
            img.set_pixel(x, y, {static_cast<std::uint8_t>((acc[0] + 8) / 16), static_cast<std::uint8_t>((acc[1] + 8) / 16),
                                 static_cast<std::uint8_t>((acc[2] + 8) / 16)});
        }
    }
    return img;
}

void check_permutation(const Permutation& p) {
    std::array<bool, 4> seen{};
    for (int v : p) {
        if (v < 0 || v > 3 || seen[v]) throw ParameterError("control permutation must be a bijection on {0,1,2,3}");
        seen[v] = true;
    }
}

RasterImage render_units(const StimulusSpec& spec, const std::array<Rgb, 4>& unit) {
    const Geometry g = geometry(spec);
    return rasterize(spec, [&](double x, double y) -> Rgb {
        const Region reg = region_at(spec, g, x, y);
        switch (reg.kind) {
            case Region::Margin: return kWhite;
            case Region::Center: return kMidGray;
            case Region::Ring: break;
        }
        return unit[reg.sub];
    });
}

std::array<Rgb, 4> colors_of(const std::array<UnitColor, 4>& unit) {
    return {unit[0].rgb, unit[1].rgb, unit[2].rgb, unit[3].rgb};
}

}  // namespace

void validate(const StimulusSpec& spec) {
    if (spec.rings < 1) throw ParameterError("rings must be >= 1");
    if (spec.elements_per_ring < 4 || spec.elements_per_ring % 4 != 0)
        throw ParameterError("elements_per_ring must be >= 4 and divisible by 4");
    if (!(spec.g1 > 0.0 && spec.g1 < spec.g2 && spec.g2 < 1.0))
        throw ParameterError("luminance levels must satisfy 0 < g1 < g2 < 1");
    if (spec.margin_px < 0) throw ParameterError("margin_px must be non-negative");
    if (spec.inner_radius_frac < 0.0 || spec.inner_radius_frac >= 1.0)
        throw ParameterError("inner_radius_frac must lie in [0, 1)");
    if (spec.control_permutation) check_permutation(*spec.control_permutation);
    if (spec.canvas_px - 2 * spec.margin_px < 8) throw GeometryError("canvas too small for the margin");
    const Geometry g = geometry(spec);
    if (spec.family == Family::RotatingSnakes || spec.family == Family::PeripheralDrift) {
        if (g.thickness < 2.0) throw GeometryError("canvas too small for requested rings");
        if (kTwoPi * g.radius / (4.0 * spec.elements_per_ring) < 2.0)
            throw GeometryError("canvas too small for requested elements per ring");
    }
    if (spec.family == Family::CentralDrift && (spec.cdi_sectors < 2 || spec.cdi_sectors % 2 != 0))
        throw ParameterError("cdi_sectors must be even and >= 2");
    if (spec.family == Family::Ouchi) {
        if (spec.ouchi_check_long < 1 || spec.ouchi_check_short < 1 || spec.ouchi_check_long == spec.ouchi_check_short)
            throw ParameterError("ouchi checks must be positive and elongated");
        if (spec.ouchi_patch_frac <= 0.0 || spec.ouchi_patch_frac >= 1.0)
            throw ParameterError("ouchi_patch_frac must lie in (0, 1)");
    }
}

std::array<UnitColor, 4> micropattern(const StimulusSpec& spec) {
    if (!(spec.g1 > 0.0 && spec.g1 < spec.g2 && spec.g2 < 1.0))
        throw ParameterError("luminance levels must satisfy 0 < g1 < g2 < 1");
    Rgb dark = gray(spec.g1);
    Rgb light = gray(spec.g2);
    if (spec.scheme != ColorScheme::Grayscale) {
        const auto [a, b] = scheme_pair(spec.scheme);
        dark = shade(a, spec.g1);
        light = shade(b, spec.g2);
    }
    std::array<UnitColor, 4> unit{{{kBlack, 0.0}, {dark, spec.g1}, {kWhite, 1.0}, {light, spec.g2}}};
    if (spec.sense == Sense::Cw) std::reverse(unit.begin(), unit.end());
    return unit;
}

std::vector<Region> layout_regions(const StimulusSpec& spec) {
    validate(spec);
    const Geometry g = geometry(spec);
    const int n = spec.canvas_px;
    std::vector<Region> out(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) out[static_cast<std::size_t>(y) * n + x] = region_at(spec, g, x, y);
    return out;
}

RasterImage render_snakes(const StimulusSpec& spec) {
    if (spec.family != Family::RotatingSnakes) throw ParameterError("render_snakes requires the rotating_snakes family");
    validate(spec);
    return render_units(spec, colors_of(micropattern(spec)));
}

RasterImage render_control(const StimulusSpec& spec) {
    if (spec.family != Family::RotatingSnakes) throw ParameterError("render_control requires the rotating_snakes family");
    validate(spec);
    const Permutation perm = spec.control_permutation.value_or(kDefaultControlPermutation);
    check_permutation(perm);
    const auto unit = colors_of(micropattern(spec));
    std::array<Rgb, 4> permuted{};
    for (int j = 0; j < 4; ++j) permuted[j] = unit[perm[j]];
    return render_units(spec, permuted);
}

RasterImage render_related(const StimulusSpec& spec) {
    if (spec.family == Family::RotatingSnakes) throw ParameterError("render_related does not handle rotating_snakes");
    if (spec.scheme != ColorScheme::Grayscale)
        throw ParameterError(to_string(spec.family) + " is only defined for the grayscale scheme");
    validate(spec);
    const Geometry g = geometry(spec);
    const bool cw = spec.sense == Sense::Cw;

    switch (spec.family) {
        case Family::PeripheralDrift: {
            // Monotone staircase with one large drop: unequal luminance steps.
            std::array<Rgb, 4> unit{kBlack, gray(spec.g1), gray(spec.g2), kWhite};
            if (cw) std::reverse(unit.begin(), unit.end());
            return render_units(spec, unit);
        }
        case Family::CentralDrift: {
            const double width = kTwoPi / spec.cdi_sectors;
            return rasterize(spec, [&](double x, double y) -> Rgb {
                const double dx = x - g.cx, dy = y - g.cy;
                if (std::hypot(dx, dy) > g.radius) return kWhite;
                const double t = frac(display_angle(dx, dy) / width);
                return gray(cw ? 1.0 - t : t);
            });
        }
        case Family::Ouchi: {
            const double half_patch = spec.ouchi_patch_frac * g.radius;
            const double lo = spec.ouchi_check_long, sh = spec.ouchi_check_short;
            return rasterize(spec, [&](double x, double y) -> Rgb {
                const double dx = x - g.cx, dy = y - g.cy;
                if (std::hypot(dx, dy) > g.radius) return kWhite;
                const bool center = std::abs(dx) <= half_patch && std::abs(dy) <= half_patch;
                // Surround checks elongated along x, center checks along y.
                const double cell_w = center ? sh : lo;
                const double cell_h = center ? lo : sh;
                const long parity = static_cast<long>(std::floor(dx / cell_w)) + static_cast<long>(std::floor(dy / cell_h));
                return (parity % 2 == 0) ? kBlack : kWhite;
            });
        }
        case Family::RotatingSnakes: break;
    }
    throw ParameterError("unsupported family");
}

RasterImage render(const StimulusSpec& spec, bool control) {
    if (spec.family == Family::RotatingSnakes) return control ? render_control(spec) : render_snakes(spec);
    if (control) throw ParameterError("control images exist only for rotating_snakes");
    return render_related(spec);
}

std::string to_string(Family f) {
    switch (f) {
        case Family::RotatingSnakes: return "rotating_snakes";
        case Family::PeripheralDrift: return "peripheral_drift";
        case Family::CentralDrift: return "central_drift";
        case Family::Ouchi: return "ouchi";
    }
    return "?";
}

std::string to_string(ColorScheme s) {
    switch (s) {
        case ColorScheme::Grayscale: return "grayscale";
        case ColorScheme::BlueYellow: return "blue_yellow";
        case ColorScheme::RedGreen: return "red_green";
    }
    return "?";
}

std::string to_string(Sense s) { return s == Sense::Ccw ? "ccw" : "cw"; }

std::string scheme_tag(ColorScheme s) {
    switch (s) {
        case ColorScheme::Grayscale: return "G";
        case ColorScheme::BlueYellow: return "B-Y";
        case ColorScheme::RedGreen: return "R-G";
    }
    return "?";
}

Family parse_family(const std::string& text) {
    for (auto f : {Family::RotatingSnakes, Family::PeripheralDrift, Family::CentralDrift, Family::Ouchi})
        if (to_string(f) == text) return f;
    throw ParameterError("unknown stimulus family '" + text + "'");
}

ColorScheme parse_scheme(const std::string& text) {
    for (auto s : {ColorScheme::Grayscale, ColorScheme::BlueYellow, ColorScheme::RedGreen})
        if (to_string(s) == text || scheme_tag(s) == text) return s;
    throw ParameterError("unknown color scheme '" + text + "'");
}

Sense parse_sense(const std::string& text) {
    if (text == "ccw") return Sense::Ccw;
    if (text == "cw") return Sense::Cw;
    throw ParameterError("unknown rotation sense '" + text + "'");
}

KeyValueDoc to_manifest(const StimulusSpec& spec, bool control) {
    KeyValueDoc doc;
    doc.set("family", to_string(spec.family));
    doc.set("color_scheme", to_string(spec.scheme));
    doc.set("rings", spec.rings);
    doc.set("elements_per_ring", spec.elements_per_ring);
    doc.set("g1", spec.g1);
    doc.set("g2", spec.g2);
    doc.set("sense", to_string(spec.sense));
    doc.set("canvas_px", spec.canvas_px);
    doc.set("margin_px", spec.margin_px);
    doc.set("control", std::string(control ? "true" : "false"));
    if (spec.control_permutation) {
        const auto& p = *spec.control_permutation;
        doc.set("control_permutation", std::to_string(p[0]) + "," + std::to_string(p[1]) + "," + std::to_string(p[2]) +
                                           "," + std::to_string(p[3]));
    }
    doc.set("seed", static_cast<long long>(spec.seed));
    doc.set("inner_radius_frac", spec.inner_radius_frac);
    doc.set("antialias", std::string(spec.antialias ? "true" : "false"));
    doc.set("cdi_sectors", spec.cdi_sectors);
    doc.set("ouchi_check_long", spec.ouchi_check_long);
    doc.set("ouchi_check_short", spec.ouchi_check_short);
    doc.set("ouchi_patch_frac", spec.ouchi_patch_frac);
    return doc;
}

StimulusSpec from_manifest(const KeyValueDoc& doc, bool* control) {
    StimulusSpec spec;
    spec.family = parse_family(doc.get_string("family", to_string(spec.family)));
    spec.scheme = parse_scheme(doc.get_string("color_scheme", to_string(spec.scheme)));
    spec.rings = static_cast<int>(doc.get_int("rings", spec.rings));
    spec.elements_per_ring = static_cast<int>(doc.get_int("elements_per_ring", spec.elements_per_ring));
    spec.g1 = doc.get_double("g1", spec.g1);
    spec.g2 = doc.get_double("g2", spec.g2);
    spec.sense = parse_sense(doc.get_string("sense", to_string(spec.sense)));
    spec.canvas_px = static_cast<int>(doc.get_int("canvas_px", spec.canvas_px));
    spec.margin_px = static_cast<int>(doc.get_int("margin_px", spec.margin_px));
    if (doc.has("control_permutation")) {
        const auto items = doc.get_int_list("control_permutation", {});
        if (items.size() != 4) throw ParameterError("control_permutation needs four entries");
        spec.control_permutation = Permutation{static_cast<int>(items[0]), static_cast<int>(items[1]),
                                               static_cast<int>(items[2]), static_cast<int>(items[3])};
    }
    spec.seed = static_cast<std::uint64_t>(doc.get_int("seed", 0));
    spec.inner_radius_frac = doc.get_double("inner_radius_frac", spec.inner_radius_frac);
    spec.antialias = doc.get_bool("antialias", spec.antialias);
    spec.cdi_sectors = static_cast<int>(doc.get_int("cdi_sectors", spec.cdi_sectors));
    spec.ouchi_check_long = static_cast<int>(doc.get_int("ouchi_check_long", spec.ouchi_check_long));
    spec.ouchi_check_short = static_cast<int>(doc.get_int("ouchi_check_short", spec.ouchi_check_short));
    spec.ouchi_patch_frac = doc.get_double("ouchi_patch_frac", spec.ouchi_patch_frac);
    if (control) *control = doc.get_bool("control", false);
    return spec;
}

}  // namespace illusion::stimgen
