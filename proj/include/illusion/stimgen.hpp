/**
 * @file stimgen.hpp
 * @brief Parametric rendering of anomalous-motion illusion and control images.
 *
 * Geometry conventions (shared by every module):
 *  - Image coordinates: x to the right, y down, pixel centers at integers.
 *  - The disk is centered at ((W-1)/2, (H-1)/2) with radius
 *    (canvas_px - 2*margin_px)/2.
 *  - Angles are measured counterclockwise *as displayed*, i.e. from +x
 *    towards -y in image coordinates.
 *
 * For Rotating Snakes, one element is one full 4-color micropattern unit
 * occupying 360/elements_per_ring degrees; its four sub-sectors follow the
 * micropattern in counterclockwise order. Odd rings are offset by half an
 * element.
 */
#pragma once

#include "illusion/keyvalue.hpp"
#include "illusion/raster.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace illusion::stimgen {

enum class Family { RotatingSnakes, PeripheralDrift, CentralDrift, Ouchi };
enum class ColorScheme { Grayscale, BlueYellow, RedGreen };
enum class Sense { Ccw, Cw };

using Permutation = std::array<int, 4>;

/// Destroys the directed luminance staircase while keeping the unit's colors.
inline constexpr Permutation kDefaultControlPermutation{0, 2, 1, 3};

struct StimulusSpec {
    Family family = Family::RotatingSnakes;
    ColorScheme scheme = ColorScheme::Grayscale;
    int rings = 6;
    int elements_per_ring = 24;
    double g1 = 0.25;  ///< dark intermediate luminance
    double g2 = 0.75;  ///< light intermediate luminance
    Sense sense = Sense::Ccw;
    int canvas_px = 1506;
    int margin_px = 120;
    std::optional<Permutation> control_permutation;
    std::uint64_t seed = 0;

    // Extensions for geometry the published exemplars leave open.
    double inner_radius_frac = 0.08;  ///< uniform mid-gray center, fraction of disk radius
    bool antialias = false;           ///< 1-px box-filtered element boundaries
    int cdi_sectors = 12;
    int ouchi_check_long = 32;        ///< check size along the stripe direction, px
    int ouchi_check_short = 8;
    double ouchi_patch_frac = 0.4;    ///< center patch side as fraction of disk diameter

    double disk_radius() const { return (canvas_px - 2 * margin_px) / 2.0; }
    double center() const { return (canvas_px - 1) / 2.0; }
};

/// Throws ParameterError / GeometryError if the spec breaks its invariants.
void validate(const StimulusSpec& spec);

struct UnitColor {
    Rgb rgb;
    double luminance;  ///< nominal luminance level in [0, 1]
};

/// The repeating 4-color unit in counterclockwise angular order.
std::array<UnitColor, 4> micropattern(const StimulusSpec& spec);

/// Per-pixel region label; identical for illusion and control of the same spec.
struct Region {
    enum Kind : std::uint8_t { Margin, Center, Ring } kind = Margin;
    int ring = -1;
    int element = -1;
    int sub = -1;  ///< sub-sector 0..3 inside the element
};

/// Layout of a Rotating Snakes spec (no colors). Same for every permutation.
std::vector<Region> layout_regions(const StimulusSpec& spec);

RasterImage render_snakes(const StimulusSpec& spec);
/// Same geometry with the unit reordered by spec.control_permutation
/// (kDefaultControlPermutation when unset).
RasterImage render_control(const StimulusSpec& spec);
/// Peripheral drift, central drift and Ouchi families (grayscale only).
RasterImage render_related(const StimulusSpec& spec);
/// Dispatches on family; `control` selects render_control for Rotating Snakes.
RasterImage render(const StimulusSpec& spec, bool control = false);

std::string to_string(Family f);
std::string to_string(ColorScheme s);
std::string to_string(Sense s);
Family parse_family(const std::string& text);
ColorScheme parse_scheme(const std::string& text);
Sense parse_sense(const std::string& text);
/// Short tag used in stimulus ids and table columns: G, B-Y, R-G.
std::string scheme_tag(ColorScheme s);

/// Sidecar manifest recording every field of the spec.
KeyValueDoc to_manifest(const StimulusSpec& spec, bool control);
StimulusSpec from_manifest(const KeyValueDoc& doc, bool* control = nullptr);

}  // namespace illusion::stimgen
