/**
 * @file viewsim.hpp
 * @brief Frame sequences simulating viewing conditions, with displacement logs.
 *
 * Shift directions are angles in image coordinates (x right, y down), so
 * 225 degrees moves the stimulus from bottom-right to top-left and 45 degrees
 * from top-left to bottom-right. A shift of magnitude delta moves the image
 * by delta pixels along each axis the direction has a component on:
 * diagonals move (+-delta, +-delta), axis directions move delta along one axis.
 */
#pragma once

#include "illusion/keyvalue.hpp"
#include "illusion/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace illusion::stimgen {
struct StimulusSpec;
}

namespace illusion::viewsim {

enum class Kind { Static, Onset, Shift, RandomSlip, PeripheralShift, VeridicalRotation };

inline constexpr std::array<int, 5> kShiftMagnitudes{15, 30, 60, 90, 120};
inline constexpr int kMaxShifts = 3;
inline constexpr int kPeripheralCanvasPx = 2772;
inline constexpr int kPeripheralStimulusPx = 1386;

struct ViewingCondition {
    Kind kind = Kind::Static;
    int n_frames = 15;
    int delta_px = 30;
    int direction_deg = 225;
    std::vector<int> shift_frames;  ///< frame indices at which the image jumps
    int onset_frame = 3;
    double omega = 0.0;             ///< degrees/frame, counterclockwise as displayed
    std::uint64_t seed = 0;
    bool allow_any_delta = false;   ///< lift the {15,30,60,90,120} / 45-degree restrictions
    int peripheral_canvas_px = kPeripheralCanvasPx;
    int peripheral_stimulus_px = kPeripheralStimulusPx;
};

struct DisplacementEvent {
    int frame = 0;
    int dx = 0;
    int dy = 0;
    friend bool operator==(const DisplacementEvent&, const DisplacementEvent&) = default;
};

/// Where the stimulus disk sits in a frame (pixel-center coordinates).
struct DiskGeometry {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
};

DiskGeometry disk_of(const stimgen::StimulusSpec& spec);

struct FrameSequence {
    std::vector<RasterImage> frames;
    std::vector<DisplacementEvent> events;
    ViewingCondition condition;
    double px_per_degree = 50.0;
    double frame_rate_hz = 5.0;  ///< nominal, for exported movies only
    DiskGeometry disk;           ///< disk position in frame 0

    /// Sum of all logged displacements.
    std::array<int, 2> total_displacement() const;
    /// Disk position in the final frame.
    DiskGeometry final_disk() const;
};

/// Throws ParameterError when the condition breaks its invariants.
void validate(const ViewingCondition& cond);

/// Integer displacement of one shift event.
std::array<int, 2> shift_vector(int delta_px, int direction_deg);

/// Evenly spaced shift frames: round(j*n/(k+1)), j = 1..k.
std::vector<int> default_shift_frames(int n_frames, int n_shifts);

FrameSequence make_static(const RasterImage& image, int n_frames, DiskGeometry disk = {});
FrameSequence make_onset(const RasterImage& image, int n_frames, int onset_frame, DiskGeometry disk = {});
FrameSequence make_shift(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk = {});
FrameSequence make_random_slip(const RasterImage& image, int n_frames, std::uint64_t seed, DiskGeometry disk = {});
FrameSequence make_peripheral(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk = {});
FrameSequence make_veridical_rotation(const RasterImage& image, double omega, int n_frames, DiskGeometry disk = {});

/// Dispatches on cond.kind.
FrameSequence make_sequence(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk = {});

/// Event log a condition produces, without rendering any frame.
std::vector<DisplacementEvent> plan_events(const ViewingCondition& cond);
/// Disk position in the frames a condition produces, given its position in the source image.
DiskGeometry frame_disk(const ViewingCondition& cond, DiskGeometry source_disk, int source_width, int source_height);

struct ExportOptions {
    bool fixation_cross = false;  ///< black cross in the bottom-right corner
};

/// Writes frames/frame_NNNN.png and manifest.txt under `dir`.
void save_sequence(const FrameSequence& seq, const std::filesystem::path& dir, const ExportOptions& opts = {});
FrameSequence load_sequence(const std::filesystem::path& dir);

KeyValueDoc condition_manifest(const ViewingCondition& cond);
ViewingCondition condition_from_manifest(const KeyValueDoc& doc);

std::string to_string(Kind k);
Kind parse_kind(const std::string& text);

void draw_fixation_cross(RasterImage& img);

}  // namespace illusion::viewsim
