/**
 * @file meflow.hpp
 * @brief First-order motion-energy optical flow: a bank of spatiotemporally
 *        separable quadrature Gabor units, energy maps on a strided grid,
 *        an opponent-energy decoder, and drifting-Gabor unit probes.
 *
 * Units are indexed (direction, spatial frequency, temporal frequency) with
 * temporal frequency varying fastest. Directions are counterclockwise as
 * displayed; direction 0 is rightward motion, 90 is upward.
 *
 * Spatial frequencies are in cycles/px and speeds in px/frame at the working
 * resolution. Each unit is evaluated on the pyramid level where its frequency
 * lies in [0.1, 0.2) cycles/px, with a Gaussian envelope of sd
 * sigma_cycles / level_frequency.
 */
#pragma once

#include "illusion/flow.hpp"
#include "illusion/raster.hpp"
#include "illusion/viewsim.hpp"

#include <complex>
#include <cstdint>
#include <vector>

namespace illusion::meflow {

using cplx = std::complex<double>;

std::vector<double> default_spatial_freqs();   ///< 0.0125 * sqrt(2)^k, k = 0..7
std::vector<double> default_temporal_freqs();  ///< 0.1 * 2^(k/4), k = -2..5

struct BankParams {
    int n_directions = 12;
    std::vector<double> spatial_freqs = default_spatial_freqs();
    std::vector<double> temporal_freqs = default_temporal_freqs();
    double sigma_cycles = 0.6;     ///< spatial sd in periods of the level frequency
    double support_sigmas = 3.0;   ///< spatial kernel half-width in sd
    double temporal_sigma = 2.5;   ///< frames
    int temporal_support = 15;     ///< frames, odd
    double level_band_low = 0.1;   ///< level frequencies lie in [low, 2*low)
};

struct Unit {
    int direction_index = 0;
    int sf_index = 0;
    int tf_index = 0;
    double direction_deg = 0.0;
    double sf = 0.0;        ///< cycles/px at working resolution
    double tf = 0.0;        ///< cycles/frame
    int level = 0;          ///< pyramid level the unit runs on
    double level_sf = 0.0;  ///< sf * 2^level
    double gain = 1.0;      ///< makes the energy for a unit-amplitude matched grating 1
    double speed() const { return tf / sf; }
};

/// Separable complex spatial kernel: k(x, y) = kx(x) * ky(y), taps centered.
struct SpatialKernel {
    std::vector<cplx> kx;
    std::vector<cplx> ky;
    int radius = 0;
    double sigma = 0.0;  ///< level px
};

struct TemporalKernel {
    std::vector<cplx> taps;  ///< tap j multiplies frame t + j - support/2
    double carrier = 0.0;    ///< cycles/frame, tuned so |response| peaks at the nominal tf
};

struct GaborBank {
    BankParams params;
    std::vector<double> directions_deg;
    std::vector<Unit> units;
    std::vector<SpatialKernel> spatial;    ///< per (direction, sf): index d * n_sf + s
    std::vector<TemporalKernel> temporal;  ///< per tf
    int n_levels = 1;
    std::uint64_t fingerprint = 0;

    std::size_t size() const { return units.size(); }
    int n_sf() const { return static_cast<int>(params.spatial_freqs.size()); }
    int n_tf() const { return static_cast<int>(params.temporal_freqs.size()); }
    int unit_index(int direction, int sf, int tf) const { return (direction * n_sf() + sf) * n_tf() + tf; }
    const SpatialKernel& spatial_of(const Unit& u) const { return spatial[static_cast<std::size_t>(u.direction_index * n_sf() + u.sf_index)]; }
    const TemporalKernel& temporal_of(const Unit& u) const { return temporal[static_cast<std::size_t>(u.tf_index)]; }
};

GaborBank build_bank(const BankParams& params = {});

/// Image-direction unit vector (x right, y down) of a counterclockwise angle.
std::array<double, 2> direction_vector(double direction_deg);

/// Sum of the 2D spatial kernel coefficients (the response to a uniform field).
cplx spatial_dc(const SpatialKernel& k);
/// Frequency response of the separable 2D kernel to exp(i 2 pi (fx x + fy y)).
cplx spatial_response(const SpatialKernel& k, double fx, double fy);
/// Response of a temporal kernel to exp(-i 2 pi nu t), i.e. motion at temporal frequency nu.
cplx temporal_response(const TemporalKernel& k, double nu);
/// Amplitude transfer of the pyramid's blur/decimate chain down to `level` for a
/// grating of working-resolution frequency (fx, fy).
double pyramid_transfer(double fx, double fy, int level);

struct GridParams {
    int stride = 8;               ///< grid spacing in working px; multiple of 2^(levels-1)
    double working_disk_px = 376; ///< target disk diameter at working resolution
    double working_scale = 0.0;   ///< explicit frame-to-working scale; 0 derives it from the disk
    int threads = 1;
};

/// Raw (pre-opponency, unnormalized) energies on a grid.
struct EnergyMaps {
    int grid_w = 0;
    int grid_h = 0;
    int stride = 8;
    int working_w = 0;
    int working_h = 0;
    int frame_w = 0;
    int frame_h = 0;
    double scale_x = 1.0;  ///< working px per frame px
    double scale_y = 1.0;
    int temporal_outputs = 0;
    std::uint64_t bank_fingerprint = 0;
    std::vector<double> energy;  ///< unit-major: energy[unit * cells + gy * grid_w + gx]

    std::size_t cells() const { return static_cast<std::size_t>(grid_w) * static_cast<std::size_t>(grid_h); }
    double at(std::size_t unit, int gx, int gy) const { return energy[unit * cells() + static_cast<std::size_t>(gy) * grid_w + gx]; }
    /// Spatial mean energy per unit.
    std::vector<double> mean_per_unit() const;
    /// Spatial maximum energy per unit.
    std::vector<double> peak_per_unit() const;
};

/// Energy of every unit, averaged over all temporal outputs the sequence allows.
EnergyMaps motion_energy(const viewsim::FrameSequence& seq, const GaborBank& bank, const GridParams& grid = {});
/// Same, from luma frames already at working resolution (size stride*m + 1 on both axes).
EnergyMaps motion_energy_working(const std::vector<GrayImage>& frames, const GaborBank& bank, int stride, int threads = 1);

/// E(theta) - E(theta + 180) for every unit; requires an even direction count.
std::vector<double> opponent_energy(const EnergyMaps& maps, const GaborBank& bank);

struct DecodeParams {
    double normalization_frac = 0.01;  ///< sigma as a fraction of the bank's maximal matched-grating energy
    double pool_sigma_cells = 1.5;
    double regularization = 0.05;      ///< ridge term relative to trace(A)
    double min_weight = 1e-6;          ///< pooled opponent weight below which a cell is invalid
};

/// Flow at frame resolution, px/frame.
FlowField decode_flow(const EnergyMaps& maps, const GaborBank& bank, const DecodeParams& params = {});

struct EstimatorParams {
    BankParams bank;
    GridParams grid;
    DecodeParams decode;
};

/// Convenience: motion_energy followed by decode_flow.
FlowField estimate_flow(const viewsim::FrameSequence& seq, const GaborBank& bank, const GridParams& grid = {},
                        const DecodeParams& decode = {});

struct UnitTuning {
    int unit = 0;
    int direction_index = 0;
    int sf_index = 0;
    int tf_index = 0;
    double direction_deg = 0.0;
    double sf = 0.0;
    double tf = 0.0;
    double response_std = 0.0;
};

struct ProbeParams {
    int frames = 512;              ///< probe duration; response std is taken over all of it
    double aperture_sigmas = 2.0;  ///< Gabor probe aperture sd in units of the unit's spatial sd
    double phase = 0.0;
};

/// Standard deviation over time of a unit's even (real) response to a drifting
/// Gabor probe centered on its receptive field.
double probe_response_std(const GaborBank& bank, const Unit& unit, double direction_deg, double sf, double tf,
                          const ProbeParams& params = {});

/// For each unit, the (direction, sf, tf) probe on the bank's own grid with the
/// largest response standard deviation.
std::vector<UnitTuning> probe_unit_tuning(const GaborBank& bank, const ProbeParams& params = {});

enum class Activation { Mean, Peak };

/// Units among the top 25% by |activation(rot) - activation(static)| whose
/// rotation activation exceeds the static one, sorted by unit index.
std::vector<int> rank_rotation_units(const EnergyMaps& e_rot, const EnergyMaps& e_static, Activation activation = Activation::Mean,
                                     double top_fraction = 0.25);

}  // namespace illusion::meflow
