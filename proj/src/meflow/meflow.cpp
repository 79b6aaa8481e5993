#include "illusion/meflow.hpp"

#include "illusion/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>
#include <thread>

namespace illusion::meflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Energy of a full-contrast (luma amplitude 0.5) grating in a matched unit.
constexpr double kMatchedGratingEnergy = 0.25;

double binomial_transfer(double f) {
    const double h = (1.0 + std::cos(kTwoPi * f)) / 2.0;
    return h * h;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fingerprint_of(const BankParams& p) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const auto& v) { h = fnv1a(h, &v, sizeof(v)); };
    mix(p.n_directions);
    for (double f : p.spatial_freqs) mix(f);
    mix(-1.0);
    for (double f : p.temporal_freqs) mix(f);
    mix(p.sigma_cycles);
    mix(p.support_sigmas);
    mix(p.temporal_sigma);
    mix(p.temporal_support);
    mix(p.level_band_low);
    return h;
}

std::vector<cplx> gabor_1d(double freq, double sigma, int radius, bool zero_dc) {
    std::vector<cplx> taps(static_cast<std::size_t>(2 * radius + 1));
    std::vector<double> env(taps.size());
    cplx sum = 0.0;
    double env_sum = 0.0;
    for (int q = -radius; q <= radius; ++q) {
        const double g = std::exp(-0.5 * q * q / (sigma * sigma));
        env[q + radius] = g;
        taps[q + radius] = g * std::polar(1.0, -kTwoPi * freq * q);
        sum += taps[q + radius];
        env_sum += g;
    }
    if (zero_dc) {
        const cplx alpha = sum / env_sum;
        for (std::size_t i = 0; i < taps.size(); ++i) taps[i] -= alpha * env[i];
    }
    return taps;
}

TemporalKernel temporal_kernel(double carrier, double sigma, int support) {
    TemporalKernel k;
    k.carrier = carrier;
    const int half = support / 2;
    k.taps.resize(static_cast<std::size_t>(support));
    std::vector<double> env(k.taps.size());
    cplx sum = 0.0;
    double env_sum = 0.0;
    for (int j = 0; j < support; ++j) {
        const double tau = j - half;
        env[j] = std::exp(-0.5 * tau * tau / (sigma * sigma));
        k.taps[j] = env[j] * std::polar(1.0, kTwoPi * carrier * tau);
        sum += k.taps[j];
        env_sum += env[j];
    }
    const cplx alpha = sum / env_sum;
    for (int j = 0; j < support; ++j) k.taps[j] -= alpha * env[j];
    return k;
}

// Frequency in [0, 0.5] where |temporal_response| peaks.
double temporal_peak(const TemporalKernel& k) {
    constexpr int n = 2000;
    int best = 0;
    double best_mag = -1.0;
    for (int i = 0; i <= n; ++i) {
        const double m = std::abs(temporal_response(k, 0.5 * i / n));
        if (m > best_mag) {
            best_mag = m;
            best = i;
        }
    }
    // Golden-section refinement inside the bracketing grid cells.
    double lo = 0.5 * std::max(0, best - 1) / n, hi = 0.5 * std::min(n, best + 1) / n;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
        const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
        if (std::abs(temporal_response(k, a)) > std::abs(temporal_response(k, b))) {
            hi = b;
        } else {
            lo = a;
        }
    }
    return 0.5 * (lo + hi);
}

TemporalKernel tuned_temporal_kernel(double tf, double sigma, int support) {
    // The zero-DC correction moves the peak upwards, most at low carriers;
    // bisect the carrier so the response peak lands on tf.
    double lo = 1e-6, hi = 0.5;
    if (temporal_peak(temporal_kernel(lo, sigma, support)) > tf)
        throw ParameterError("temporal frequency " + std::to_string(tf) + " is below what a " + std::to_string(support) +
                             "-frame zero-mean kernel can peak at");
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (temporal_peak(temporal_kernel(mid, sigma, support)) < tf) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return temporal_kernel(0.5 * (lo + hi), sigma, support);
}

// ---- pyramid -------------------------------------------------------------

GrayImage blur_decimate(const GrayImage& in) {
    static constexpr double w[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    const int W = in.width, H = in.height;
    const int ow = (W + 1) / 2, oh = (H + 1) / 2;
    // Horizontal blur evaluated only at kept columns.
    GrayImage tmp(ow, H);
    for (int y = 0; y < H; ++y)
        for (int ox = 0; ox < ow; ++ox) {
            const int x = 2 * ox;
            double s = 0.0;
            for (int q = -2; q <= 2; ++q) s += w[q + 2] * in.at(std::clamp(x + q, 0, W - 1), y);
            tmp.at(ox, y) = s;
        }
    GrayImage out(ow, oh);
    for (int oy = 0; oy < oh; ++oy) {
        const int y = 2 * oy;
        for (int ox = 0; ox < ow; ++ox) {
            double s = 0.0;
            for (int q = -2; q <= 2; ++q) s += w[q + 2] * tmp.at(ox, std::clamp(y + q, 0, H - 1));
            out.at(ox, oy) = s;
        }
    }
    return out;
}

// Complex responses of one spatial kernel at grid cells of one level, for every frame.
void spatial_responses(const std::vector<GrayImage>& level_frames, const SpatialKernel& k, int level_stride, int grid_w,
                       int grid_h, std::vector<cplx>& out) {
    const int W = level_frames.front().width, H = level_frames.front().height;
    const int r = k.radius;
    const std::size_t cells = static_cast<std::size_t>(grid_w) * grid_h;
    out.assign(cells * level_frames.size(), cplx(0.0));
    std::vector<double> kxr(k.kx.size()), kxi(k.kx.size());
    for (std::size_t i = 0; i < k.kx.size(); ++i) {
        kxr[i] = k.kx[i].real();
        kxi[i] = k.kx[i].imag();
    }
    // Clamped column indices for every grid column.
    std::vector<int> cols(static_cast<std::size_t>(grid_w) * (2 * r + 1));
    for (int gx = 0; gx < grid_w; ++gx)
        for (int q = -r; q <= r; ++q) cols[gx * (2 * r + 1) + q + r] = std::clamp(gx * level_stride + q, 0, W - 1);
    std::vector<cplx> hpass(static_cast<std::size_t>(H) * grid_w);
    for (std::size_t t = 0; t < level_frames.size(); ++t) {
        const auto& img = level_frames[t];
        for (int y = 0; y < H; ++y) {
            const double* row = img.data.data() + static_cast<std::size_t>(y) * W;
            for (int gx = 0; gx < grid_w; ++gx) {
                const int* ci = cols.data() + gx * (2 * r + 1);
                double re = 0.0, im = 0.0;
                for (int j = 0; j < 2 * r + 1; ++j) {
                    const double v = row[ci[j]];
                    re += kxr[j] * v;
                    im += kxi[j] * v;
                }
                hpass[static_cast<std::size_t>(y) * grid_w + gx] = {re, im};
            }
        }
        cplx* dst = out.data() + t * cells;
        for (int gy = 0; gy < grid_h; ++gy) {
            const int y0 = gy * level_stride;
            for (int gx = 0; gx < grid_w; ++gx) {
                cplx s = 0.0;
                for (int q = -r; q <= r; ++q) s += k.ky[q + r] * hpass[static_cast<std::size_t>(std::clamp(y0 + q, 0, H - 1)) * grid_w + gx];
                dst[static_cast<std::size_t>(gy) * grid_w + gx] = s;
            }
        }
    }
}

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> gaussian_taps(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    double s = 0.0;
    for (int q = -r; q <= r; ++q) s += w[q + r] = std::exp(-0.5 * q * q / (sigma * sigma));
    for (auto& v : w) v /= s;
    return w;
}

// Separable zero-padded Gaussian smoothing of a grid_w x grid_h map.
void pool(std::vector<double>& map, int gw, int gh, const std::vector<double>& w) {
    const int r = static_cast<int>(w.size() / 2);
    std::vector<double> tmp(map.size(), 0.0);
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            double s = 0.0;
            for (int q = -r; q <= r; ++q)
                if (x + q >= 0 && x + q < gw) s += w[q + r] * map[static_cast<std::size_t>(y) * gw + x + q];
            tmp[static_cast<std::size_t>(y) * gw + x] = s;
        }
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            double s = 0.0;
            for (int q = -r; q <= r; ++q)
                if (y + q >= 0 && y + q < gh) s += w[q + r] * tmp[static_cast<std::size_t>(y + q) * gw + x];
            map[static_cast<std::size_t>(y) * gw + x] = s;
        }
}

// Sum over t = 0..T-1 of z^t.
cplx geometric_sum(cplx z, int T) {
    if (std::abs(1.0 - z) < 1e-12) return static_cast<double>(T);
    return (1.0 - std::pow(z, T)) / (1.0 - z);
}

}  // namespace

std::vector<double> default_spatial_freqs() {
    std::vector<double> f;
    for (int k = 0; k < 8; ++k) f.push_back(0.0125 * std::pow(std::numbers::sqrt2, k));
    return f;
}

std::vector<double> default_temporal_freqs() {
    std::vector<double> f;
    for (int k = -2; k <= 5; ++k) f.push_back(0.1 * std::pow(2.0, k / 4.0));
    return f;
}

std::array<double, 2> direction_vector(double direction_deg) {
    const double a = direction_deg * std::numbers::pi / 180.0;
    return {std::cos(a), -std::sin(a)};
}

cplx spatial_dc(const SpatialKernel& k) {
    cplx sx = 0.0, sy = 0.0;
    for (const auto& c : k.kx) sx += c;
    for (const auto& c : k.ky) sy += c;
    return sx * sy;
}

cplx spatial_response(const SpatialKernel& k, double fx, double fy) {
    cplx sx = 0.0, sy = 0.0;
    for (int q = -k.radius; q <= k.radius; ++q) {
        sx += k.kx[q + k.radius] * std::polar(1.0, kTwoPi * fx * q);
        sy += k.ky[q + k.radius] * std::polar(1.0, kTwoPi * fy * q);
    }
    return sx * sy;
}

cplx temporal_response(const TemporalKernel& k, double nu) {
    const int half = static_cast<int>(k.taps.size()) / 2;
    cplx s = 0.0;
    for (std::size_t j = 0; j < k.taps.size(); ++j) s += k.taps[j] * std::polar(1.0, -kTwoPi * nu * (static_cast<int>(j) - half));
    return s;
}

double pyramid_transfer(double fx, double fy, int level) {
    double t = 1.0;
    for (int l = 0; l < level; ++l) t *= binomial_transfer(fx * std::ldexp(1.0, l)) * binomial_transfer(fy * std::ldexp(1.0, l));
    return t;
}

GaborBank build_bank(const BankParams& params) {
    if (params.n_directions < 2) throw ParameterError("a bank needs at least 2 directions");
    if (params.spatial_freqs.empty() || params.temporal_freqs.empty()) throw ParameterError("frequency lists must be non-empty");
    for (double f : params.spatial_freqs)
        if (!(f > 0.0) || f >= 0.5) throw ParameterError("spatial frequencies must lie in (0, 0.5) cycles/px");
    for (double f : params.temporal_freqs)
        if (!(f > 0.0) || f >= 0.5) throw ParameterError("temporal frequencies must lie in (0, 0.5) cycles/frame");
    if (params.temporal_support < 3 || params.temporal_support % 2 == 0) throw ParameterError("temporal support must be odd and >= 3");
    if (!(params.sigma_cycles > 0.0) || !(params.support_sigmas > 0.0) || !(params.temporal_sigma > 0.0) ||
        !(params.level_band_low > 0.0) || params.level_band_low >= 0.25)
        throw ParameterError("bank widths and level band must be positive (band low < 0.25)");

    GaborBank bank;
    bank.params = params;
    for (int d = 0; d < params.n_directions; ++d) bank.directions_deg.push_back(360.0 * d / params.n_directions);

    std::vector<int> sf_level;
    for (double f : params.spatial_freqs) {
        int level = 0;
        while (std::ldexp(f, level) < params.level_band_low * (1.0 - 1e-9)) ++level;
        sf_level.push_back(level);
        bank.n_levels = std::max(bank.n_levels, level + 1);
    }

    for (int d = 0; d < params.n_directions; ++d) {
        const auto dir = direction_vector(bank.directions_deg[d]);
        for (std::size_t s = 0; s < params.spatial_freqs.size(); ++s) {
            const double fl = std::ldexp(params.spatial_freqs[s], sf_level[s]);
            SpatialKernel k;
            k.sigma = params.sigma_cycles / fl;
            if (2.0 * params.support_sigmas * k.sigma < 3.0) throw ParameterError("spatial support below 3 px");
            k.radius = static_cast<int>(std::ceil(params.support_sigmas * k.sigma));
            // Zeroing the DC of the factor along the dominant axis zeroes the 2D DC.
            const bool x_dominant = std::abs(dir[0]) >= std::abs(dir[1]);
            k.kx = gabor_1d(fl * dir[0], k.sigma, k.radius, x_dominant);
            k.ky = gabor_1d(fl * dir[1], k.sigma, k.radius, !x_dominant);
            bank.spatial.push_back(std::move(k));
        }
    }
    for (double tf : params.temporal_freqs)
        bank.temporal.push_back(tuned_temporal_kernel(tf, params.temporal_sigma, params.temporal_support));

    for (int d = 0; d < params.n_directions; ++d) {
        const auto dir = direction_vector(bank.directions_deg[d]);
        for (int s = 0; s < bank.n_sf(); ++s)
            for (int t = 0; t < bank.n_tf(); ++t) {
                Unit u;
                u.direction_index = d;
                u.sf_index = s;
                u.tf_index = t;
                u.direction_deg = bank.directions_deg[d];
                u.sf = params.spatial_freqs[s];
                u.tf = params.temporal_freqs[t];
                u.level = sf_level[s];
                u.level_sf = std::ldexp(u.sf, u.level);
                const auto& sk = bank.spatial[static_cast<std::size_t>(d * bank.n_sf() + s)];
                const double amp = 0.5 * std::abs(spatial_response(sk, u.level_sf * dir[0], u.level_sf * dir[1])) *
                                   std::abs(temporal_response(bank.temporal[t], u.tf)) *
                                   pyramid_transfer(u.sf * dir[0], u.sf * dir[1], u.level);
                u.gain = 1.0 / amp;
                bank.units.push_back(u);
            }
    }
    bank.fingerprint = fingerprint_of(params);
    return bank;
}

std::vector<double> EnergyMaps::mean_per_unit() const {
    const std::size_t n = cells();
    std::vector<double> out(n ? energy.size() / n : 0, 0.0);
    for (std::size_t u = 0; u < out.size(); ++u) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += energy[u * n + c];
        out[u] = s / static_cast<double>(n);
    }
    return out;
}

std::vector<double> EnergyMaps::peak_per_unit() const {
    const std::size_t n = cells();
    std::vector<double> out(n ? energy.size() / n : 0, 0.0);
    for (std::size_t u = 0; u < out.size(); ++u)
        out[u] = *std::max_element(energy.begin() + static_cast<std::ptrdiff_t>(u * n), energy.begin() + static_cast<std::ptrdiff_t>((u + 1) * n));
    return out;
}

EnergyMaps motion_energy_working(const std::vector<GrayImage>& frames, const GaborBank& bank, int stride, int threads) {
    const int support = bank.params.temporal_support;
    if (static_cast<int>(frames.size()) < support)
        throw ParameterError("sequence of " + std::to_string(frames.size()) + " frames is shorter than the temporal support (" +
                             std::to_string(support) + ")");
    const int W = frames.front().width, H = frames.front().height;
    for (const auto& f : frames)
        if (f.width != W || f.height != H) throw ParameterError("frames differ in size");
    const int top = 1 << (bank.n_levels - 1);
    if (stride < 1 || stride % top != 0)
        throw ParameterError("grid stride must be a multiple of " + std::to_string(top) + " for this bank");
    if ((W - 1) % stride != 0 || (H - 1) % stride != 0 || W < stride + 1 || H < stride + 1)
        throw ParameterError("working frames must be stride*m + 1 pixels on both axes");

    EnergyMaps maps;
    maps.stride = stride;
    maps.working_w = maps.frame_w = W;
    maps.working_h = maps.frame_h = H;
    maps.grid_w = (W - 1) / stride + 1;
    maps.grid_h = (H - 1) / stride + 1;
    maps.bank_fingerprint = bank.fingerprint;
    const int n_out = static_cast<int>(frames.size()) - support + 1;
    maps.temporal_outputs = n_out;
    const std::size_t cells = maps.cells();
    maps.energy.assign(bank.size() * cells, 0.0);

    std::vector<std::vector<GrayImage>> pyramid(static_cast<std::size_t>(bank.n_levels));
    pyramid[0] = frames;
    for (int l = 1; l < bank.n_levels; ++l)
        for (const auto& f : pyramid[l - 1]) pyramid[l].push_back(blur_decimate(f));

    const int n_pairs = static_cast<int>(bank.spatial.size());
    parallel_for(n_pairs, threads, [&](int pair) {
        const int d = pair / bank.n_sf(), s = pair % bank.n_sf();
        const auto& first = bank.units[static_cast<std::size_t>(bank.unit_index(d, s, 0))];
        const int level = first.level;
        std::vector<cplx> resp;
        spatial_responses(pyramid[level], bank.spatial[pair], stride >> level, maps.grid_w, maps.grid_h, resp);
        for (int t = 0; t < bank.n_tf(); ++t) {
            const auto ui = static_cast<std::size_t>(bank.unit_index(d, s, t));
            const auto& taps = bank.temporal[t].taps;
            const double g2 = bank.units[ui].gain * bank.units[ui].gain / n_out;
            double* dst = maps.energy.data() + ui * cells;
            for (std::size_t c = 0; c < cells; ++c) {
                double e = 0.0;
                for (int o = 0; o < n_out; ++o) {
                    cplx y = 0.0;
                    for (int j = 0; j < support; ++j) y += taps[j] * resp[static_cast<std::size_t>(o + j) * cells + c];
                    e += std::norm(y);
                }
                dst[c] = e * g2;
            }
        }
    });
    return maps;
}

EnergyMaps motion_energy(const viewsim::FrameSequence& seq, const GaborBank& bank, const GridParams& grid) {
    if (seq.frames.empty()) throw ParameterError("empty sequence");
    const int W = seq.frames.front().width(), H = seq.frames.front().height();
    double scale = grid.working_scale;
    if (scale <= 0.0) {
        scale = seq.disk.radius > 0.0 ? grid.working_disk_px / (2.0 * seq.disk.radius) : 1.0;
        scale = std::min(scale, 1.0);
    }
    auto fit = [&](int n) {
        const long m = std::lround((n * scale - 1.0) / grid.stride);
        return static_cast<int>(std::max(1L, m)) * grid.stride + 1;
    };
    const int Ww = fit(W), Hw = fit(H);
    std::vector<GrayImage> work;
    work.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        if (f.width() != W || f.height() != H) throw ParameterError("frames differ in size");
        auto luma = to_luma(f);
        work.push_back(Ww == W && Hw == H ? std::move(luma) : resize_area(luma, Ww, Hw));
    }
    auto maps = motion_energy_working(work, bank, grid.stride, grid.threads);
    maps.frame_w = W;
    maps.frame_h = H;
    maps.scale_x = static_cast<double>(Ww) / W;
    maps.scale_y = static_cast<double>(Hw) / H;
    return maps;
}

std::vector<double> opponent_energy(const EnergyMaps& maps, const GaborBank& bank) {
    if (maps.bank_fingerprint != bank.fingerprint) throw ParameterError("energy maps come from a different bank");
    const int nd = bank.params.n_directions;
    if (nd % 2 != 0) throw ParameterError("opponency needs an even number of directions");
    const std::size_t cells = maps.cells();
    std::vector<double> out(maps.energy.size());
    for (const auto& u : bank.units) {
        const auto i = static_cast<std::size_t>(bank.unit_index(u.direction_index, u.sf_index, u.tf_index));
        const auto j = static_cast<std::size_t>(bank.unit_index((u.direction_index + nd / 2) % nd, u.sf_index, u.tf_index));
        for (std::size_t c = 0; c < cells; ++c) out[i * cells + c] = maps.energy[i * cells + c] - maps.energy[j * cells + c];
    }
    return out;
}

FlowField decode_flow(const EnergyMaps& maps, const GaborBank& bank, const DecodeParams& params) {
    if (maps.bank_fingerprint != bank.fingerprint) throw ParameterError("energy maps come from a different bank");
    const int nd = bank.params.n_directions;
    if (nd % 2 != 0) throw ParameterError("decoding needs an even number of directions");
    const std::size_t cells = maps.cells();
    const std::size_t n_units = bank.size();
    if (maps.energy.size() != n_units * cells) throw ParameterError("energy maps do not match the bank size");

    const double sigma = params.normalization_frac * kMatchedGratingEnergy;
    std::vector<double> total(cells, 0.0);
    for (std::size_t u = 0; u < n_units; ++u)
        for (std::size_t c = 0; c < cells; ++c) total[c] += maps.energy[u * cells + c];

    // Least-squares velocity from rectified opponent energies: every unit
    // constrains the velocity component along its direction to its speed.
    std::vector<double> axx(cells, 0.0), axy(cells, 0.0), ayy(cells, 0.0), bx(cells, 0.0), by(cells, 0.0);
    for (const auto& u : bank.units) {
        const auto i = static_cast<std::size_t>(bank.unit_index(u.direction_index, u.sf_index, u.tf_index));
        const auto j = static_cast<std::size_t>(bank.unit_index((u.direction_index + nd / 2) % nd, u.sf_index, u.tf_index));
        const auto d = direction_vector(u.direction_deg);
        const double speed = u.speed();
        for (std::size_t c = 0; c < cells; ++c) {
            const double w = (maps.energy[i * cells + c] - maps.energy[j * cells + c]) / (sigma + total[c]);
            if (w <= 0.0) continue;
            axx[c] += w * d[0] * d[0];
            axy[c] += w * d[0] * d[1];
            ayy[c] += w * d[1] * d[1];
            bx[c] += w * speed * d[0];
            by[c] += w * speed * d[1];
        }
    }
    if (params.pool_sigma_cells > 0.0) {
        const auto taps = gaussian_taps(params.pool_sigma_cells);
        for (auto* m : {&axx, &axy, &ayy, &bx, &by}) pool(*m, maps.grid_w, maps.grid_h, taps);
    }
    std::vector<double> gu(cells, 0.0), gv(cells, 0.0);
    std::vector<std::uint8_t> gvalid(cells, 0);
    for (std::size_t c = 0; c < cells; ++c) {
        const double tr = axx[c] + ayy[c];
        if (!(tr > params.min_weight)) continue;
        const double a = axx[c] + params.regularization * tr, b = axy[c], d = ayy[c] + params.regularization * tr;
        const double det = a * d - b * b;
        gu[c] = (d * bx[c] - b * by[c]) / det;
        gv[c] = (a * by[c] - b * bx[c]) / det;
        gvalid[c] = 1;
    }

    // Bilinear upsampling from grid cells to frame pixels, over valid cells only.
    FlowField out(maps.frame_w, maps.frame_h, false);
    for (int y = 0; y < maps.frame_h; ++y) {
        const double gy = ((y + 0.5) * maps.scale_y - 0.5) / maps.stride;
        const double cy = std::clamp(gy, 0.0, static_cast<double>(maps.grid_h - 1));
        const int y0 = std::min(static_cast<int>(cy), maps.grid_h - 1), y1 = std::min(y0 + 1, maps.grid_h - 1);
        const double fy = cy - y0;
        for (int x = 0; x < maps.frame_w; ++x) {
            const double gx = ((x + 0.5) * maps.scale_x - 0.5) / maps.stride;
            const double cx = std::clamp(gx, 0.0, static_cast<double>(maps.grid_w - 1));
            const int x0 = std::min(static_cast<int>(cx), maps.grid_w - 1), x1 = std::min(x0 + 1, maps.grid_w - 1);
            const double fx = cx - x0;
            double wsum = 0.0, u = 0.0, v = 0.0;
            const std::array<std::pair<std::size_t, double>, 4> corners{{
                {static_cast<std::size_t>(y0) * maps.grid_w + x0, (1 - fx) * (1 - fy)},
                {static_cast<std::size_t>(y0) * maps.grid_w + x1, fx * (1 - fy)},
                {static_cast<std::size_t>(y1) * maps.grid_w + x0, (1 - fx) * fy},
                {static_cast<std::size_t>(y1) * maps.grid_w + x1, fx * fy},
            }};
            for (const auto& [c, w] : corners) {
                if (!gvalid[c] || w <= 0.0) continue;
                wsum += w;
                u += w * gu[c];
                v += w * gv[c];
            }
            if (wsum <= 0.0) continue;
            const auto i = out.index(x, y);
            out.valid[i] = 1;
            out.u[i] = u / wsum / maps.scale_x;
            out.v[i] = v / wsum / maps.scale_y;
        }
    }
    return out;
}

FlowField estimate_flow(const viewsim::FrameSequence& seq, const GaborBank& bank, const GridParams& grid,
                        const DecodeParams& decode) {
    return decode_flow(motion_energy(seq, bank, grid), bank, decode);
}

double probe_response_std(const GaborBank& bank, const Unit& unit, double direction_deg, double sf, double tf,
                          const ProbeParams& params) {
    if (params.frames < 2) throw ParameterError("probe needs at least two frames");
    const auto& k = bank.spatial_of(unit);
    const double sa = params.aperture_sigmas * k.sigma;
    const auto d = direction_vector(direction_deg);
    const double fx = std::ldexp(sf * d[0], unit.level), fy = std::ldexp(sf * d[1], unit.level);
    cplx px = 0.0, py = 0.0, qx = 0.0, qy = 0.0;
    for (int q = -k.radius; q <= k.radius; ++q) {
        const double a = std::exp(-0.5 * q * q / (sa * sa));
        const cplx kx = k.kx[q + k.radius] * a, ky = k.ky[q + k.radius] * a;
        px += kx * std::polar(1.0, kTwoPi * fx * q);
        qx += kx * std::polar(1.0, -kTwoPi * fx * q);
        py += ky * std::polar(1.0, kTwoPi * fy * q);
        qy += ky * std::polar(1.0, -kTwoPi * fy * q);
    }
    const double atten = pyramid_transfer(sf * d[0], sf * d[1], unit.level);
    const auto& tk = bank.temporal_of(unit);
    // Filtered even response is Re(gamma * exp(-i 2 pi tf t)).
    const cplx alpha = 0.5 * atten * std::polar(1.0, params.phase) * px * py * temporal_response(tk, tf);
    const cplx beta = 0.5 * atten * std::polar(1.0, -params.phase) * qx * qy * temporal_response(tk, -tf);
    const cplx gamma = (alpha + std::conj(beta)) * unit.gain;
    const int T = params.frames;
    const cplx z = std::polar(1.0, -kTwoPi * tf);
    const double mean = (gamma * geometric_sum(z, T)).real() / T;
    const double mean_sq = (0.5 * T * std::norm(gamma) + 0.5 * (gamma * gamma * geometric_sum(z * z, T)).real()) / T;
    return std::sqrt(std::max(0.0, mean_sq - mean * mean));
}

std::vector<UnitTuning> probe_unit_tuning(const GaborBank& bank, const ProbeParams& params) {
    std::vector<UnitTuning> out;
    out.reserve(bank.size());
    for (std::size_t ui = 0; ui < bank.size(); ++ui) {
        const auto& u = bank.units[ui];
        UnitTuning best;
        best.unit = static_cast<int>(ui);
        best.response_std = -1.0;
        for (int d = 0; d < bank.params.n_directions; ++d)
            for (int s = 0; s < bank.n_sf(); ++s)
                for (int t = 0; t < bank.n_tf(); ++t) {
                    const double r = probe_response_std(bank, u, bank.directions_deg[d], bank.params.spatial_freqs[s],
                                                        bank.params.temporal_freqs[t], params);
                    if (r > best.response_std) {
                        best.response_std = r;
                        best.direction_index = d;
                        best.sf_index = s;
                        best.tf_index = t;
                    }
                }
        best.direction_deg = bank.directions_deg[best.direction_index];
        best.sf = bank.params.spatial_freqs[best.sf_index];
        best.tf = bank.params.temporal_freqs[best.tf_index];
        out.push_back(best);
    }
    return out;
}

std::vector<int> rank_rotation_units(const EnergyMaps& e_rot, const EnergyMaps& e_static, Activation activation,
                                     double top_fraction) {
    if (e_rot.bank_fingerprint != e_static.bank_fingerprint || e_rot.energy.size() != e_static.energy.size() ||
        e_rot.cells() == 0 || e_static.cells() == 0)
        throw ParameterError("energy maps come from mismatched banks");
    if (!(top_fraction > 0.0) || top_fraction > 1.0) throw ParameterError("top fraction must lie in (0, 1]");
    const auto a = activation == Activation::Mean ? e_rot.mean_per_unit() : e_rot.peak_per_unit();
    const auto b = activation == Activation::Mean ? e_static.mean_per_unit() : e_static.peak_per_unit();
    std::vector<int> order(a.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return std::abs(a[i] - b[i]) > std::abs(a[j] - b[j]); });
    const auto keep = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(a.size())));
    std::vector<int> out;
    for (std::size_t k = 0; k < keep && k < order.size(); ++k)
        if (a[order[k]] > b[order[k]]) out.push_back(order[k]);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace illusion::meflow
