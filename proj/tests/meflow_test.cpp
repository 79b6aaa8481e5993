#include "illusion/error.hpp"
#include "illusion/meflow.hpp"
#include "illusion/metrics.hpp"
#include "illusion/percept.hpp"
#include "illusion/stimgen.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace illusion::meflow {
namespace {

constexpr double kPi = std::numbers::pi;

const GaborBank& default_bank() {
    static const GaborBank bank = build_bank();
    return bank;
}

// Drifting grating 0.5 + amp*cos(2 pi (f d.p - tf t) + phase) on a w x w working frame.
std::vector<GrayImage> grating(int w, int n, double direction_deg, double f, double tf, double amp = 0.5, double phase = 0.0) {
    const auto d = direction_vector(direction_deg);
    std::vector<GrayImage> frames;
    for (int t = 0; t < n; ++t) {
        GrayImage img(w, w);
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < w; ++x) img.at(x, y) = 0.5 + amp * std::cos(2 * kPi * (f * (d[0] * x + d[1] * y) - tf * t) + phase);
        frames.push_back(std::move(img));
    }
    return frames;
}

// Smooth random texture with unit standard deviation.
GrayImage texture(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    GrayImage a(w, h), b(w, h);
    for (auto& v : a.data) v = g(rng);
    const int r = 5;
    const double s = 1.5;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0, ws = 0;
            for (int q = -r; q <= r; ++q) {
                const double k = std::exp(-q * q / (2 * s * s));
                acc += k * a.at(std::clamp(x + q, 0, w - 1), y);
                ws += k;
            }
            b.at(x, y) = acc / ws;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0, ws = 0;
            for (int q = -r; q <= r; ++q) {
                const double k = std::exp(-q * q / (2 * s * s));
                acc += k * b.at(x, std::clamp(y + q, 0, h - 1));
                ws += k;
            }
            a.at(x, y) = acc / ws;
        }
    double ss = 0;
    for (double v : a.data) ss += v * v;
    const double sd = std::sqrt(ss / static_cast<double>(a.data.size()));
    for (auto& v : a.data) v /= sd;
    return a;
}

// Frames of `tex` translated by (vx, vy) px/frame, viewed through a w x w window at (ox, oy).
viewsim::FrameSequence translating(const GrayImage& tex, int w, int n, double vx, double vy, int ox, int oy) {
    viewsim::FrameSequence seq;
    for (int t = 0; t < n; ++t) {
        RasterImage img(w, w);
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < w; ++x) {
                const double sx = x + ox - vx * t, sy = y + oy - vy * t;
                const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                const double v = (1 - fx) * (1 - fy) * tex.at(x0, y0) + fx * (1 - fy) * tex.at(x0 + 1, y0) +
                                 (1 - fx) * fy * tex.at(x0, y0 + 1) + fx * fy * tex.at(x0 + 1, y0 + 1);
                const auto c = static_cast<std::uint8_t>(std::clamp(std::lround(128 + 50 * v), 0L, 255L));
                img.set_pixel(x, y, {c, c, c});
            }
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

std::vector<GrayImage> to_gray(const viewsim::FrameSequence& seq) {
    std::vector<GrayImage> out;
    for (const auto& f : seq.frames) out.push_back(to_luma(f));
    return out;
}

double angle_diff_deg(double a, double b) {
    double d = std::fmod(a - b, 360.0);
    if (d > 180) d -= 360;
    if (d < -180) d += 360;
    return std::abs(d);
}

TEST(Bank, DefaultShapeAndDc) {
    const auto& bank = default_bank();
    EXPECT_EQ(bank.size(), 12u * 8u * 8u);
    EXPECT_EQ(bank.n_levels, 4);
    for (const auto& k : bank.spatial) EXPECT_LE(std::abs(spatial_dc(k)), 1e-6);
    const auto& u = bank.units[bank.unit_index(3, 4, 2)];
    EXPECT_DOUBLE_EQ(u.direction_deg, 90.0);
    EXPECT_NEAR(u.sf, 0.05, 1e-15);
    EXPECT_NEAR(u.tf, 0.1, 1e-15);
}

TEST(Bank, MinimalBankAndErrors) {
    BankParams p;
    p.n_directions = 2;
    p.spatial_freqs = {0.1};
    p.temporal_freqs = {0.125};
    const auto bank = build_bank(p);
    EXPECT_EQ(bank.size(), 2u);
    EXPECT_NE(bank.fingerprint, default_bank().fingerprint);

    auto bad = p;
    bad.n_directions = 1;
    EXPECT_THROW(build_bank(bad), ParameterError);
    bad = p;
    bad.sigma_cycles = 0.01;
    EXPECT_THROW(build_bank(bad), ParameterError);
    bad = p;
    bad.spatial_freqs = {};
    EXPECT_THROW(build_bank(bad), ParameterError);
    bad = p;
    bad.temporal_freqs = {-0.1};
    EXPECT_THROW(build_bank(bad), ParameterError);
}

TEST(Bank, QuadratureAndTemporalPeak) {
    const auto& bank = default_bank();
    for (const auto& k : bank.temporal) EXPECT_GT(std::abs(temporal_response(k, 0.15)), std::abs(temporal_response(k, -0.15)));
    for (int t = 0; t < bank.n_tf(); ++t) {
        const double tf = bank.params.temporal_freqs[t];
        const double peak = std::abs(temporal_response(bank.temporal[t], tf));
        EXPECT_GE(peak, std::abs(temporal_response(bank.temporal[t], tf - 1e-3)));
        EXPECT_GE(peak, std::abs(temporal_response(bank.temporal[t], tf + 1e-3)));
        EXPECT_LE(std::abs(temporal_response(bank.temporal[t], 0.0)), 1e-12);
    }
}

TEST(Energy, MatchedGratingWinsAndIsNonnegative) {
    const auto& bank = default_bank();
    for (auto [d, s, t] : {std::tuple{2, 4, 2}, std::tuple{0, 7, 6}, std::tuple{7, 1, 4}}) {
        const auto& u = bank.units[bank.unit_index(d, s, t)];
        const auto maps = motion_energy_working(grating(257, 15, u.direction_deg, u.sf, u.tf), bank, 8);
        const auto mean = maps.mean_per_unit();
        const auto best = std::max_element(mean.begin(), mean.end()) - mean.begin();
        EXPECT_EQ(best, bank.unit_index(d, s, t));
        // Away from the borders a half-amplitude matched grating gives a quarter of unit energy.
        EXPECT_NEAR(maps.at(static_cast<std::size_t>(best), maps.grid_w / 2, maps.grid_h / 2), 0.25, 0.02);
        for (double e : maps.energy) ASSERT_GE(e, 0.0);
    }
}

TEST(Energy, UniformFieldIsSilent) {
    const auto& bank = default_bank();
    const auto& u = bank.units[bank.unit_index(0, 5, 3)];
    const auto moving = motion_energy_working(grating(129, 15, u.direction_deg, u.sf, u.tf), bank, 8);
    const double ref = moving.mean_per_unit()[bank.unit_index(0, 5, 3)];
    const std::vector<GrayImage> uniform(15, GrayImage(129, 129, 0.6));
    const auto still = motion_energy_working(uniform, bank, 8);
    for (double e : still.energy) ASSERT_LE(e, 1e-9 * ref);
}

TEST(Energy, ReversedGratingFlipsOpponentSign) {
    const auto& bank = default_bank();
    const int ui = bank.unit_index(1, 5, 3);
    const auto& u = bank.units[ui];
    const auto fwd = motion_energy_working(grating(129, 15, u.direction_deg, u.sf, u.tf), bank, 8);
    const auto rev = motion_energy_working(grating(129, 15, u.direction_deg + 180, u.sf, u.tf), bank, 8);
    const auto of = opponent_energy(fwd, bank), orv = opponent_energy(rev, bank);
    double sf = 0, sr = 0;
    for (std::size_t c = 0; c < fwd.cells(); ++c) {
        sf += of[ui * fwd.cells() + c];
        sr += orv[ui * rev.cells() + c];
    }
    EXPECT_GT(sf, 0.0);
    EXPECT_LT(sr, 0.0);
}

TEST(Energy, PhaseInvarianceAndContrastMonotonicity) {
    const auto& bank = default_bank();
    const int ui = bank.unit_index(4, 6, 5);
    const auto& u = bank.units[ui];
    const auto a = motion_energy_working(grating(129, 15, u.direction_deg, u.sf, u.tf, 0.5, 0.0), bank, 8);
    const auto b = motion_energy_working(grating(129, 15, u.direction_deg, u.sf, u.tf, 0.5, 1.3), bank, 8);
    const double ma = a.mean_per_unit()[ui], mb = b.mean_per_unit()[ui];
    EXPECT_LE(std::abs(ma - mb), 0.01 * ma);

    const auto lo = motion_energy_working(grating(129, 15, 30, 0.07, 0.12, 0.2), bank, 8);
    const auto hi = motion_energy_working(grating(129, 15, 30, 0.07, 0.12, 0.4), bank, 8);
    for (std::size_t i = 0; i < lo.energy.size(); ++i) ASSERT_GE(hi.energy[i], lo.energy[i]);
}

TEST(Energy, TranslationEquivariantAtStride) {
    BankParams p;
    p.spatial_freqs = {0.05, 0.1};
    p.temporal_freqs = {0.1, 0.2};
    const auto bank = build_bank(p);
    const auto tex = texture(400, 300, 5);
    const auto a = motion_energy_working(to_gray(translating(tex, 193, 15, 1.0, 0.5, 40, 40)), bank, 8);
    const auto b = motion_energy_working(to_gray(translating(tex, 193, 15, 1.0, 0.5, 48, 40)), bank, 8);
    // Kernel reach in cells: level-1 radius is 18 px there, 36 working px, under 5 cells.
    const int margin = 5;
    int compared = 0;
    for (std::size_t unit = 0; unit < bank.size(); ++unit)
        for (int gy = margin; gy < a.grid_h - margin; ++gy)
            for (int gx = margin; gx + 1 < a.grid_w - margin; ++gx) {
                const double ea = a.at(unit, gx + 1, gy), eb = b.at(unit, gx, gy);
                ASSERT_NEAR(ea, eb, 1e-9 * std::max(1.0, ea));
                ++compared;
            }
    EXPECT_GT(compared, 100);
}

TEST(Energy, ThreadCountDoesNotChangeResults) {
    const auto& bank = default_bank();
    const auto frames = to_gray(translating(texture(200, 200, 2), 129, 15, 2.0, 0.0, 40, 30));
    const auto one = motion_energy_working(frames, bank, 8, 1);
    const auto three = motion_energy_working(frames, bank, 8, 3);
    EXPECT_EQ(one.energy, three.energy);
}

TEST(Energy, Errors) {
    const auto& bank = default_bank();
    EXPECT_THROW(motion_energy_working(std::vector<GrayImage>(14, GrayImage(129, 129)), bank, 8), ParameterError);
    EXPECT_THROW(motion_energy_working(std::vector<GrayImage>(15, GrayImage(130, 129)), bank, 8), ParameterError);
    EXPECT_THROW(motion_energy_working(std::vector<GrayImage>(15, GrayImage(129, 129)), bank, 4), ParameterError);
}

TEST(Decode, TranslationOfTexture) {
    const auto& bank = default_bank();
    const auto tex = texture(420, 420, 11);
    for (auto [vx, vy] : {std::pair{2.0, 0.0}, std::pair{0.0, -2.0}, std::pair{-1.414, 1.414}}) {
        const auto seq = translating(tex, 257, 15, vx, vy, 80, 80);
        GridParams grid;
        grid.working_scale = 1.0;
        const auto flow = estimate_flow(seq, bank, grid);
        double su = 0, sv = 0;
        int n = 0;
        for (int y = 40; y < 217; ++y)
            for (int x = 40; x < 217; ++x) {
                const auto i = flow.index(x, y);
                if (!flow.valid[i]) continue;
                su += flow.u[i];
                sv += flow.v[i];
                ++n;
            }
        ASSERT_GT(n, 0);
        su /= n;
        sv /= n;
        const double truth = std::atan2(-vy, vx) * 180 / kPi;
        EXPECT_LE(angle_diff_deg(std::atan2(-sv, su) * 180 / kPi, truth), 15.0);
        EXPECT_LE(std::abs(std::hypot(su, sv) - 2.0), 0.3 * 2.0);
    }
}

TEST(Decode, MirroredInputGivesMirroredFlow) {
    const auto& bank = default_bank();
    auto seq = translating(texture(300, 300, 4), 129, 15, 1.5, 0.7, 50, 60);
    auto mirrored = seq;
    for (auto& f : mirrored.frames) f = mirror_horizontal(f);
    GridParams grid;
    grid.working_scale = 1.0;
    const auto a = estimate_flow(seq, bank, grid);
    const auto b = estimate_flow(mirrored, bank, grid);
    for (int y = 0; y < 129; ++y)
        for (int x = 0; x < 129; ++x) {
            const auto i = a.index(x, y), j = b.index(128 - x, y);
            ASSERT_EQ(a.valid[i], b.valid[j]);
            ASSERT_NEAR(b.u[j], -a.u[i], 1e-6);
            ASSERT_NEAR(b.v[j], a.v[i], 1e-6);
        }
}

struct SnakeRun {
    stimgen::StimulusSpec spec;
    viewsim::DiskGeometry disk;
    EnergyMaps rot, still;
    FlowField rot_flow, still_flow;
};

const SnakeRun& snake_run() {
    static const SnakeRun run = [] {
        SnakeRun r;
        r.spec.canvas_px = 402;
        r.spec.margin_px = 32;
        r.spec.rings = 4;
        const auto img = stimgen::render(r.spec);
        r.disk = viewsim::disk_of(r.spec);
        const double omega = 1.0 / r.disk.radius * 180 / kPi;  // 1 px/frame at the boundary
        GridParams grid;
        grid.working_scale = 1.0;
        r.rot = motion_energy(viewsim::make_veridical_rotation(img, omega, 15, r.disk), default_bank(), grid);
        r.still = motion_energy(viewsim::make_static(img, 15, r.disk), default_bank(), grid);
        r.rot_flow = decode_flow(r.rot, default_bank());
        r.still_flow = decode_flow(r.still, default_bank());
        return r;
    }();
    return run;
}

TEST(Decode, VeridicalRotationAlignsAndStaticIsSilent) {
    const auto& run = snake_run();
    percept::PerceptTarget t;
    t.cx = run.disk.cx;
    t.cy = run.disk.cy;
    t.radius = run.disk.radius;
    t.width = t.height = run.spec.canvas_px;
    const auto target = percept::target_flow(t);
    EXPECT_GE(metrics::corr(run.rot_flow, target, metrics::MaskPolicy::TargetDisk).rho, 0.5);
    double rot_norm = 0, still_norm = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        rot_norm += run.rot_flow.u[i] * run.rot_flow.u[i] + run.rot_flow.v[i] * run.rot_flow.v[i];
        still_norm += run.still_flow.u[i] * run.still_flow.u[i] + run.still_flow.v[i] * run.still_flow.v[i];
    }
    EXPECT_LE(std::sqrt(still_norm), 1e-6 * std::sqrt(rot_norm));
    const auto c = metrics::corr(run.still_flow, target, metrics::MaskPolicy::TargetDisk);
    EXPECT_TRUE(c.degenerate);
    EXPECT_EQ(c.rho, 0.0);
}

TEST(Rank, RotationUnitsAreTangential) {
    const auto& run = snake_run();
    const auto& bank = default_bank();
    const auto kept = rank_rotation_units(run.rot, run.still);
    ASSERT_FALSE(kept.empty());
    EXPECT_LE(kept.size(), static_cast<std::size_t>(std::ceil(0.25 * bank.size())));
    int tangential = 0;
    for (int ui : kept) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < run.rot.cells(); ++c)
            if (run.rot.energy[ui * run.rot.cells() + c] > run.rot.energy[ui * run.rot.cells() + best]) best = c;
        const double x = (static_cast<double>(best % run.rot.grid_w) * run.rot.stride + 0.5) / run.rot.scale_x - 0.5;
        const double y = (static_cast<double>(best / run.rot.grid_w) * run.rot.stride + 0.5) / run.rot.scale_y - 0.5;
        // Counterclockwise tangent as displayed at that location.
        const double radial = std::atan2(-(y - run.disk.cy), x - run.disk.cx) * 180 / kPi;
        tangential += angle_diff_deg(bank.units[ui].direction_deg, radial + 90) <= 45.0;
    }
    EXPECT_GT(2 * tangential, static_cast<int>(kept.size()));
}

TEST(Rank, DegenerateAndForcedCases) {
    const auto& run = snake_run();
    EXPECT_TRUE(rank_rotation_units(run.still, run.still).empty());
    auto one = run.still;
    for (std::size_t c = 0; c < one.cells(); ++c) one.energy[17 * one.cells() + c] += 1.0;
    EXPECT_EQ(rank_rotation_units(one, run.still), std::vector<int>{17});
    auto other = run.still;
    other.bank_fingerprint ^= 1;
    EXPECT_THROW(rank_rotation_units(run.rot, other), ParameterError);
}

TEST(Probe, FactoredResponseMatchesRenderedProbe) {
    const auto& bank = default_bank();
    ProbeParams pp;
    pp.frames = 64;
    pp.phase = 0.4;
    for (auto [ui, dir, sf, tf] : {std::tuple{bank.unit_index(3, 4, 2), 90.0, 0.05, 0.1},
                                   std::tuple{bank.unit_index(5, 7, 6), 120.0, 0.1, 0.2},
                                   std::tuple{bank.unit_index(0, 0, 0), 30.0, 0.0177, 0.084}}) {
        const auto& u = bank.units[static_cast<std::size_t>(ui)];
        const auto& k = bank.spatial_of(u);
        const auto& tk = bank.temporal_of(u);
        const double sa = pp.aperture_sigmas * k.sigma;
        const auto d = direction_vector(dir);
        const double fx = std::ldexp(sf * d[0], u.level), fy = std::ldexp(sf * d[1], u.level);
        const int support = static_cast<int>(tk.taps.size()), half = support / 2;
        // Spatial response of the rendered, apertured probe for every frame.
        std::vector<cplx> s(static_cast<std::size_t>(pp.frames + support));
        for (int t = 0; t < pp.frames + support; ++t) {
            const int time = t - half;
            cplx acc = 0.0;
            for (int y = -k.radius; y <= k.radius; ++y)
                for (int x = -k.radius; x <= k.radius; ++x) {
                    const double a = std::exp(-0.5 * (x * x + y * y) / (sa * sa));
                    const double img = a * std::cos(2 * kPi * (fx * x + fy * y - tf * time) + pp.phase);
                    acc += k.kx[x + k.radius] * k.ky[y + k.radius] * img;
                }
            s[t] = acc;
        }
        const double atten = pyramid_transfer(sf * d[0], sf * d[1], u.level);
        double mean = 0, sq = 0;
        for (int t = 0; t < pp.frames; ++t) {
            cplx y = 0.0;
            for (int j = 0; j < support; ++j) y += tk.taps[j] * s[t + j];
            const double even = (y * atten * u.gain).real();
            mean += even;
            sq += even * even;
        }
        mean /= pp.frames;
        const double brute = std::sqrt(sq / pp.frames - mean * mean);
        EXPECT_NEAR(probe_response_std(bank, u, dir, sf, tf, pp), brute, 1e-9 * brute);
    }
}

TEST(Probe, RoundTripRecoversConstructedTriples) {
    const auto& bank = default_bank();
    const auto tunings = probe_unit_tuning(bank);
    ASSERT_EQ(tunings.size(), bank.size());
    int exact = 0, direction_ok = 0;
    for (const auto& t : tunings) {
        const auto& u = bank.units[static_cast<std::size_t>(t.unit)];
        exact += t.direction_index == u.direction_index && t.sf_index == u.sf_index && t.tf_index == u.tf_index;
        const int dd = std::abs(t.direction_index - u.direction_index);
        direction_ok += std::min(dd, bank.params.n_directions - dd) <= 1;
    }
    EXPECT_GE(exact, static_cast<int>(std::ceil(0.95 * bank.size())));
    EXPECT_GE(direction_ok, static_cast<int>(std::ceil(0.95 * bank.size())));
    const auto& special = tunings[static_cast<std::size_t>(bank.unit_index(3, 4, 2))];
    EXPECT_DOUBLE_EQ(special.direction_deg, 90.0);
    EXPECT_NEAR(special.sf, 0.05, 1e-15);
    EXPECT_NEAR(special.tf, 0.1, 1e-15);
}

TEST(Probe, Deterministic) {
    BankParams p;
    p.n_directions = 4;
    p.spatial_freqs = {0.05, 0.1};
    p.temporal_freqs = {0.1, 0.2};
    const auto bank = build_bank(p);
    const auto a = probe_unit_tuning(bank), b = probe_unit_tuning(bank);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].response_std, b[i].response_std);
        EXPECT_EQ(a[i].unit, b[i].unit);
    }
}

}  // namespace
}  // namespace illusion::meflow
