#include "illusion/viewsim.hpp"

#include "illusion/error.hpp"
#include "illusion/png_io.hpp"
#include "illusion/random.hpp"
#include "illusion/stimgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace illusion::viewsim {

namespace fs = std::filesystem;

namespace {

DiskGeometry default_disk(const RasterImage& image, DiskGeometry disk) {
    if (disk.radius > 0.0) return disk;
    return {(image.width() - 1) / 2.0, (image.height() - 1) / 2.0, std::min(image.width(), image.height()) / 2.0};
}

void check_on_canvas(const DiskGeometry& disk, int width, int height, int ox, int oy) {
    const double cx = disk.cx + ox;
    const double cy = disk.cy + oy;
    if (cx + disk.radius < 0.0 || cy + disk.radius < 0.0 || cx - disk.radius > width - 1 ||
        cy - disk.radius > height - 1)
        throw GeometryError("cumulative displacement pushes the disk fully off-canvas");
}

// Renders frames where the image jumps at logged events; unchanged frames are copies.
FrameSequence render_events(const RasterImage& image, int n_frames, const std::vector<DisplacementEvent>& events,
                            DiskGeometry disk) {
    FrameSequence seq;
    seq.disk = disk;
    seq.events = events;
    seq.frames.reserve(static_cast<std::size_t>(n_frames));
    int ox = 0, oy = 0;
    std::size_t next = 0;
    for (int f = 0; f < n_frames; ++f) {
        bool moved = false;
        while (next < events.size() && events[next].frame == f) {
            ox += events[next].dx;
            oy += events[next].dy;
            moved = true;
            ++next;
        }
        if (f == 0 || moved) {
            check_on_canvas(disk, image.width(), image.height(), ox, oy);
            seq.frames.push_back(ox == 0 && oy == 0 ? image : paste(image, image.width(), image.height(), ox, oy, kWhite));
        } else {
            seq.frames.push_back(seq.frames.back());
        }
    }
    return seq;
}

std::vector<DisplacementEvent> fixed_shift_events(const ViewingCondition& cond) {
    const auto step = shift_vector(cond.delta_px, cond.direction_deg);
    std::vector<DisplacementEvent> events;
    if (step[0] == 0 && step[1] == 0) return events;
    for (int f : cond.shift_frames) events.push_back({f, step[0], step[1]});
    return events;
}

std::vector<DisplacementEvent> random_slip_events(int n_frames, std::uint64_t seed) {
    if (n_frames < 2) throw ParameterError("random slip needs at least two frames");
    Rng rng(seed);
    const int available = n_frames - 1;
    const int count = std::min(available, 1 + static_cast<int>(uniform_index(rng, kMaxShifts)));
    // Distinct onset frames in [1, n_frames-1] by partial Fisher-Yates.
    std::vector<int> frames(static_cast<std::size_t>(available));
    for (int i = 0; i < available; ++i) frames[i] = i + 1;
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(available - i)));
        std::swap(frames[i], frames[j]);
    }
    std::vector<DisplacementEvent> events;
    for (int i = 0; i < count; ++i) {
        const int direction = 45 * static_cast<int>(uniform_index(rng, 8));
        const int magnitude = kShiftMagnitudes[uniform_index(rng, kShiftMagnitudes.size())];
        const auto step = shift_vector(magnitude, direction);
        events.push_back({frames[i], step[0], step[1]});
    }
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
    return events;
}

}  // namespace

DiskGeometry disk_of(const stimgen::StimulusSpec& spec) {
    return {spec.center(), spec.center(), spec.disk_radius()};
}

std::array<int, 2> FrameSequence::total_displacement() const {
    std::array<int, 2> total{0, 0};
    for (const auto& e : events) {
        total[0] += e.dx;
        total[1] += e.dy;
    }
    return total;
}

DiskGeometry FrameSequence::final_disk() const {
    const auto t = total_displacement();
    return {disk.cx + t[0], disk.cy + t[1], disk.radius};
}

void validate(const ViewingCondition& cond) {
    if (cond.n_frames < 2) throw ParameterError("a sequence needs at least two frames");
    switch (cond.kind) {
        case Kind::Static:
        case Kind::RandomSlip: break;
        case Kind::Onset:
            if (cond.onset_frame < 1 || cond.onset_frame > cond.n_frames - 1)
                throw ParameterError("onset_frame must lie in [1, n_frames-1]");
            break;
        case Kind::Shift:
        case Kind::PeripheralShift: {
            if (cond.shift_frames.size() > static_cast<std::size_t>(kMaxShifts))
                throw ParameterError("at most three shifts per sequence");
            for (std::size_t i = 0; i < cond.shift_frames.size(); ++i) {
                const int f = cond.shift_frames[i];
                if (f < 1 || f > cond.n_frames - 1) throw ParameterError("shift frames must lie in [1, n_frames-1]");
                if (i > 0 && f <= cond.shift_frames[i - 1]) throw ParameterError("shift frames must be strictly increasing");
            }
            if (!cond.allow_any_delta) {
                const bool paper_delta = cond.delta_px == 0 ||
                    std::find(kShiftMagnitudes.begin(), kShiftMagnitudes.end(), cond.delta_px) != kShiftMagnitudes.end();
                if (!paper_delta) throw ParameterError("delta_px must be one of 15, 30, 60, 90, 120");
                if (cond.direction_deg % 45 != 0 || cond.direction_deg < 0 || cond.direction_deg >= 360)
                    throw ParameterError("direction_deg must be a multiple of 45 in [0, 360)");
            }
            if (cond.kind == Kind::PeripheralShift &&
                (cond.peripheral_stimulus_px <= 0 || cond.peripheral_stimulus_px > cond.peripheral_canvas_px))
                throw ParameterError("peripheral stimulus must fit inside the peripheral canvas");
            break;
        }
        case Kind::VeridicalRotation:
            if (cond.omega == 0.0 || !std::isfinite(cond.omega)) throw ParameterError("omega must be non-zero");
            if (std::abs(cond.omega) >= 180.0) throw ParameterError("|omega| >= 180 degrees/frame is ambiguous");
            break;
    }
}

std::array<int, 2> shift_vector(int delta_px, int direction_deg) {
    const double a = direction_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double m = std::max(std::abs(c), std::abs(s));
    return {static_cast<int>(std::lround(delta_px * c / m)), static_cast<int>(std::lround(delta_px * s / m))};
}

std::vector<int> default_shift_frames(int n_frames, int n_shifts) {
    if (n_shifts < 0 || n_shifts > kMaxShifts) throw ParameterError("between zero and three shifts");
    std::vector<int> out;
    for (int j = 1; j <= n_shifts; ++j)
        out.push_back(static_cast<int>(std::lround(static_cast<double>(j) * n_frames / (n_shifts + 1))));
    return out;
}

std::vector<DisplacementEvent> plan_events(const ViewingCondition& cond) {
    validate(cond);
    switch (cond.kind) {
        case Kind::Shift:
        case Kind::PeripheralShift: return fixed_shift_events(cond);
        case Kind::RandomSlip: return random_slip_events(cond.n_frames, cond.seed);
        case Kind::Onset: return {{cond.onset_frame, 0, 0}};
        case Kind::Static:
        case Kind::VeridicalRotation: break;
    }
    return {};
}

DiskGeometry frame_disk(const ViewingCondition& cond, DiskGeometry source_disk, int source_width, int source_height) {
    if (cond.kind != Kind::PeripheralShift) return source_disk;
    const double sx = static_cast<double>(cond.peripheral_stimulus_px) / source_width;
    const double sy = static_cast<double>(cond.peripheral_stimulus_px) / source_height;
    const int offset = (cond.peripheral_canvas_px - cond.peripheral_stimulus_px) / 4;
    return {(source_disk.cx + 0.5) * sx - 0.5 + offset, (source_disk.cy + 0.5) * sy - 0.5 + offset,
            source_disk.radius * std::min(sx, sy)};
}

FrameSequence make_static(const RasterImage& image, int n_frames, DiskGeometry disk) {
    ViewingCondition cond;
    cond.kind = Kind::Static;
    cond.n_frames = n_frames;
    validate(cond);
    FrameSequence seq;
    seq.condition = cond;
    seq.disk = default_disk(image, disk);
    seq.frames.assign(static_cast<std::size_t>(n_frames), image);
    return seq;
}

FrameSequence make_onset(const RasterImage& image, int n_frames, int onset_frame, DiskGeometry disk) {
    ViewingCondition cond;
    cond.kind = Kind::Onset;
    cond.n_frames = n_frames;
    cond.onset_frame = onset_frame;
    validate(cond);
    FrameSequence seq;
    seq.condition = cond;
    seq.disk = default_disk(image, disk);
    seq.events = {{onset_frame, 0, 0}};
    const RasterImage blank(image.width(), image.height(), kWhite);
    for (int f = 0; f < n_frames; ++f) seq.frames.push_back(f < onset_frame ? blank : image);
    return seq;
}

FrameSequence make_shift(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk) {
    if (cond.kind != Kind::Shift) throw ParameterError("make_shift requires a shift condition");
    auto seq = render_events(image, cond.n_frames, plan_events(cond), default_disk(image, disk));
    seq.condition = cond;
    return seq;
}

FrameSequence make_random_slip(const RasterImage& image, int n_frames, std::uint64_t seed, DiskGeometry disk) {
    ViewingCondition cond;
    cond.kind = Kind::RandomSlip;
    cond.n_frames = n_frames;
    cond.seed = seed;
    auto seq = render_events(image, n_frames, plan_events(cond), default_disk(image, disk));
    seq.condition = cond;
    return seq;
}

FrameSequence make_peripheral(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk) {
    if (cond.kind != Kind::PeripheralShift) throw ParameterError("make_peripheral requires a peripheral_shift condition");
    const auto events = plan_events(cond);
    const DiskGeometry source = default_disk(image, disk);
    const auto small = resize_area(image, cond.peripheral_stimulus_px, cond.peripheral_stimulus_px);
    const int offset = (cond.peripheral_canvas_px - cond.peripheral_stimulus_px) / 4;
    const auto field = paste(small, cond.peripheral_canvas_px, cond.peripheral_canvas_px, offset, offset, kWhite);
    auto seq = render_events(field, cond.n_frames, events, frame_disk(cond, source, image.width(), image.height()));
    seq.condition = cond;
    return seq;
}

FrameSequence make_veridical_rotation(const RasterImage& image, double omega, int n_frames, DiskGeometry disk) {
    ViewingCondition cond;
    cond.kind = Kind::VeridicalRotation;
    cond.omega = omega;
    cond.n_frames = n_frames;
    validate(cond);
    FrameSequence seq;
    seq.condition = cond;
    seq.disk = default_disk(image, disk);
    const auto& d = seq.disk;
    seq.frames.push_back(image);
    for (int f = 1; f < n_frames; ++f) {
        // Frame f is the source rotated by f*omega; resampling the source each
        // time avoids compounding interpolation blur.
        const double a = f * omega * std::numbers::pi / 180.0;
        const double ca = std::cos(a), sa = std::sin(a);
        RasterImage frame = image;
        const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.radius)));
        const int x1 = std::min(image.width() - 1, static_cast<int>(std::ceil(d.cx + d.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.radius)));
        const int y1 = std::min(image.height() - 1, static_cast<int>(std::ceil(d.cy + d.radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - d.cx;
                const double dyu = d.cy - y;
                if (dx * dx + dyu * dyu > d.radius * d.radius) continue;
                // Inverse rotation (y-up frame) to find the source position.
                const double sx = ca * dx + sa * dyu;
                const double syu = -sa * dx + ca * dyu;
                const auto c = sample_bilinear(image, d.cx + sx, d.cy - syu, kWhite);
                frame.set_pixel(x, y, {static_cast<std::uint8_t>(std::lround(c[0])), static_cast<std::uint8_t>(std::lround(c[1])),
                                       static_cast<std::uint8_t>(std::lround(c[2]))});
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

FrameSequence make_sequence(const RasterImage& image, const ViewingCondition& cond, DiskGeometry disk) {
    FrameSequence seq;
    switch (cond.kind) {
        case Kind::Static: seq = make_static(image, cond.n_frames, disk); break;
        case Kind::Onset: seq = make_onset(image, cond.n_frames, cond.onset_frame, disk); break;
        case Kind::Shift: seq = make_shift(image, cond, disk); break;
        case Kind::RandomSlip: seq = make_random_slip(image, cond.n_frames, cond.seed, disk); break;
        case Kind::PeripheralShift: seq = make_peripheral(image, cond, disk); break;
        case Kind::VeridicalRotation: seq = make_veridical_rotation(image, cond.omega, cond.n_frames, disk); break;
    }
    seq.condition = cond;
    return seq;
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::Static: return "static";
        case Kind::Onset: return "onset";
        case Kind::Shift: return "shift";
        case Kind::RandomSlip: return "random_slip";
        case Kind::PeripheralShift: return "peripheral_shift";
        case Kind::VeridicalRotation: return "veridical_rotation";
    }
    return "?";
}

Kind parse_kind(const std::string& text) {
    for (auto k : {Kind::Static, Kind::Onset, Kind::Shift, Kind::RandomSlip, Kind::PeripheralShift, Kind::VeridicalRotation})
        if (to_string(k) == text) return k;
    throw ParameterError("unknown viewing condition '" + text + "'");
}

KeyValueDoc condition_manifest(const ViewingCondition& cond) {
    KeyValueDoc doc;
    doc.set("kind", to_string(cond.kind));
    doc.set("n_frames", cond.n_frames);
    doc.set("delta_px", cond.delta_px);
    doc.set("direction_deg", cond.direction_deg);
    std::string frames;
    for (std::size_t i = 0; i < cond.shift_frames.size(); ++i) frames += (i ? "," : "") + std::to_string(cond.shift_frames[i]);
    doc.set("shift_frames", frames);
    doc.set("onset_frame", cond.onset_frame);
    doc.set("omega", cond.omega);
    doc.set("seed", static_cast<long long>(cond.seed));
    doc.set("allow_any_delta", std::string(cond.allow_any_delta ? "true" : "false"));
    doc.set("peripheral_canvas_px", cond.peripheral_canvas_px);
    doc.set("peripheral_stimulus_px", cond.peripheral_stimulus_px);
    return doc;
}

ViewingCondition condition_from_manifest(const KeyValueDoc& doc) {
    ViewingCondition cond;
    cond.kind = parse_kind(doc.get_string("kind"));
    cond.n_frames = static_cast<int>(doc.get_int("n_frames", cond.n_frames));
    cond.delta_px = static_cast<int>(doc.get_int("delta_px", cond.delta_px));
    cond.direction_deg = static_cast<int>(doc.get_int("direction_deg", cond.direction_deg));
    for (auto f : doc.get_int_list("shift_frames", {})) cond.shift_frames.push_back(static_cast<int>(f));
    cond.onset_frame = static_cast<int>(doc.get_int("onset_frame", cond.onset_frame));
    cond.omega = doc.get_double("omega", cond.omega);
    cond.seed = static_cast<std::uint64_t>(doc.get_int("seed", 0));
    cond.allow_any_delta = doc.get_bool("allow_any_delta", false);
    cond.peripheral_canvas_px = static_cast<int>(doc.get_int("peripheral_canvas_px", cond.peripheral_canvas_px));
    cond.peripheral_stimulus_px = static_cast<int>(doc.get_int("peripheral_stimulus_px", cond.peripheral_stimulus_px));
    return cond;
}

void draw_fixation_cross(RasterImage& img) {
    const int w = img.width(), h = img.height();
    const int arm = std::max(3, std::min(w, h) / 50);
    const int half_thick = std::max(1, arm / 6);
    const int cx = w - 1 - 3 * arm;
    const int cy = h - 1 - 3 * arm;
    for (int y = cy - arm; y <= cy + arm; ++y)
        for (int x = cx - arm; x <= cx + arm; ++x) {
            if (x < 0 || y < 0 || x >= w || y >= h) continue;
            if (std::abs(x - cx) <= half_thick || std::abs(y - cy) <= half_thick) img.set_pixel(x, y, kBlack);
        }
}

void save_sequence(const FrameSequence& seq, const fs::path& dir, const ExportOptions& opts) {
    fs::create_directories(dir / "frames");
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
        if (opts.fixation_cross) {
            auto frame = seq.frames[i];
            draw_fixation_cross(frame);
            write_png(frame, dir / "frames" / name);
        } else {
            write_png(seq.frames[i], dir / "frames" / name);
        }
    }
    auto doc = condition_manifest(seq.condition);
    doc.set("frame_count", static_cast<long long>(seq.frames.size()));
    doc.set("px_per_degree", seq.px_per_degree);
    doc.set("frame_rate_hz", seq.frame_rate_hz);
    doc.set("fixation_cross", std::string(opts.fixation_cross ? "true" : "false"));
    doc.set("disk_cx", seq.disk.cx);
    doc.set("disk_cy", seq.disk.cy);
    doc.set("disk_radius", seq.disk.radius);
    doc.set("event_count", static_cast<long long>(seq.events.size()));
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const auto& e = seq.events[i];
        doc.set("event." + std::to_string(i), std::to_string(e.frame) + "," + std::to_string(e.dx) + "," + std::to_string(e.dy));
    }
    doc.save(dir / "manifest.txt");
}

FrameSequence load_sequence(const fs::path& dir) {
    const auto doc = KeyValueDoc::load(dir / "manifest.txt");
    FrameSequence seq;
    seq.condition = condition_from_manifest(doc);
    seq.px_per_degree = doc.get_double("px_per_degree", 50.0);
    seq.frame_rate_hz = doc.get_double("frame_rate_hz", 5.0);
    seq.disk = {doc.get_double("disk_cx"), doc.get_double("disk_cy"), doc.get_double("disk_radius")};
    const auto n_events = doc.get_int("event_count", 0);
    for (long long i = 0; i < n_events; ++i) {
        const auto v = doc.get_int_list("event." + std::to_string(i), {});
        if (v.size() != 3) throw FormatError("malformed event entry " + std::to_string(i));
        seq.events.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])});
    }
    const auto count = doc.get_int("frame_count");
    for (long long i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04lld.png", i);
        seq.frames.push_back(read_png(dir / "frames" / name));
    }
    return seq;
}

}  // namespace illusion::viewsim
