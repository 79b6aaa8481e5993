#include "illusion/percept.hpp"

#include "illusion/error.hpp"

#include <cmath>

namespace illusion::percept {

void validate(const PerceptTarget& t) {
    if (!(t.radius > 0.0) || !std::isfinite(t.radius)) throw ParameterError("target radius must be positive");
    if (!(t.magnitude > 0.0) || !std::isfinite(t.magnitude)) throw ParameterError("target magnitude must be positive");
    if (!(t.gamma > 0.0) || !std::isfinite(t.gamma)) throw ParameterError("target gamma must be positive");
    if (t.width <= 0 || t.height <= 0) throw ParameterError("target canvas must be non-empty");
    if (2.0 * t.radius > std::max(t.width, t.height) + 1.0)
        throw GeometryError("target disk is larger than the canvas");
    if (t.cx + t.radius < 0.0 || t.cy + t.radius < 0.0 || t.cx - t.radius > t.width - 1 || t.cy - t.radius > t.height - 1)
        throw GeometryError("target disk lies outside the canvas");
}

FlowField target_flow(const PerceptTarget& t) {
    validate(t);
    FlowField f(t.width, t.height, false);
    const double k = t.magnitude / std::pow(t.radius, t.gamma);
    const double sign = t.sense == Sense::Ccw ? 1.0 : -1.0;
    const double r2max = t.radius * t.radius;
    for (int y = 0; y < t.height; ++y) {
        for (int x = 0; x < t.width; ++x) {
            const double dx = x - t.cx, dy = y - t.cy;
            const double r2 = dx * dx + dy * dy;
            if (r2 > r2max) continue;
            const auto i = f.index(x, y);
            f.valid[i] = 1;
            if (r2 == 0.0) continue;
            const double s = t.gamma == 1.0 ? k : k * std::pow(std::sqrt(r2), t.gamma - 1.0);
            // Negation happens last so the cw field is the exact negation of ccw.
            f.u[i] = sign * (s * dy);
            f.v[i] = sign * (s * -dx);
        }
    }
    return f;
}

FlowField target_flow_with_translation(const PerceptTarget& t, double tx, double ty) {
    auto f = target_flow(t);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.valid[i]) continue;
        f.u[i] += tx;
        f.v[i] += ty;
    }
    return f;
}

FlowField behavioral_target(DirectionReport report, PerceptTarget t) {
    switch (report) {
        case DirectionReport::Ccw: t.sense = Sense::Ccw; return target_flow(t);
        case DirectionReport::Cw: t.sense = Sense::Cw; return target_flow(t);
        case DirectionReport::Unclear: break;
    }
    validate(t);
    return FlowField(t.width, t.height, true);
}

std::string to_string(Sense s) { return s == Sense::Ccw ? "ccw" : "cw"; }

std::string to_string(DirectionReport r) {
    switch (r) {
        case DirectionReport::Cw: return "cw";
        case DirectionReport::Unclear: return "unclear";
        case DirectionReport::Ccw: return "ccw";
    }
    return "?";
}

Sense parse_sense(const std::string& text) {
    if (text == "ccw") return Sense::Ccw;
    if (text == "cw") return Sense::Cw;
    throw ParameterError("unknown sense '" + text + "'");
}

DirectionReport parse_report(const std::string& text) {
    if (text == "ccw") return DirectionReport::Ccw;
    if (text == "cw") return DirectionReport::Cw;
    if (text == "unclear") return DirectionReport::Unclear;
    throw ParameterError("unknown direction report '" + text + "'");
}

}  // namespace illusion::percept
