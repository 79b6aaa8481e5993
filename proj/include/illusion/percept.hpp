/**
 * @file percept.hpp
 * @brief Synthetic flow fields encoding the rotation observers report.
 */
#pragma once

#include "illusion/flow.hpp"

#include <string>

namespace illusion::percept {

enum class Sense { Ccw, Cw };
enum class DirectionReport { Cw, Unclear, Ccw };

struct PerceptTarget {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 1.0;
    double magnitude = 1.0;  ///< flow speed at the disk boundary, px/frame
    double gamma = 1.0;      ///< radial decay exponent
    Sense sense = Sense::Ccw;
    int width = 0;
    int height = 0;
};

void validate(const PerceptTarget& t);

/// Tangential flow of magnitude (r/R)^gamma * M inside the disk; zero and
/// invalid outside. Counterclockwise is as displayed (y down).
FlowField target_flow(const PerceptTarget& t);

/// target_flow with a constant translation added to every valid pixel.
/// Diagnostic only; scoring targets never contain translation.
FlowField target_flow_with_translation(const PerceptTarget& t, double tx, double ty);

/// Target for a behavioral direction report: the rotational target in the
/// reported sense, or an all-valid zero field for an unclear report.
FlowField behavioral_target(DirectionReport report, PerceptTarget t);

std::string to_string(Sense s);
std::string to_string(DirectionReport r);
Sense parse_sense(const std::string& text);
DirectionReport parse_report(const std::string& text);

}  // namespace illusion::percept
