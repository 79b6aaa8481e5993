/**
 * @file metrics.hpp
 * @brief Flow-alignment scores, the one-sided Wilcoxon signed-rank test and
 *        grouped aggregation of score reports.
 */
#pragma once

#include "illusion/flow.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace illusion::metrics {

/// Which pixels enter a score. TargetDisk uses the intersection of both valid
/// masks; TargetMask uses the reference's valid pixels, with invalid predictions
/// counting as zero flow; FullFrame uses every pixel, invalid ones as zero flow.
enum class MaskPolicy { TargetDisk, TargetMask, FullFrame };

struct CorrResult {
    double rho = 0.0;
    bool degenerate = false;  ///< a Frobenius norm fell below 1e-12; rho is then 0
    std::size_t n_valid = 0;
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Normalized correlation sum<P_i, R_i> / (|P|_F |R|_F).
CorrResult corr(const FlowField& p, const FlowField& r, MaskPolicy policy = MaskPolicy::TargetDisk);
/// Mean endpoint error.
double epe(const FlowField& p, const FlowField& r, MaskPolicy policy = MaskPolicy::TargetDisk);
/// Mean angular error of the (1, u, v) embeddings, radians.
double ae(const FlowField& p, const FlowField& r, MaskPolicy policy = MaskPolicy::TargetDisk);

struct ScoreReport {
    std::map<std::string, std::string> keys;  ///< model, stimulus, condition, ...
    double rho = 0.0;
    double mean_epe = 0.0;
    double mean_ae = 0.0;
    std::size_t n_valid = 0;
    bool degenerate = false;
    std::string error;  ///< non-empty when the cell could not be scored

    bool ok() const { return error.empty(); }
};

/// All three metrics in one pass.
ScoreReport score(const FlowField& p, const FlowField& r, MaskPolicy policy = MaskPolicy::TargetDisk);

enum class Alternative { Greater, Less };

struct WilcoxonResult {
    double w_plus = 0.0;  ///< sum of ranks of positive samples
    std::size_t n = 0;    ///< sample count after dropping zeros
    double p_value = 1.0;
    bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// One-sample / paired-difference signed-rank test. Zeros are dropped and
/// tied magnitudes share their average rank. The null distribution is exact
/// for n <= 25 and normal (continuity and tie corrected) above.
WilcoxonResult wilcoxon_one_sided(const std::vector<double>& samples, Alternative alt);

struct AggregateRow {
    std::vector<std::string> group;  ///< values of the group_by keys, in group_by order
    std::size_t count = 0;           ///< scored reports
    std::size_t errors = 0;          ///< reports carrying an error
    std::size_t degenerate = 0;
    double mean_rho = 0.0;
    double mean_epe = 0.0;
    double mean_ae = 0.0;
};

struct AggregateTable {
    std::vector<std::string> group_by;
    std::vector<AggregateRow> rows;  ///< sorted by group values
};

/// Grouped means over reports; errored reports are counted but not averaged.
AggregateTable aggregate(const std::vector<ScoreReport>& reports, const std::vector<std::string>& group_by);

std::string to_string(Alternative a);
std::string to_string(MaskPolicy p);
MaskPolicy parse_mask_policy(const std::string& text);

}  // namespace illusion::metrics
