/**
 * @file harness.hpp
 * @brief Config-driven experiment runner: generates stimuli and viewing
 *        sequences, obtains flow from the built-in estimator or external flow
 *        directories, scores it against percept targets and writes result tables.
 *
 * Output layout under the configured root:
 *
 *     <stimulus_id>/<condition_id>/target.flo
 *     <stimulus_id>/<condition_id>/report.csv
 *     <stimulus_id>/<condition_id>/frames/frame_NNNN.png   (output.save_frames)
 *     models/builtin_me/<stimulus_id>/<condition_id>/flow.flo
 *     results.csv, results.json, run_meta.txt, stats.csv
 *     heatmap_{rho,epe,ae}.csv             one column per scheme and condition column
 *     heatmap_{rho,epe,ae}_mean_delta.csv  shift magnitudes averaged per kind
 *
 * An external model directory follows the same `<stimulus_id>/<condition_id>/flow.flo`
 * layout, so builtin predictions can be re-scored like any external model.
 */
#pragma once

#include "illusion/keyvalue.hpp"
#include "illusion/meflow.hpp"
#include "illusion/metrics.hpp"
#include "illusion/percept.hpp"
#include "illusion/stimgen.hpp"
#include "illusion/viewsim.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace illusion::harness {

inline constexpr const char* kToolVersion = "illusion-bench 0.1.0";
inline constexpr const char* kBuiltinModel = "builtin_me";

struct StimulusEntry {
    std::string id;
    std::string base_id;  ///< shared by an illusion and its control
    stimgen::StimulusSpec spec;
    bool control = false;
    percept::DirectionReport report = percept::DirectionReport::Ccw;  ///< gsweep only
};

struct ConditionEntry {
    std::string id;
    std::string column;  ///< heatmap column: kind, plus the magnitude for shift kinds
    viewsim::ViewingCondition condition;
};

struct ModelEntry {
    std::string name;
    bool builtin = false;
    std::filesystem::path dir;  ///< external flow root
};

struct SuiteConfig {
    std::vector<StimulusEntry> stimuli;
    std::vector<ConditionEntry> conditions;
    std::vector<ModelEntry> models;
    std::filesystem::path output;
    std::uint64_t seed = 0;
    int workers = 1;
    metrics::MaskPolicy mask = metrics::MaskPolicy::TargetMask;
    double target_magnitude = 1.0;
    double target_gamma = 1.0;
    meflow::GridParams grid;
    bool save_frames = false;
    bool gsweep = false;
    KeyValueDoc source;  ///< the parsed document, echoed into run_meta.txt
};

/// Throws ConfigError on unknown keys, malformed values or invalid specs.
/// Relative model directories and output paths resolve against `base_dir`.
SuiteConfig parse_config(const KeyValueDoc& doc, const std::filesystem::path& base_dir = {});
SuiteConfig load_config(const std::filesystem::path& path);

std::string stimulus_id(const stimgen::StimulusSpec& spec, bool control);
std::string condition_id(const viewsim::ViewingCondition& cond);

/// Frame size and final disk position of a (stimulus, condition) pair, without rendering.
struct CellGeometry {
    int width = 0;
    int height = 0;
    viewsim::DiskGeometry final_disk;
};
CellGeometry cell_geometry(const StimulusEntry& stim, const ConditionEntry& cond);

/// Percept target for a cell: rotational flow about the final disk position.
/// Veridical rotation follows the physical rotation sense; gsweep cells use
/// the stimulus' behavioral report. Values are rounded to the float32 precision
/// of the flow file format, as are builtin predictions before scoring.
FlowField cell_target(const StimulusEntry& stim, const ConditionEntry& cond, const SuiteConfig& cfg);

struct ResultsStore {
    std::filesystem::path output;
    std::vector<metrics::ScoreReport> reports;  ///< one per (model, stimulus, condition), config order

    std::size_t errors() const;
};

/// Runs every (model, stimulus, condition) cell and writes all result files.
ResultsStore run_suite(const SuiteConfig& cfg);
/// As run_suite for a config whose stimuli carry behavioral reports (gsweep.reports),
/// additionally writing gsweep_by_report.csv.
ResultsStore run_gsweep(const SuiteConfig& cfg);

/// Scores `<flow_dir>/<stimulus_id>/<condition_id>/<flow_name>` for every configured
/// cell against regenerated targets. Missing or mismatched files become per-cell errors.
std::vector<metrics::ScoreReport> score_external(const std::filesystem::path& flow_dir, const SuiteConfig& cfg,
                                                 const std::string& model_name = "external",
                                                 const std::string& flow_name = "flow.flo");

/// Result tables for a finished run; called by run_suite and run_gsweep.
void write_results(const ResultsStore& store, const SuiteConfig& cfg);

/// Paired illusion-minus-control rho differences per (model, scheme, kind),
/// tested one-sided (illusion > control).
struct StatsRow {
    std::string model;
    std::string scheme;
    std::string kind;
    std::size_t pairs = 0;
    metrics::WilcoxonResult test;
    std::string error;
};
std::vector<StatsRow> illusion_control_stats(const std::vector<metrics::ScoreReport>& reports);

}  // namespace illusion::harness
