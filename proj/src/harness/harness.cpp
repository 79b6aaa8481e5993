#include "illusion/harness.hpp"

#include "illusion/error.hpp"
#include "illusion/flowio.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace illusion::harness {
namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "output",
        "seed",
        "workers",
        "models",
        "stimulus.families",
        "stimulus.schemes",
        "stimulus.senses",
        "stimulus.g1",
        "stimulus.g2",
        "stimulus.g_pairing",
        "stimulus.controls",
        "stimulus.control_permutation",
        "stimulus.rings",
        "stimulus.elements_per_ring",
        "stimulus.canvas_px",
        "stimulus.margin_px",
        "condition.kinds",
        "condition.n_frames",
        "condition.onset_frame",
        "condition.deltas",
        "condition.directions",
        "condition.shift_counts",
        "condition.shift_frames",
        "condition.allow_any_delta",
        "condition.random_slip_runs",
        "condition.omega",
        "condition.veridical_boundary_speed",
        "target.magnitude",
        "target.gamma",
        "score.mask",
        "estimator.stride",
        "estimator.working_disk_px",
        "estimator.working_scale",
        "estimator.threads",
        "output.save_frames",
        "gsweep.reports",
    };
    return keys;
}

std::string family_tag(stimgen::Family f) {
    switch (f) {
        case stimgen::Family::RotatingSnakes: return "snakes";
        case stimgen::Family::PeripheralDrift: return "pdi";
        case stimgen::Family::CentralDrift: return "cdi";
        case stimgen::Family::Ouchi: break;
    }
    return "ouchi";
}

std::string join_ints(const std::vector<int>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(v[i]);
    }
    return out;
}

int to_int(long long v, const char* key) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ConfigError(std::string(key) + " is out of range");
    return static_cast<int>(v);
}

std::vector<int> int_list(const KeyValueDoc& doc, const char* key, std::vector<long long> fallback) {
    std::vector<int> out;
    for (long long v : doc.get_int_list(key, std::move(fallback))) out.push_back(to_int(v, key));
    return out;
}

percept::Sense percept_sense(stimgen::Sense s) { return s == stimgen::Sense::Ccw ? percept::Sense::Ccw : percept::Sense::Cw; }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string number(double v) { return std::isfinite(v) ? format_double(v) : ""; }

const std::vector<std::string>& report_key_order() {
    static const std::vector<std::string> order = {"model", "stimulus", "condition", "family", "scheme", "sense",
                                                   "variant", "pair", "g1", "g2", "report", "kind", "column",
                                                   "delta", "direction", "seed"};
    return order;
}

std::map<std::string, std::string> cell_keys(const std::string& model, const StimulusEntry& stim,
                                             const ConditionEntry& cond, bool gsweep) {
    const auto& c = cond.condition;
    const bool shifting = c.kind == viewsim::Kind::Shift || c.kind == viewsim::Kind::PeripheralShift;
    return {
        {"model", model},
        {"stimulus", stim.id},
        {"condition", cond.id},
        {"family", stimgen::to_string(stim.spec.family)},
        {"scheme", stimgen::scheme_tag(stim.spec.scheme)},
        {"sense", stimgen::to_string(stim.spec.sense)},
        {"variant", stim.control ? "control" : "illusion"},
        {"pair", stim.base_id},
        {"g1", format_double(stim.spec.g1)},
        {"g2", format_double(stim.spec.g2)},
        {"report", gsweep ? percept::to_string(stim.report) : ""},
        {"kind", viewsim::to_string(c.kind)},
        {"column", cond.column},
        {"delta", shifting ? std::to_string(c.delta_px) : ""},
        {"direction", shifting ? std::to_string(c.direction_deg) : ""},
        {"seed", c.kind == viewsim::Kind::RandomSlip ? std::to_string(c.seed) : ""},
    };
}

void write_report_rows(std::ostream& os, const std::vector<metrics::ScoreReport>& reports) {
    for (const auto& k : report_key_order()) os << k << ',';
    os << "rho,epe,ae,n_valid,degenerate,error\n";
    for (const auto& r : reports) {
        for (const auto& k : report_key_order()) {
            const auto it = r.keys.find(k);
            os << csv_field(it == r.keys.end() ? "" : it->second) << ',';
        }
        if (r.ok())
            os << number(r.rho) << ',' << number(r.mean_epe) << ',' << number(r.mean_ae) << ',' << r.n_valid << ','
               << (r.degenerate ? 1 : 0) << ",\n";
        else
            os << ",,,,," << csv_field(r.error) << '\n';
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    if (!os) throw Error("failed writing " + path.string());
}

// Wide table: one row per (model, variant), one column per scheme/column_key value.
void write_heatmap(const fs::path& path, const std::vector<metrics::ScoreReport>& reports, const std::string& column_key,
                   double metrics::AggregateRow::*value) {
    const auto table = metrics::aggregate(reports, {"model", "variant", "scheme", column_key});
    std::vector<std::pair<std::string, std::string>> rows;
    std::vector<std::string> columns;
    for (const auto& r : reports) {
        const std::pair<std::string, std::string> row{r.keys.at("model"), r.keys.at("variant")};
        if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
        const auto col = r.keys.at("scheme") + "/" + r.keys.at(column_key);
        if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    }
    std::map<std::pair<std::pair<std::string, std::string>, std::string>, double> cells;
    for (const auto& row : table.rows) cells[{{row.group[0], row.group[1]}, row.group[2] + "/" + row.group[3]}] = row.*value;

    std::ostringstream os;
    os << "model,variant";
    for (const auto& c : columns) os << ',' << csv_field(c);
    os << '\n';
    for (const auto& row : rows) {
        os << csv_field(row.first) << ',' << row.second;
        for (const auto& c : columns) {
            const auto it = cells.find({row, c});
            os << ',' << (it == cells.end() ? "" : number(it->second));
        }
        os << '\n';
    }
    write_text(path, os.str());
}

nlohmann::json report_json(const metrics::ScoreReport& r) {
    nlohmann::json j;
    for (const auto& k : report_key_order()) j[k] = r.keys.count(k) ? r.keys.at(k) : "";
    if (r.ok()) {
        j["rho"] = r.rho;
        j["epe"] = r.mean_epe;
        j["ae"] = r.mean_ae;
        j["n_valid"] = r.n_valid;
        j["degenerate"] = r.degenerate;
        j["error"] = nullptr;
    } else {
        j["rho"] = j["epe"] = j["ae"] = nullptr;
        j["n_valid"] = 0;
        j["degenerate"] = false;
        j["error"] = r.error;
    }
    return j;
}

fs::path cell_dir(const fs::path& root, const StimulusEntry& stim, const ConditionEntry& cond) {
    return root / stim.id / cond.id;
}

metrics::ScoreReport score_cell(const FlowField& flow, const FlowField& target, const SuiteConfig& cfg) {
    if (flow.width != target.width || flow.height != target.height)
        throw ParameterError("flow is " + std::to_string(flow.width) + "x" + std::to_string(flow.height) + " but the target is " +
                             std::to_string(target.width) + "x" + std::to_string(target.height));
    return metrics::score(flow, target, cfg.mask);
}

// Flow files store float32, so scores are computed at that precision; re-scoring
// archived files then reproduces the original reports exactly.
FlowField wire_precision(const FlowField& f) { return flowio::decode_flow(flowio::encode_flow(f)); }

template <typename Fn>
void run_jobs(std::size_t n, int workers, Fn&& fn) {
    const auto count = static_cast<std::size_t>(std::max(1, workers));
    if (count == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(count, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

std::string stimulus_id(const stimgen::StimulusSpec& spec, bool control) {
    std::string id = family_tag(spec.family) + "_" + stimgen::scheme_tag(spec.scheme) + "_" + stimgen::to_string(spec.sense) +
                     "_g" + format_double(spec.g1) + "-" + format_double(spec.g2);
    return id + (control ? "_control" : "_illusion");
}

std::string condition_id(const viewsim::ViewingCondition& c) {
    const std::string n = "_n" + std::to_string(c.n_frames);
    // Default placements are named by their shift count, explicit ones by their frames.
    const auto timing = [&] {
        const auto k = static_cast<int>(c.shift_frames.size());
        if (k == 0 || c.shift_frames == viewsim::default_shift_frames(c.n_frames, k)) return "_k" + std::to_string(k);
        return "_t" + join_ints(c.shift_frames, '-');
    };
    switch (c.kind) {
        case viewsim::Kind::Static: return "static" + n;
        case viewsim::Kind::Onset: return "onset_f" + std::to_string(c.onset_frame) + n;
        case viewsim::Kind::Shift:
            return "shift_d" + std::to_string(c.delta_px) + "_a" + std::to_string(c.direction_deg) + timing() + n;
        case viewsim::Kind::PeripheralShift:
            return "periph_d" + std::to_string(c.delta_px) + "_a" + std::to_string(c.direction_deg) + timing() + n;
        case viewsim::Kind::RandomSlip: return "slip_s" + std::to_string(c.seed) + n;
        case viewsim::Kind::VeridicalRotation: break;
    }
    return "veridical_w" + format_double(c.omega) + n;
}

SuiteConfig parse_config(const KeyValueDoc& doc, const fs::path& base_dir) {
    for (const auto& [key, value] : doc.entries())
        if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");

    SuiteConfig cfg;
    cfg.source = doc;
    try {
        const auto resolve = [&](const fs::path& p) { return p.is_absolute() || base_dir.empty() ? p : base_dir / p; };
        cfg.output = resolve(doc.get_string("output", "results"));
        const long long seed = doc.get_int("seed", 0);
        if (seed < 0) throw ConfigError("seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.workers = to_int(doc.get_int("workers", 1), "workers");
        if (cfg.workers < 1) throw ConfigError("workers must be at least 1");
        cfg.mask = metrics::parse_mask_policy(doc.get_string("score.mask", "target_mask"));
        cfg.target_magnitude = doc.get_double("target.magnitude", 1.0);
        cfg.target_gamma = doc.get_double("target.gamma", 1.0);
        if (!(cfg.target_magnitude > 0) || !(cfg.target_gamma > 0))
            throw ConfigError("target.magnitude and target.gamma must be positive");
        cfg.grid.stride = to_int(doc.get_int("estimator.stride", cfg.grid.stride), "estimator.stride");
        cfg.grid.working_disk_px = doc.get_double("estimator.working_disk_px", cfg.grid.working_disk_px);
        cfg.grid.working_scale = doc.get_double("estimator.working_scale", cfg.grid.working_scale);
        cfg.grid.threads = to_int(doc.get_int("estimator.threads", cfg.grid.threads), "estimator.threads");
        cfg.save_frames = doc.get_bool("output.save_frames", false);

        for (const auto& item : doc.get_list("models", {kBuiltinModel})) {
            ModelEntry m;
            const auto eq = item.find('=');
            if (eq == std::string::npos) {
                if (item != kBuiltinModel) throw ConfigError("model '" + item + "' needs the form name=flow_directory");
                m.name = item;
                m.builtin = true;
            } else {
                m.name = trim(item.substr(0, eq));
                m.dir = resolve(trim(item.substr(eq + 1)));
                if (m.name.empty() || m.name == kBuiltinModel || m.dir.empty())
                    throw ConfigError("bad external model entry '" + item + "'");
            }
            for (const auto& other : cfg.models)
                if (other.name == m.name) throw ConfigError("duplicate model '" + m.name + "'");
            cfg.models.push_back(std::move(m));
        }
        if (cfg.models.empty()) throw ConfigError("no models configured");

        // Stimuli.
        stimgen::StimulusSpec base;
        base.rings = to_int(doc.get_int("stimulus.rings", base.rings), "stimulus.rings");
        base.elements_per_ring = to_int(doc.get_int("stimulus.elements_per_ring", base.elements_per_ring), "stimulus.elements_per_ring");
        base.canvas_px = to_int(doc.get_int("stimulus.canvas_px", base.canvas_px), "stimulus.canvas_px");
        base.margin_px = to_int(doc.get_int("stimulus.margin_px", base.margin_px), "stimulus.margin_px");
        if (doc.has("stimulus.control_permutation")) {
            const auto p = int_list(doc, "stimulus.control_permutation", {});
            if (p.size() != 4) throw ConfigError("stimulus.control_permutation needs four entries");
            base.control_permutation = stimgen::Permutation{p[0], p[1], p[2], p[3]};
        }
        const auto g1s = doc.get_double_list("stimulus.g1", {base.g1});
        const auto g2s = doc.get_double_list("stimulus.g2", {base.g2});
        const auto pairing = doc.get_string("stimulus.g_pairing", "grid");
        std::vector<std::pair<double, double>> gpairs;
        if (pairing == "grid") {
            for (double g1 : g1s)
                for (double g2 : g2s) gpairs.emplace_back(g1, g2);
        } else if (pairing == "zip") {
            if (g1s.size() != g2s.size()) throw ConfigError("stimulus.g_pairing = zip needs equally long g1 and g2 lists");
            for (std::size_t i = 0; i < g1s.size(); ++i) gpairs.emplace_back(g1s[i], g2s[i]);
        } else {
            throw ConfigError("stimulus.g_pairing must be grid or zip");
        }

        std::vector<percept::DirectionReport> reports;
        if (doc.has("gsweep.reports")) {
            cfg.gsweep = true;
            for (const auto& r : doc.get_list("gsweep.reports")) reports.push_back(percept::parse_report(r));
            if (reports.size() != gpairs.size())
                throw ConfigError("gsweep.reports has " + std::to_string(reports.size()) + " entries but the g1/g2 grid has " +
                                  std::to_string(gpairs.size()));
        }

        const bool controls = doc.get_bool("stimulus.controls", true);
        for (const auto& fam : doc.get_list("stimulus.families", {"rotating_snakes"}))
            for (const auto& sch : doc.get_list("stimulus.schemes", {"grayscale"}))
                for (const auto& sen : doc.get_list("stimulus.senses", {"ccw"}))
                    for (std::size_t g = 0; g < gpairs.size(); ++g) {
                        StimulusEntry e;
                        e.spec = base;
                        e.spec.family = stimgen::parse_family(fam);
                        e.spec.scheme = stimgen::parse_scheme(sch);
                        e.spec.sense = stimgen::parse_sense(sen);
                        e.spec.g1 = gpairs[g].first;
                        e.spec.g2 = gpairs[g].second;
                        if (cfg.gsweep) e.report = reports[g];
                        stimgen::validate(e.spec);
                        if (e.spec.family != stimgen::Family::RotatingSnakes && e.spec.scheme != stimgen::ColorScheme::Grayscale)
                            throw ConfigError(fam + " stimuli are grayscale only");
                        e.id = stimulus_id(e.spec, false);
                        e.base_id = e.id.substr(0, e.id.size() - std::string("_illusion").size());
                        cfg.stimuli.push_back(e);
                        if (controls && e.spec.family == stimgen::Family::RotatingSnakes) {
                            e.control = true;
                            e.id = stimulus_id(e.spec, true);
                            cfg.stimuli.push_back(e);
                        }
                    }
        for (std::size_t i = 0; i < cfg.stimuli.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (cfg.stimuli[i].id == cfg.stimuli[j].id) throw ConfigError("duplicate stimulus '" + cfg.stimuli[i].id + "'");

        // Conditions.
        viewsim::ViewingCondition cbase;
        cbase.n_frames = to_int(doc.get_int("condition.n_frames", cbase.n_frames), "condition.n_frames");
        cbase.onset_frame = to_int(doc.get_int("condition.onset_frame", cbase.onset_frame), "condition.onset_frame");
        cbase.allow_any_delta = doc.get_bool("condition.allow_any_delta", false);
        const auto deltas = int_list(doc, "condition.deltas", {15, 30, 60, 90, 120});
        const auto directions = int_list(doc, "condition.directions", {225});
        const auto shift_counts = int_list(doc, "condition.shift_counts", {1});
        const auto shift_frames = int_list(doc, "condition.shift_frames", {});
        const int slip_runs = to_int(doc.get_int("condition.random_slip_runs", 1), "condition.random_slip_runs");
        if (slip_runs < 1) throw ConfigError("condition.random_slip_runs must be at least 1");
        double omega = doc.get_double("condition.omega", 0.0);
        if (omega == 0.0) {
            const double speed = doc.get_double("condition.veridical_boundary_speed", 2.0);
            omega = std::round(speed / base.disk_radius() * 180.0 / std::numbers::pi * 1e6) / 1e6;
        }

        const auto add = [&](viewsim::ViewingCondition c, std::string column) {
            viewsim::validate(c);
            ConditionEntry e;
            e.condition = std::move(c);
            e.id = condition_id(e.condition);
            e.column = std::move(column);
            for (const auto& other : cfg.conditions)
                if (other.id == e.id) throw ConfigError("duplicate condition '" + e.id + "'");
            cfg.conditions.push_back(std::move(e));
        };
        for (const auto& kind_text : doc.get_list("condition.kinds", {"static"})) {
            auto c = cbase;
            c.kind = viewsim::parse_kind(kind_text);
            const auto kind = viewsim::to_string(c.kind);
            switch (c.kind) {
                case viewsim::Kind::Static:
                case viewsim::Kind::Onset: add(c, kind); break;
                case viewsim::Kind::Shift:
                case viewsim::Kind::PeripheralShift:
                    for (int d : deltas)
                        for (int a : directions) {
                            c.delta_px = d;
                            c.direction_deg = a;
                            if (!shift_frames.empty()) {
                                c.shift_frames = shift_frames;
                                add(c, kind + "_d" + std::to_string(d));
                                continue;
                            }
                            for (int k : shift_counts) {
                                if (k < 1) throw ConfigError("condition.shift_counts entries must be at least 1");
                                c.shift_frames = viewsim::default_shift_frames(c.n_frames, k);
                                add(c, kind + "_d" + std::to_string(d));
                            }
                        }
                    break;
                case viewsim::Kind::RandomSlip:
                    for (int r = 0; r < slip_runs; ++r) {
                        c.seed = cfg.seed + static_cast<std::uint64_t>(r);
                        add(c, kind);
                    }
                    break;
                case viewsim::Kind::VeridicalRotation:
                    c.omega = omega;
                    add(c, kind);
                    break;
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

SuiteConfig load_config(const fs::path& path) {
    KeyValueDoc doc;
    try {
        doc = KeyValueDoc::load(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(doc, path.parent_path());
}

CellGeometry cell_geometry(const StimulusEntry& stim, const ConditionEntry& cond) {
    const auto& c = cond.condition;
    CellGeometry g;
    g.width = g.height = stim.spec.canvas_px;
    g.final_disk = viewsim::frame_disk(c, viewsim::disk_of(stim.spec), g.width, g.height);
    if (c.kind == viewsim::Kind::PeripheralShift) g.width = g.height = c.peripheral_canvas_px;
    for (const auto& e : viewsim::plan_events(c)) {
        g.final_disk.cx += e.dx;
        g.final_disk.cy += e.dy;
    }
    return g;
}

FlowField cell_target(const StimulusEntry& stim, const ConditionEntry& cond, const SuiteConfig& cfg) {
    const auto g = cell_geometry(stim, cond);
    percept::PerceptTarget t;
    t.cx = g.final_disk.cx;
    t.cy = g.final_disk.cy;
    t.radius = g.final_disk.radius;
    t.width = g.width;
    t.height = g.height;
    t.magnitude = cfg.target_magnitude;
    t.gamma = cfg.target_gamma;
    t.sense = percept_sense(stim.spec.sense);
    if (cond.condition.kind == viewsim::Kind::VeridicalRotation) {
        t.sense = cond.condition.omega > 0 ? percept::Sense::Ccw : percept::Sense::Cw;
        return wire_precision(percept::target_flow(t));
    }
    if (cfg.gsweep) return wire_precision(percept::behavioral_target(stim.report, t));
    return wire_precision(percept::target_flow(t));
}

std::size_t ResultsStore::errors() const {
    return static_cast<std::size_t>(std::count_if(reports.begin(), reports.end(), [](const auto& r) { return !r.ok(); }));
}

ResultsStore run_suite(const SuiteConfig& cfg) {
    ResultsStore store;
    store.output = cfg.output;
    fs::create_directories(cfg.output);

    const bool any_builtin = std::any_of(cfg.models.begin(), cfg.models.end(), [](const auto& m) { return m.builtin; });
    meflow::GaborBank bank;
    if (any_builtin) bank = meflow::build_bank();
    auto grid = cfg.grid;
    if (cfg.workers > 1) grid.threads = 1;

    const std::size_t n_cond = cfg.conditions.size();
    const std::size_t jobs = cfg.stimuli.size() * n_cond;
    std::vector<std::vector<metrics::ScoreReport>> results(jobs);

    run_jobs(jobs, cfg.workers, [&](std::size_t job) {
        const auto& stim = cfg.stimuli[job / n_cond];
        const auto& cond = cfg.conditions[job % n_cond];
        auto& out = results[job];
        for (const auto& m : cfg.models) {
            metrics::ScoreReport r;
            r.keys = cell_keys(m.name, stim, cond, cfg.gsweep);
            out.push_back(std::move(r));
        }
        const auto fail_all = [&](const std::string& msg) {
            for (auto& r : out)
                if (r.ok()) r.error = msg;
        };
        const fs::path dir = cell_dir(cfg.output, stim, cond);
        FlowField target;
        std::optional<viewsim::FrameSequence> seq;
        try {
            fs::create_directories(dir);
            target = cell_target(stim, cond, cfg);
            flowio::write_flow(target, dir / "target.flo");
            if (any_builtin || cfg.save_frames) {
                seq = viewsim::make_sequence(stimgen::render(stim.spec, stim.control), cond.condition, viewsim::disk_of(stim.spec));
                if (cfg.save_frames) viewsim::save_sequence(*seq, dir);
            }
        } catch (const std::exception& e) {
            fail_all(e.what());
        }
        for (std::size_t i = 0; i < cfg.models.size(); ++i) {
            auto& r = out[i];
            if (!r.ok()) continue;
            const auto& m = cfg.models[i];
            try {
                FlowField flow;
                if (m.builtin) {
                    flow = wire_precision(meflow::estimate_flow(*seq, bank, grid));
                    const auto flow_dir = cell_dir(cfg.output / "models" / m.name, stim, cond);
                    fs::create_directories(flow_dir);
                    flowio::write_flow(flow, flow_dir / "flow.flo");
                } else {
                    const auto path = cell_dir(m.dir, stim, cond) / "flow.flo";
                    if (!fs::exists(path)) throw Error("missing flow file " + path.string());
                    flow = flowio::read_flow(path);
                }
                auto scored = score_cell(flow, target, cfg);
                scored.keys = std::move(r.keys);
                r = std::move(scored);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        }
        try {
            std::ostringstream os;
            write_report_rows(os, out);
            write_text(dir / "report.csv", os.str());
        } catch (const std::exception& e) {
            fail_all(e.what());
        }
    });

    for (auto& r : results)
        for (auto& rep : r) store.reports.push_back(std::move(rep));
    write_results(store, cfg);
    return store;
}

ResultsStore run_gsweep(const SuiteConfig& cfg) {
    if (!cfg.gsweep) throw ConfigError("run_gsweep needs gsweep.reports in the config");
    auto store = run_suite(cfg);
    const auto table = metrics::aggregate(store.reports, {"model", "report", "variant"});
    std::ostringstream os;
    os << "model,report,variant,count,errors,degenerate,mean_rho,mean_epe,mean_ae\n";
    for (const auto& row : table.rows)
        os << csv_field(row.group[0]) << ',' << row.group[1] << ',' << row.group[2] << ',' << row.count << ',' << row.errors
           << ',' << row.degenerate << ',' << number(row.mean_rho) << ',' << number(row.mean_epe) << ','
           << number(row.mean_ae) << '\n';
    write_text(cfg.output / "gsweep_by_report.csv", os.str());
    return store;
}

std::vector<metrics::ScoreReport> score_external(const fs::path& flow_dir, const SuiteConfig& cfg, const std::string& model_name,
                                                 const std::string& flow_name) {
    std::vector<metrics::ScoreReport> out;
    for (const auto& stim : cfg.stimuli)
        for (const auto& cond : cfg.conditions) {
            metrics::ScoreReport r;
            r.keys = cell_keys(model_name, stim, cond, cfg.gsweep);
            try {
                const auto path = cell_dir(flow_dir, stim, cond) / flow_name;
                if (!fs::exists(path)) throw Error("missing flow file " + path.string());
                const auto flow = flowio::read_flow(path);
                auto scored = score_cell(flow, cell_target(stim, cond, cfg), cfg);
                scored.keys = std::move(r.keys);
                r = std::move(scored);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            out.push_back(std::move(r));
        }
    return out;
}

std::vector<StatsRow> illusion_control_stats(const std::vector<metrics::ScoreReport>& reports) {
    using Key = std::tuple<std::string, std::string, std::string>;  // model, pair, condition
    std::map<Key, const metrics::ScoreReport*> controls;
    for (const auto& r : reports)
        if (r.ok() && r.keys.at("variant") == "control")
            controls[{r.keys.at("model"), r.keys.at("pair"), r.keys.at("condition")}] = &r;

    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> diffs;  // model, scheme, kind
    for (const auto& r : reports) {
        if (!r.ok() || r.keys.at("variant") != "illusion") continue;
        const auto it = controls.find({r.keys.at("model"), r.keys.at("pair"), r.keys.at("condition")});
        if (it == controls.end()) continue;
        diffs[{r.keys.at("model"), r.keys.at("scheme"), r.keys.at("kind")}].push_back(r.rho - it->second->rho);
    }
    std::vector<StatsRow> rows;
    for (const auto& [key, d] : diffs) {
        StatsRow row;
        std::tie(row.model, row.scheme, row.kind) = key;
        row.pairs = d.size();
        try {
            row.test = metrics::wilcoxon_one_sided(d, metrics::Alternative::Greater);
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_results(const ResultsStore& store, const SuiteConfig& cfg) {
    const auto& root = store.output;
    fs::create_directories(root);
    {
        std::ostringstream os;
        write_report_rows(os, store.reports);
        write_text(root / "results.csv", os.str());
    }
    {
        nlohmann::json j;
        j["tool_version"] = kToolVersion;
        j["seed"] = cfg.seed;
        j["mask"] = metrics::to_string(cfg.mask);
        j["reports"] = nlohmann::json::array();
        for (const auto& r : store.reports) j["reports"].push_back(report_json(r));
        write_text(root / "results.json", j.dump(2) + "\n");
    }
    {
        KeyValueDoc meta;
        meta.set("tool_version", kToolVersion);
        meta.set("seed", static_cast<long long>(cfg.seed));
        meta.set("mask", metrics::to_string(cfg.mask));
        meta.set("cells", static_cast<long long>(store.reports.size()));
        meta.set("cell_errors", static_cast<long long>(store.errors()));
        for (const auto& [k, v] : cfg.source.entries()) meta.set("config." + k, v);
        meta.save(root / "run_meta.txt");
    }
    if (!store.reports.empty()) {
        using Row = metrics::AggregateRow;
        for (const auto& [name, field] : {std::pair{"rho", &Row::mean_rho}, std::pair{"epe", &Row::mean_epe},
                                          std::pair{"ae", &Row::mean_ae}}) {
            write_heatmap(root / (std::string("heatmap_") + name + ".csv"), store.reports, "column", field);
            write_heatmap(root / (std::string("heatmap_") + name + "_mean_delta.csv"), store.reports, "kind", field);
        }
    }
    std::ostringstream os;
    os << "model,scheme,kind,pairs,n,w_plus,p_value,exact,error\n";
    for (const auto& row : illusion_control_stats(store.reports)) {
        os << csv_field(row.model) << ',' << row.scheme << ',' << row.kind << ',' << row.pairs << ',';
        if (row.error.empty())
            os << row.test.n << ',' << number(row.test.w_plus) << ',' << number(row.test.p_value) << ','
               << (row.test.exact ? 1 : 0) << ",\n";
        else
            os << ",,,," << csv_field(row.error) << '\n';
    }
    write_text(root / "stats.csv", os.str());
}

}  // namespace illusion::harness
