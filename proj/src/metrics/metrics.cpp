#include "illusion/metrics.hpp"

#include "illusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>

namespace illusion::metrics {

namespace {

void check_pair(const FlowField& p, const FlowField& r) {
    if (p.width != r.width || p.height != r.height)
        throw ParameterError("flow dimensions differ: " + std::to_string(p.width) + "x" + std::to_string(p.height) +
                             " vs " + std::to_string(r.width) + "x" + std::to_string(r.height));
    if (p.u.size() != p.size() || p.v.size() != p.size() || p.valid.size() != p.size() || r.u.size() != r.size() ||
        r.v.size() != r.size() || r.valid.size() != r.size())
        throw ParameterError("flow field buffers are inconsistent with its dimensions");
}

// Calls fn(pu, pv, ru, rv) for every pixel selected by the policy.
template <typename Fn>
std::size_t for_each_scored(const FlowField& p, const FlowField& r, MaskPolicy policy, Fn&& fn) {
    check_pair(p, r);
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pv = p.valid[i] != 0, rv = r.valid[i] != 0;
        if (policy == MaskPolicy::TargetDisk) {
            if (!pv || !rv) continue;
            fn(p.u[i], p.v[i], r.u[i], r.v[i]);
        } else if (policy == MaskPolicy::TargetMask) {
            if (!rv) continue;
            fn(pv ? p.u[i] : 0.0, pv ? p.v[i] : 0.0, r.u[i], r.v[i]);
        } else {
            fn(pv ? p.u[i] : 0.0, pv ? p.v[i] : 0.0, rv ? r.u[i] : 0.0, rv ? r.v[i] : 0.0);
        }
        ++n;
    }
    return n;
}

double pixel_ae(double pu, double pv, double ru, double rv) {
    // Rounding keeps the cosine of identical embeddings a few ulps below 1.
    if (pu == ru && pv == rv) return 0.0;
    const double num = 1.0 + pu * ru + pv * rv;
    const double den = std::sqrt(1.0 + pu * pu + pv * pv) * std::sqrt(1.0 + ru * ru + rv * rv);
    return std::acos(std::clamp(num / den, -1.0, 1.0));
}

}  // namespace

CorrResult corr(const FlowField& p, const FlowField& r, MaskPolicy policy) {
    double dot = 0.0, pp = 0.0, rr = 0.0;
    CorrResult out;
    out.n_valid = for_each_scored(p, r, policy, [&](double pu, double pv, double ru, double rv) {
        dot += pu * ru + pv * rv;
        pp += pu * pu + pv * pv;
        rr += ru * ru + rv * rv;
    });
    const double np = std::sqrt(pp), nr = std::sqrt(rr);
    if (np < kDegenerateNorm || nr < kDegenerateNorm) {
        out.degenerate = true;
        return out;
    }
    out.rho = std::clamp(dot / (np * nr), -1.0, 1.0);
    return out;
}

double epe(const FlowField& p, const FlowField& r, MaskPolicy policy) {
    double sum = 0.0;
    const auto n = for_each_scored(p, r, policy, [&](double pu, double pv, double ru, double rv) {
        sum += std::hypot(pu - ru, pv - rv);
    });
    if (n == 0) throw Error("no valid pixels to score");
    return sum / static_cast<double>(n);
}

double ae(const FlowField& p, const FlowField& r, MaskPolicy policy) {
    double sum = 0.0;
    const auto n = for_each_scored(p, r, policy, [&](double pu, double pv, double ru, double rv) {
        sum += pixel_ae(pu, pv, ru, rv);
    });
    if (n == 0) throw Error("no valid pixels to score");
    return sum / static_cast<double>(n);
}

ScoreReport score(const FlowField& p, const FlowField& r, MaskPolicy policy) {
    ScoreReport rep;
    const auto c = corr(p, r, policy);
    if (c.n_valid == 0) throw Error("no valid pixels to score");
    rep.rho = c.rho;
    rep.degenerate = c.degenerate;
    rep.n_valid = c.n_valid;
    rep.mean_epe = epe(p, r, policy);
    rep.mean_ae = ae(p, r, policy);
    return rep;
}

WilcoxonResult wilcoxon_one_sided(const std::vector<double>& samples, Alternative alt) {
    std::vector<double> x;
    for (double s : samples) {
        if (!std::isfinite(s)) throw ParameterError("Wilcoxon samples must be finite");
        if (s != 0.0) x.push_back(s);
    }
    if (x.empty()) throw ParameterError("Wilcoxon test needs at least one non-zero sample");
    const std::size_t n = x.size();
    if (n < 5) throw ParameterError("Wilcoxon test needs at least 5 non-zero samples, got " + std::to_string(n));

    // Tie-averaged ranks of |x|, kept doubled so they stay integral.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(x[a]) < std::abs(x[b]); });
    std::vector<std::int64_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(x[order[j + 1]]) == std::abs(x[order[i]])) ++j;
        const auto doubled = static_cast<std::int64_t>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    std::int64_t w2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0) w2 += rank2[i];

    WilcoxonResult res;
    res.n = n;
    res.w_plus = static_cast<double>(w2) / 2.0;

    if (n <= kWilcoxonExactMaxN) {
        // counts[s] = number of sign assignments whose doubled positive-rank sum is s.
        std::int64_t total2 = 0;
        for (auto r : rank2) total2 += r;
        std::vector<std::uint64_t> counts(static_cast<std::size_t>(total2) + 1, 0);
        counts[0] = 1;
        std::int64_t reach = 0;
        for (auto r : rank2) {
            for (std::int64_t s = reach; s >= 0; --s)
                if (counts[static_cast<std::size_t>(s)]) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
            reach += r;
        }
        std::uint64_t tail = 0;
        if (alt == Alternative::Greater) {
            for (std::int64_t s = w2; s <= total2; ++s) tail += counts[static_cast<std::size_t>(s)];
        } else {
            for (std::int64_t s = 0; s <= w2; ++s) tail += counts[static_cast<std::size_t>(s)];
        }
        res.p_value = std::ldexp(static_cast<double>(tail), -static_cast<int>(n));
        res.exact = true;
        return res;
    }

    const double nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    if (alt == Alternative::Greater) {
        const double z = (res.w_plus - mean - 0.5) / sd;
        res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    } else {
        const double z = (res.w_plus - mean + 0.5) / sd;
        res.p_value = 0.5 * std::erfc(-z / std::sqrt(2.0));
    }
    res.p_value = std::min(1.0, res.p_value);
    return res;
}

AggregateTable aggregate(const std::vector<ScoreReport>& reports, const std::vector<std::string>& group_by) {
    if (reports.empty()) throw ParameterError("nothing to aggregate");
    std::set<std::string> schema;
    for (const auto& [k, v] : reports.front().keys) schema.insert(k);
    for (const auto& g : group_by)
        if (!schema.count(g)) throw ParameterError("group key '" + g + "' is not a report key");
    struct Acc {
        AggregateRow row;
        double rho = 0, epe = 0, ae = 0;
    };
    std::map<std::vector<std::string>, Acc> groups;
    for (const auto& rep : reports) {
        std::set<std::string> keys;
        for (const auto& [k, v] : rep.keys) keys.insert(k);
        if (keys != schema) throw ParameterError("reports carry inconsistent key schemas");
        std::vector<std::string> group;
        for (const auto& g : group_by) group.push_back(rep.keys.at(g));
        auto& acc = groups[group];
        acc.row.group = group;
        if (!rep.ok()) {
            ++acc.row.errors;
            continue;
        }
        ++acc.row.count;
        acc.row.degenerate += rep.degenerate ? 1 : 0;
        acc.rho += rep.rho;
        acc.epe += rep.mean_epe;
        acc.ae += rep.mean_ae;
    }
    AggregateTable table;
    table.group_by = group_by;
    for (auto& [group, acc] : groups) {
        if (acc.row.count > 0) {
            const double c = static_cast<double>(acc.row.count);
            acc.row.mean_rho = acc.rho / c;
            acc.row.mean_epe = acc.epe / c;
            acc.row.mean_ae = acc.ae / c;
        } else {
            acc.row.mean_rho = acc.row.mean_epe = acc.row.mean_ae = std::nan("");
        }
        table.rows.push_back(acc.row);
    }
    return table;
}

std::string to_string(Alternative a) { return a == Alternative::Greater ? "greater" : "less"; }

std::string to_string(MaskPolicy p) {
    switch (p) {
        case MaskPolicy::TargetDisk: return "target_disk";
        case MaskPolicy::TargetMask: return "target_mask";
        case MaskPolicy::FullFrame: break;
    }
    return "full_frame";
}

MaskPolicy parse_mask_policy(const std::string& text) {
    if (text == "target_disk") return MaskPolicy::TargetDisk;
    if (text == "target_mask") return MaskPolicy::TargetMask;
    if (text == "full_frame") return MaskPolicy::FullFrame;
    throw ParameterError("unknown mask policy '" + text + "'");
}

}  // namespace illusion::metrics
