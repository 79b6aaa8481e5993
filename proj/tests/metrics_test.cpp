#include "illusion/error.hpp"
#include "illusion/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace illusion::metrics {
namespace {

FlowField random_field(std::mt19937_64& rng, int w, int h, double invalid_frac) {
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    FlowField f(w, h);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.u[i] = g(rng);
        f.v[i] = g(rng);
        if (u01(rng) < invalid_frac) {
            f.valid[i] = 0;
            f.u[i] = f.v[i] = 0.0;
        }
    }
    return f;
}

struct Oracle {
    double rho = 0, epe = 0, ae = 0;
    int n = 0;
};

// Straightforward per-pixel loops over the intersection of masks.
Oracle naive(const FlowField& p, const FlowField& r) {
    double dot = 0, np2 = 0, nr2 = 0, e = 0, a = 0;
    int n = 0;
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            const int i = y * p.width + x;
            if (!p.valid[i] || !r.valid[i]) continue;
            const double pu = p.u[i], pv = p.v[i], ru = r.u[i], rv = r.v[i];
            dot += pu * ru + pv * rv;
            np2 += pu * pu + pv * pv;
            nr2 += ru * ru + rv * rv;
            e += std::sqrt((pu - ru) * (pu - ru) + (pv - rv) * (pv - rv));
            double c = (1 + pu * ru + pv * rv) / (std::sqrt(1 + pu * pu + pv * pv) * std::sqrt(1 + ru * ru + rv * rv));
            if (c > 1) c = 1;
            if (c < -1) c = -1;
            a += std::acos(c);
            ++n;
        }
    }
    return {dot / (std::sqrt(np2) * std::sqrt(nr2)), e / n, a / n, n};
}

TEST(Corr, MatchesNaiveOracleOnRandomFields) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> side(8, 64);
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = side(rng), h = side(rng);
        const auto p = random_field(rng, w, h, 0.1);
        const auto r = random_field(rng, w, h, 0.1);
        const auto o = naive(p, r);
        const auto c = corr(p, r);
        ASSERT_EQ(c.n_valid, static_cast<std::size_t>(o.n));
        EXPECT_NEAR(c.rho, o.rho, 1e-12);
        EXPECT_NEAR(epe(p, r), o.epe, 1e-12);
        EXPECT_NEAR(ae(p, r), o.ae, 1e-10);
    }
}

TEST(Corr, Endpoints) {
    std::mt19937_64 rng(1);
    const auto r = random_field(rng, 32, 24, 0.0);
    auto neg = r, orth = r;
    for (std::size_t i = 0; i < r.size(); ++i) {
        neg.u[i] = -r.u[i];
        neg.v[i] = -r.v[i];
        orth.u[i] = -r.v[i];
        orth.v[i] = r.u[i];
    }
    EXPECT_NEAR(corr(r, r).rho, 1.0, 1e-12);
    EXPECT_NEAR(corr(neg, r).rho, -1.0, 1e-12);
    EXPECT_NEAR(corr(orth, r).rho, 0.0, 1e-12);
}

TEST(Corr, DegenerateNormIsFlaggedZero) {
    std::mt19937_64 rng(2);
    const auto r = random_field(rng, 10, 10, 0.0);
    const FlowField zero(10, 10);
    const auto c = corr(zero, r);
    EXPECT_TRUE(c.degenerate);
    EXPECT_EQ(c.rho, 0.0);
    EXPECT_FALSE(std::isnan(c.rho));
}

TEST(Corr, Properties) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> scale(-5.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_field(rng, 12, 9, 0.2);
        const auto r = random_field(rng, 12, 9, 0.2);
        const auto q = random_field(rng, 12, 9, 0.2);
        EXPECT_EQ(corr(p, r).rho, corr(r, p).rho);
        EXPECT_LE(std::abs(corr(p, r).rho), 1.0);
        double a = scale(rng);
        if (a == 0.0) a = 1.0;
        auto ap = p;
        for (std::size_t i = 0; i < p.size(); ++i) {
            ap.u[i] *= a;
            ap.v[i] *= a;
        }
        EXPECT_NEAR(corr(ap, r).rho, (a > 0 ? 1 : -1) * corr(p, r).rho, 1e-12);
        // The triangle inequality needs one shared pixel set.
        auto pf = p, rf = r, qf = q;
        for (auto* f : {&pf, &rf, &qf}) std::fill(f->valid.begin(), f->valid.end(), 1);
        EXPECT_GE(epe(pf, qf), 0.0);
        EXPECT_LE(epe(pf, qf), epe(pf, rf) + epe(rf, qf) + 1e-12);
        const double m = ae(p, r);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, std::numbers::pi);
        EXPECT_EQ(ae(p, p), 0.0);
    }
}

TEST(Epe, ConstantOffsetAndIdentity) {
    std::mt19937_64 rng(4);
    const auto r = random_field(rng, 16, 16, 0.0);
    auto p = r;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.u[i] += 3.0;
        p.v[i] += 4.0;
    }
    EXPECT_NEAR(epe(p, r), 5.0, 1e-12);
    EXPECT_EQ(epe(r, r), 0.0);
}

TEST(Ae, HandEvaluatedEmbedding) {
    FlowField p(1, 1), r(1, 1);
    p.u[0] = 1.0;
    EXPECT_NEAR(ae(p, r), std::numbers::pi / 4, 1e-15);
}

TEST(Metrics, Errors) {
    FlowField a(4, 4, false), b(4, 4, true), c(5, 4);
    EXPECT_THROW(epe(a, b), Error);
    EXPECT_THROW(ae(a, b), Error);
    EXPECT_THROW(corr(b, c), ParameterError);
    EXPECT_THROW(score(a, b), Error);
}

TEST(Metrics, FullFramePolicyCountsInvalidAsZero) {
    FlowField p(2, 1), r(2, 1);
    p.u = {1.0, 5.0};
    p.valid = {1, 0};
    r.u = {1.0, 2.0};
    EXPECT_DOUBLE_EQ(epe(p, r, MaskPolicy::TargetDisk), 0.0);
    EXPECT_DOUBLE_EQ(epe(p, r, MaskPolicy::FullFrame), 1.0);
    EXPECT_EQ(corr(p, r, MaskPolicy::FullFrame).n_valid, 2u);
}

TEST(Metrics, TargetMaskPolicyScoresEveryTargetPixel) {
    FlowField p(3, 1), r(3, 1);
    p.u = {1.0, 5.0, 7.0};
    p.valid = {1, 0, 1};
    r.u = {1.0, 2.0, 9.0};
    r.valid = {1, 1, 0};
    EXPECT_DOUBLE_EQ(epe(p, r, MaskPolicy::TargetMask), 1.0);
    EXPECT_EQ(corr(p, r, MaskPolicy::TargetMask).n_valid, 2u);

    const FlowField none(3, 1, false);
    const auto rep = score(none, r, MaskPolicy::TargetMask);
    EXPECT_TRUE(rep.degenerate);
    EXPECT_EQ(rep.rho, 0.0);
    EXPECT_DOUBLE_EQ(rep.mean_epe, 1.5);
    for (auto m : {MaskPolicy::TargetDisk, MaskPolicy::TargetMask, MaskPolicy::FullFrame})
        EXPECT_EQ(parse_mask_policy(to_string(m)), m);
    EXPECT_THROW(parse_mask_policy("disk"), ParameterError);
}

// --- Wilcoxon -------------------------------------------------------------

// Tie-averaged rank of |x[i]| by counting.
double avg_rank(const std::vector<double>& x, std::size_t i) {
    double less = 0, equal = 0;
    for (double y : x) {
        if (std::abs(y) < std::abs(x[i])) ++less;
        if (std::abs(y) == std::abs(x[i])) ++equal;
    }
    return less + (equal + 1) / 2.0;
}

// One-sided p-values by enumerating every sign assignment of the magnitudes.
std::pair<double, double> enumerate_p(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> ranks(n);
    double observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ranks[i] = avg_rank(x, i);
        if (x[i] > 0) observed += ranks[i];
    }
    std::uint64_t ge = 0, le = 0;
    for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) w += ranks[i];
        ge += w >= observed;
        le += w <= observed;
    }
    const double total = static_cast<double>(1ull << n);
    return {ge / total, le / total};
}

TEST(Wilcoxon, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> small(-6, 6);
    std::normal_distribution<double> g(0.3, 1.0);
    for (std::size_t n = 5; n <= 14; ++n) {
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<double> x;
            while (x.size() < n) {
                // Half the trials use small integers to force ties.
                const double v = trial % 2 ? small(rng) : g(rng);
                if (v != 0.0) x.push_back(v);
            }
            const auto [pg, pl] = enumerate_p(x);
            const auto rg = wilcoxon_one_sided(x, Alternative::Greater);
            const auto rl = wilcoxon_one_sided(x, Alternative::Less);
            EXPECT_TRUE(rg.exact);
            EXPECT_EQ(rg.p_value, pg);
            EXPECT_EQ(rl.p_value, pl);
            EXPECT_GE(rg.p_value + rl.p_value, 1.0);
        }
    }
}

TEST(Wilcoxon, AllPositiveTen) {
    std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    const auto r = wilcoxon_one_sided(x, Alternative::Greater);
    EXPECT_EQ(r.p_value, 1.0 / 1024.0);
    EXPECT_EQ(r.w_plus, 55.0);
    EXPECT_EQ(wilcoxon_one_sided(x, Alternative::Less).p_value, 1.0);
}

TEST(Wilcoxon, ZerosDroppedAndErrors) {
    std::vector<double> x{0.0, 1.0, 2.0, -3.0, 4.0, 5.0, 0.0};
    const auto r = wilcoxon_one_sided(x, Alternative::Greater);
    EXPECT_EQ(r.n, 5u);
    EXPECT_EQ(r.p_value, enumerate_p({1.0, 2.0, -3.0, 4.0, 5.0}).first);
    EXPECT_THROW(wilcoxon_one_sided({0, 0, 0, 0, 0, 0}, Alternative::Greater), ParameterError);
    EXPECT_THROW(wilcoxon_one_sided({1, 2, 3, 4}, Alternative::Greater), ParameterError);
}

TEST(Wilcoxon, NormalApproximationTracksExactTail) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.2, 1.0);
    std::vector<double> x(40);
    for (auto& v : x) v = g(rng);
    // Exact tail for continuous data by dynamic programming over integer ranks.
    std::vector<double> ranks(x.size());
    double w = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ranks[i] = avg_rank(x, i);
        if (x[i] > 0) w += ranks[i];
    }
    const int total = 40 * 41 / 2;
    std::vector<double> dist(total + 1, 0.0);
    dist[0] = 1.0;
    for (int k = 1; k <= 40; ++k)
        for (int s = total; s >= k; --s) dist[s] += dist[s - k];
    double tail = 0;
    for (int s = static_cast<int>(w); s <= total; ++s) tail += dist[s];
    tail /= std::pow(2.0, 40);
    const auto r = wilcoxon_one_sided(x, Alternative::Greater);
    EXPECT_FALSE(r.exact);
    EXPECT_NEAR(r.p_value, tail, 0.005);
}

// --- aggregate ------------------------------------------------------------

ScoreReport report(const std::string& model, const std::string& cond, double rho) {
    ScoreReport r;
    r.keys = {{"model", model}, {"stimulus", "snakes"}, {"condition", cond}};
    r.rho = rho;
    r.mean_epe = 2 * rho;
    r.mean_ae = rho / 2;
    r.n_valid = 10;
    return r;
}

TEST(Aggregate, SingleReportAndMeans) {
    const auto one = aggregate({report("m", "static", 0.7)}, {"model", "stimulus", "condition"});
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_EQ(one.rows[0].mean_rho, 0.7);
    EXPECT_EQ(one.rows[0].mean_epe, 1.4);
    EXPECT_EQ(one.rows[0].count, 1u);

    const auto two = aggregate({report("m", "a", 0.2), report("m", "b", 0.4)}, {"model"});
    ASSERT_EQ(two.rows.size(), 1u);
    EXPECT_NEAR(two.rows[0].mean_rho, 0.3, 1e-15);
    EXPECT_EQ(two.rows[0].count, 2u);
}

TEST(Aggregate, DeterministicOrderingAndErrors) {
    auto bad = report("a", "x", 0.0);
    bad.error = "missing flow file";
    const auto t = aggregate({report("z", "x", 0.1), report("a", "x", 0.5), bad}, {"model"});
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].group, std::vector<std::string>{"a"});
    EXPECT_EQ(t.rows[0].count, 1u);
    EXPECT_EQ(t.rows[0].errors, 1u);
    EXPECT_EQ(t.rows[0].mean_rho, 0.5);
    EXPECT_EQ(t.rows[1].group, std::vector<std::string>{"z"});

    auto odd = report("q", "x", 0.1);
    odd.keys["extra"] = "1";
    EXPECT_THROW(aggregate({report("a", "x", 0.1), odd}, {"model"}), ParameterError);
    EXPECT_THROW(aggregate({report("a", "x", 0.1)}, {"colour"}), ParameterError);
    EXPECT_THROW(aggregate({}, {"model"}), ParameterError);
}

}  // namespace
}  // namespace illusion::metrics
