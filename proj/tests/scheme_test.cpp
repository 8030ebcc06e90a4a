#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "tem/errors.hpp"
#include "tem/models.hpp"
#include "tem/scheme.hpp"

using namespace tem;

namespace {

using F = InitialComponent::Family;

FunctionalModel frozen() {
    return FunctionalModel(
        "frozen", 1, 1, {}, [](const SegmentFeatures&, std::span<double> out) { out[0] = 0.0; },
        [](const SegmentFeatures&, std::span<double> out) { out[0] = 0.0; });
}

SchemeConfig config(int k, int l, double horizon, TruncationPolicy policy = TruncationPolicy::classical()) {
    SchemeConfig c;
    c.k = k;
    c.l = l;
    c.horizon = horizon;
    c.policy = policy;
    c.record_times = SchemeConfig::uniform_times(horizon, 1.0 / l);
    return c;
}

// int phi d(3 e^{3u} du) for the piecewise-linear interpolant of `h`
// (oldest first, spacing 1/l, constant tail), piece by piece in closed form.
double memory_integral(const std::vector<double>& h, int k, int l) {
    const double lam = 3.0;
    const double dt = 1.0 / l;
    double total = h.front() * std::exp(-lam * k);
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
        const double a = -k + i * dt;
        const double b = a + dt;
        const double slope = (h[i + 1] - h[i]) / dt;
        // int_a^b (h_i + slope (u - a)) lam e^{lam u} du
        const double ea = std::exp(lam * a), eb = std::exp(lam * b);
        const double mass = eb - ea;
        const double first = (b * eb - a * ea) - mass / lam;  // int u lam e^{lam u}
        total += h[i] * mass + slope * (first - a * mass);
    }
    return total;
}

}  // namespace

TEST(Step, FrozenDynamicsRepeat) {
    const auto m = frozen();
    const auto cfg = config(2, 4, 3.0);
    const InitialData xi({{F::Exponential, 0.7, 0.2}});
    const auto rec = simulate_path(m, cfg, xi, NoiseStream(1, 0, 1, 4));
    ASSERT_EQ(rec.snapshots.size(), 13u);
    for (const auto& s : rec.snapshots) EXPECT_EQ(s.head[0], 0.7);
}

TEST(Step, LinearHalfStep) {
    const LinearModel m(1.0, 0.0);
    Segment s(1, 1, 2, 0.3);
    const double one = 1.0;
    s.set_node(2, std::span<const double>(&one, 1));
    const double dB = 0.0;
    const auto next = tem_step(s, m, std::numeric_limits<double>::infinity(), std::span<const double>(&dB, 1), 0.5);
    EXPECT_EQ(next.newest()[0], 0.5);
    EXPECT_EQ(next.oldest()[0], 0.0);
}

TEST(Step, CubicOneStepAgainstHandOracle) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const auto policy = preset_policy("cubic-example1");
    const int k = 3, l = 8;
    const double radius = policy.clip_radius(l);
    const InitialData xi({{F::Exponential, 1.0, 0.2}});
    Segment seg = clip_segment(from_initial(xi, k, l, 0.3), radius);
    std::vector<double> h(seg.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = seg.node(i)[0];

    const double dB = 0.173;
    const auto next = tem_step(seg, m, radius, std::span<const double>(&dB, 1), 1.0 / l);

    const double x = h.back();
    const double I = memory_integral(h, k, l);
    double y = x + (1.0 - 4.0 * x - 8.0 * x * x * x + I) / l + I * dB;
    y = std::abs(y) > radius ? std::copysign(radius, y) : y;
    EXPECT_NEAR(next.newest()[0], y, 1e-14);
    for (std::size_t i = 0; i + 1 < h.size(); ++i) EXPECT_EQ(next.node(i)[0], h[i + 1]);
}

TEST(Step, NonFiniteUpdateAborts) {
    const FunctionalModel boom(
        "boom", 1, 1, {}, [](const SegmentFeatures&, std::span<double> out) { out[0] = 1e308; },
        [](const SegmentFeatures&, std::span<double> out) { out[0] = 0.0; });
    auto cfg = config(1, 1, 5.0);
    const InitialData xi = InitialData::constant({1e308});
    try {
        simulate_path(boom, cfg, xi, NoiseStream(1, 4, 1, 1));
        FAIL() << "expected PathAborted";
    } catch (const PathAborted& e) {
        EXPECT_EQ(e.path_index(), 4u);
        EXPECT_EQ(e.step(), 0);
    }
}

TEST(SimulatePath, ZeroHorizonGivesInitialSnapshot) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    auto cfg = config(2, 4, 0.0, preset_policy("cubic-example1"));
    const auto rec = simulate_path(m, cfg, InitialData::constant({0.5}), NoiseStream(1, 0, 1, 4));
    ASSERT_EQ(rec.snapshots.size(), 1u);
    EXPECT_EQ(rec.snapshots[0].t, 0.0);
    EXPECT_EQ(rec.snapshots[0].head[0], 0.5);
    EXPECT_EQ(rec.steps_taken, 0);
}

TEST(SimulatePath, Deterministic) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    auto cfg = config(3, 8, 4.0, preset_policy("cubic-example1"));
    cfg.keep_segments = true;
    const InitialData xi({{F::Linear, 1.0, 0.0}});
    const NoiseStream s(99, 3, 1, 8);
    EXPECT_EQ(simulate_path(m, cfg, xi, s), simulate_path(m, cfg, xi, s));
    EXPECT_NE(simulate_path(m, cfg, xi, s), simulate_path(m, cfg, xi, s.with_path(4)));
}

TEST(SimulatePath, DeterministicCubicMatchesOracle) {
    CubicScalarModel::Params p;
    p.d5 = 0.0;
    const CubicScalarModel m(p);
    const auto policy = preset_policy("cubic-example1");
    const int k = 2, l = 8;
    const double T = 3.0;
    auto cfg = config(k, l, T, policy);
    const InitialData xi({{F::Exponential, -1.0, 0.2}});
    const auto rec = simulate_path(m, cfg, xi, NoiseStream(5, 0, 1, l));

    const double radius = policy.clip_radius(l);
    std::vector<double> h;
    for (int i = 0; i <= k * l; ++i) {
        const double v = -std::exp(0.2 * (-k + static_cast<double>(i) / l));
        h.push_back(std::abs(v) > radius ? std::copysign(radius, v) : v);
    }
    for (int j = 0; j < T * l; ++j) {
        const double x = h.back();
        const double I = memory_integral(h, k, l);
        double y = x + (p.d1 - p.d2 * x - p.d3 * x * x * x + p.d4 * I) / l;
        y = std::abs(y) > radius ? std::copysign(radius, y) : y;
        h.erase(h.begin());
        h.push_back(y);
        EXPECT_NEAR(rec.snapshots[j + 1].head[0], y, 1e-12) << j;
    }
}

TEST(SimulatePath, InvariantCheckAndClipping) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    auto cfg = config(2, 4, 5.0, preset_policy("cubic-example1"));
    cfg.check_invariants = true;
    const auto rec = simulate_path(m, cfg, InitialData::constant({10.0}), NoiseStream(3, 0, 1, 4));
    for (const auto& s : rec.snapshots) EXPECT_LE(std::abs(s.head[0]), rec.clip_radius);
    EXPECT_EQ(rec.snapshots[0].head[0], rec.clip_radius);
}

TEST(SimulatePath, CeilingStopsPath) {
    const FunctionalModel grow(
        "grow", 1, 1, {}, [](const SegmentFeatures& x, std::span<double> out) { out[0] = x.current[0]; },
        [](const SegmentFeatures&, std::span<double> out) { out[0] = 0.0; });
    auto cfg = config(1, 1, 50.0);
    cfg.ceiling = 100.0;
    // x doubles each step: 1, 2, 4, ..., 16 (256 > 100 at t = 4).
    const auto rec = simulate_path(grow, cfg, InitialData::constant({1.0}), NoiseStream(1, 0, 1, 1));
    EXPECT_TRUE(rec.exceeded_ceiling);
    EXPECT_EQ(rec.exceed_time, 4.0);
    EXPECT_EQ(rec.steps_taken, 4);
}

TEST(SimulatePath, ConfigErrors) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const InitialData xi = InitialData::constant({0.0});
    const NoiseStream s(1, 0, 1, 8);
    auto bad = config(2, 8, 1.0);
    bad.horizon = 1.03;
    EXPECT_THROW(simulate_path(m, bad, xi, s), ConfigError);
    auto off_grid = config(2, 8, 1.0);
    off_grid.record_times = {0.1};
    EXPECT_THROW(simulate_path(m, off_grid, xi, s), ConfigError);
    auto late = config(2, 8, 1.0);
    late.record_times = {2.0};
    EXPECT_THROW(simulate_path(m, late, xi, s), ConfigError);
    EXPECT_THROW(simulate_path(m, config(2, 8, 1.0), InitialData::constant({0.0, 1.0}), s), DimensionMismatch);
    EXPECT_THROW(simulate_path(m, config(2, 16, 1.0), xi, s), ConfigError);
}

TEST(Coupled, SameDatumSameNoiseStaysTogether) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const auto cfg = config(3, 8, 3.0, preset_policy("cubic-example1"));
    const InitialData xi({{F::Exponential, 1.0, 0.2}});
    const auto rec = simulate_coupled(m, cfg, xi, xi, NoiseStream(4, 0, 1, 8));
    for (double d : rec.distance) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(rec.first, rec.second);
}

TEST(Coupled, IndependentNoiseSeparates) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const auto cfg = config(3, 8, 3.0, preset_policy("cubic-example1"));
    const InitialData xi({{F::Exponential, 1.0, 0.2}});
    const NoiseStream a(4, 0, 1, 8, 0), b(4, 0, 1, 8, 1);
    const auto rec = simulate_coupled(m, cfg, xi, xi, a, &b);
    EXPECT_EQ(rec.distance.front(), 0.0);
    EXPECT_GT(rec.distance.back(), 0.0);
}

TEST(Coupled, SynchronousDistanceIsPathwiseNorm) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    auto cfg = config(2, 4, 2.0, preset_policy("cubic-example1"));
    cfg.keep_segments = true;
    const InitialData xi({{F::Exponential, 1.0, 0.2}});
    const InitialData eta({{F::Linear, 1.0, 0.0}});
    const NoiseStream s(8, 1, 1, 4);
    const auto rec = simulate_coupled(m, cfg, xi, eta, s);
    const auto a = simulate_path(m, cfg, xi, s);
    const auto b = simulate_path(m, cfg, eta, s);
    ASSERT_EQ(rec.distance.size(), a.snapshots.size());
    for (std::size_t t = 0; t < rec.distance.size(); ++t) {
        EXPECT_EQ(rec.distance[t], distance_r(*a.snapshots[t].segment, *b.snapshots[t].segment));
    }
}

TEST(Refined, FactorOneIsIdentical) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const auto policy = preset_policy("cubic-example1");
    const InitialData xi({{F::Exponential, 1.0, 0.2}});
    const auto pair = simulate_refined_pair(m, 2, 8, 1, 2.0, xi, NoiseStream(2, 0, 1, 8), policy, 0.3);
    EXPECT_EQ(pair.coarse, pair.fine);
    EXPECT_EQ(segment_error(*pair.coarse.snapshots.back().segment, *pair.fine.snapshots.back().segment), 0.0);
}

TEST(Refined, Errors) {
    const CubicScalarModel m(CubicScalarModel::Params{});
    const auto policy = preset_policy("cubic-example1");
    const InitialData xi = InitialData::constant({0.0});
    EXPECT_THROW(simulate_refined_pair(m, 2, 8, 0, 1.0, xi, NoiseStream(1, 0, 1, 8), policy, 0.3), ConfigError);
    EXPECT_THROW(simulate_refined_pair(m, 2, 8, -2, 1.0, xi, NoiseStream(1, 0, 1, 8), policy, 0.3), ConfigError);
    EXPECT_THROW(simulate_refined_pair(m, 2, 8, 4, 1.0, xi, NoiseStream(1, 0, 1, 16), policy, 0.3), ConfigError);
}

TEST(SegmentError, GridsAgreeOnLinearData) {
    // A linear datum is reproduced exactly by interpolation, so both grids see the same offset.
    const InitialData xi({{F::Linear, 1.0, 0.0}});
    const auto coarse = from_initial(xi, 2, 2, 0.3);
    const auto fine = from_initial(InitialData({{F::Linear, 1.0, 0.0}, }), 2, 8, 0.3);
    EXPECT_EQ(segment_error(coarse, fine, ErrorGrid::Coarse), 0.0);
    EXPECT_NEAR(segment_error(coarse, fine, ErrorGrid::Fine), 0.0, 1e-15);
    EXPECT_THROW(segment_error(fine, coarse), DimensionMismatch);
}

TEST(SegmentError, FineGridSeesBetweenNodes) {
    Segment coarse(1, 1, 1, 0.3);
    Segment fine(1, 1, 2, 0.3);
    const double bump = 1.0;
    fine.set_node(1, std::span<const double>(&bump, 1));  // u = -1/2
    EXPECT_EQ(segment_error(coarse, fine, ErrorGrid::Coarse), 0.0);
    EXPECT_NEAR(segment_error(coarse, fine, ErrorGrid::Fine), std::exp(-0.15), 1e-15);
}
