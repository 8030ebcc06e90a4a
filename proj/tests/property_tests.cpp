#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "tem/analysis.hpp"
#include "tem/experiment.hpp"
#include "tem/memory_measure.hpp"
#include "tem/models.hpp"
#include "tem/noise.hpp"
#include "tem/scheme.hpp"
#include "tem/segment.hpp"
#include "tem/truncation.hpp"

using namespace tem;

namespace {

MemoryMeasure random_measure(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> rate(0.5, 6.0);
    const int n = 1 + static_cast<int>(rng() % 3);
    std::vector<double> w(n + 1);
    double total = 0.0;
    for (auto& x : w) {
        x = unit(rng);
        total += x;
    }
    std::vector<ExponentialComponent> comps;
    double used = 0.0;
    for (int i = 0; i < n; ++i) {
        comps.push_back({w[i] / total, rate(rng)});
        used += w[i] / total;
    }
    return MemoryMeasure(comps, 1.0 - used);
}

Segment random_segment(std::mt19937_64& rng, std::size_t dim, int k, int l) {
    std::normal_distribution<double> z;
    Segment s(dim, k, l, 0.3);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (auto& x : v) x = z(rng);
        s.set_node(i, v);
    }
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST(MomentIdentity, UnitMassAtZeroExponent) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const MemoryMeasure m = random_measure(rng);
        EXPECT_NEAR(mu_moment(m, 0.0), 1.0, 1e-12);
    }
}

TEST(MomentIdentity, ClosedFormMatchesQuadrature) {
    std::mt19937_64 rng(12);
    boost::math::quadrature::exp_sinh<double> integrator;
    for (int trial = 0; trial < 50; ++trial) {
        const MemoryMeasure m = random_measure(rng);
        const double a = 0.9 * m.critical_rate() * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        // int_{-inf}^0 e^{-a u} mu(du) with s = -u.
        double quad = m.atom_at_zero();
        for (const auto& c : m.components()) {
            quad += integrator.integrate(
                [&](double s) { return c.weight * c.rate * std::exp(-(c.rate - a) * s); }, 1e-14);
        }
        EXPECT_NEAR(mu_moment(m, a), quad, 1e-9 * std::max(1.0, quad)) << m.describe() << " a=" << a;
    }
}

TEST(SegmentIntegration, IsLinear) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 50; ++trial) {
        const MemoryMeasure m = random_measure(rng);
        const std::size_t dim = 1 + trial % 3;
        const Segment s1 = random_segment(rng, dim, 6, 8);
        const Segment s2 = random_segment(rng, dim, 6, 8);
        const double a = z(rng), b = z(rng);
        Segment combo(dim, 6, 8, 0.3);
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < combo.size(); ++i) {
            for (std::size_t c = 0; c < dim; ++c) v[c] = a * s1.node(i)[c] + b * s2.node(i)[c];
            combo.set_node(i, v);
        }
        const auto i1 = integrate_segment(m, s1);
        const auto i2 = integrate_segment(m, s2);
        const auto ic = integrate_segment(m, combo);
        for (std::size_t c = 0; c < dim; ++c) {
            const double expect = a * i1[c] + b * i2[c];
            EXPECT_NEAR(ic[c], expect, 1e-12 * std::max(1.0, std::abs(expect)));
        }
    }
}

TEST(Truncation, IdempotentLipschitzAndPassThrough) {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> scale(0.0, 5.0);
    const TruncationPolicy policy = preset_policy("cubic-example1");
    for (int l : {1, 2, 8, 64, 1024}) {
        const double radius = policy.clip_radius(l);
        for (int trial = 0; trial < 2000; ++trial) {
            const std::size_t n = 1 + trial % 4;
            std::vector<double> x(n), y(n);
            const double sx = scale(rng), sy = scale(rng);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = sx * z(rng);
                y[i] = sy * z(rng);
            }
            const auto px = pi_delta(x, radius);
            const auto py = pi_delta(y, radius);
            EXPECT_EQ(pi_delta(px, radius), px);
            double d_in = 0.0, d_out = 0.0, norm_x = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                d_in += (x[i] - y[i]) * (x[i] - y[i]);
                d_out += (px[i] - py[i]) * (px[i] - py[i]);
                norm_x += x[i] * x[i];
            }
            EXPECT_LE(std::sqrt(d_out), std::sqrt(d_in) * (1.0 + 1e-14) + 1e-300);
            if (std::sqrt(norm_x) <= radius) {
                for (std::size_t i = 0; i < n; ++i) {
                    EXPECT_EQ(std::memcmp(&px[i], &x[i], sizeof(double)), 0);
                }
            }
        }
    }
}

TEST(Scheme, ConstantPolicyIsBitwiseEulerMaruyama) {
    const CubicScalarModel model(CubicScalarModel::Params{});
    SchemeConfig cfg;
    cfg.k = 3;
    cfg.l = 8;
    cfg.horizon = 5.0;
    cfg.policy = TruncationPolicy::classical();
    cfg.record_times = SchemeConfig::uniform_times(cfg.horizon, 1.0 / cfg.l);
    const InitialData xi({{InitialComponent::Family::Exponential, 0.4, 0.2}});
    const NoiseStream stream(7, 3, 1, cfg.l);
    const PathRecord rec = simulate_path(model, cfg, xi, stream);

    // Plain EM on a history vector rebuilt node by node every step.
    Segment seg = from_initial(xi, cfg.k, cfg.l, cfg.fading_rate);
    std::vector<double> history(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) history[i] = seg.node(i)[0];
    const double dt = 1.0 / cfg.l;
    std::vector<double> dB(1);
    ASSERT_EQ(rec.snapshots.size(), static_cast<std::size_t>(cfg.horizon * cfg.l) + 1);
    for (std::int64_t j = 0; j < cfg.steps(); ++j) {
        Segment now(1, cfg.k, cfg.l, cfg.fading_rate);
        for (std::size_t i = 0; i < history.size(); ++i) now.set_node(i, std::span<const double>(&history[i], 1));
        stream.increment(j, cfg.l, dB);
        double y = history.back() + cubic_drift(model, now) * dt;
        y += cubic_diffusion(model, now) * dB[0];
        history.erase(history.begin());
        history.push_back(y);
        const double got = rec.snapshots[j + 1].head[0];
        ASSERT_EQ(std::memcmp(&got, &y, sizeof(double)), 0) << "step " << j;
    }
}

TEST(RingBuffer, LengthConstantOverMillionSteps) {
    Segment s(1, 2, 4, 0.3);
    const std::size_t n = s.size();
    for (int step = 1; step <= 1000000; ++step) {
        const double v = step;
        s.shift_append(std::span<const double>(&v, 1));
        if (step % 99991 == 0) {
            ASSERT_EQ(s.size(), n);
            EXPECT_EQ(s.newest()[0], v);
            EXPECT_EQ(s.oldest()[0], v - static_cast<double>(n - 1));
        }
    }
    EXPECT_EQ(s.size(), n);
    EXPECT_EQ(s.newest()[0], 1000000.0);
    EXPECT_EQ(s.oldest()[0], 1000000.0 - static_cast<double>(n - 1));
}

TEST(Wasserstein, MetricAxioms) {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<double> a(n), b(n), c(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = z(rng);
            b[i] = 2.0 * z(rng) + 1.0;
            c[i] = z(rng) - 0.5;
        }
        for (int p : {1, 2}) {
            const double ab = empirical_wasserstein_1d(a, b, p);
            const double ba = empirical_wasserstein_1d(b, a, p);
            const double ac = empirical_wasserstein_1d(a, c, p);
            const double cb = empirical_wasserstein_1d(c, b, p);
            EXPECT_GE(ab, 0.0);
            EXPECT_NEAR(ab, ba, 1e-10);
            EXPECT_LE(ab, ac + cb + 1e-10);
            auto shuffled = a;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            EXPECT_NEAR(empirical_wasserstein_1d(a, shuffled, p), 0.0, 1e-10);
            const double k = z(rng) * 3.0;
            std::vector<double> ka(n), kb(n);
            for (std::size_t i = 0; i < n; ++i) {
                ka[i] = k * a[i];
                kb[i] = k * b[i];
            }
            EXPECT_NEAR(empirical_wasserstein_1d(ka, kb, p), std::abs(k) * ab, 1e-10 * std::max(1.0, std::abs(k) * ab));
        }
    }
}

TEST(Determinism, CsvIdenticalAcrossWorkerCounts) {
    const auto root = std::filesystem::temp_directory_path() / ("tem_workers_" + std::to_string(::getpid()));
    const std::vector<std::string> configs = {
        "schema = temsim-config/1\nexperiment = ergodic-scan\nmodel = cubic-example1\nk = 3\nl = 8\nT = 2\n"
        "record_every = 1/2\npaths = 37\nseed = 5\nbootstrap = 50\n",
        "schema = temsim-config/1\nexperiment = rate\nmodel = cubic-example1\nk = 2\nT = 1\nl_list = 2, 4\n"
        "l_ref = 8\npaths = 19\nseed = 5\n",
        "schema = temsim-config/1\nexperiment = ipm-probe\nmodel = cubic-example1\nk = 2\nl = 4\nT = 2\n"
        "record_every = 1/2\npaths = 23\nseed = 5\nbootstrap = 40\n",
    };
    for (std::size_t c = 0; c < configs.size(); ++c) {
        ValidatedConfig vc = validate(parse_config_text(configs[c]));
        std::vector<std::string> outputs;
        for (unsigned w : {1u, 2u, 8u}) {
            vc.config.workers = w;
            const auto dir = root / (std::to_string(c) + "_w" + std::to_string(w));
            ASSERT_EQ(run(vc, dir, false).status, 0);
            outputs.push_back(slurp(dir / "samples.csv") + slurp(dir / "summary.csv") + slurp(dir / "manifest.txt"));
        }
        EXPECT_FALSE(outputs[0].empty());
        EXPECT_EQ(outputs[0], outputs[1]) << configs[c];
        EXPECT_EQ(outputs[0], outputs[2]) << configs[c];
    }
    std::filesystem::remove_all(root);
}
