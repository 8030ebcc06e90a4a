#include "tem/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tem/ensemble.hpp"
#include "tem/errors.hpp"

namespace tem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Salts for the bootstrap generators, so each use draws its own stream.
enum Salt : std::uint64_t {
    kSaltMeanCi = 0x6d65616e,
    kSaltW1Ci = 0x7731,
    kSaltSlopeCi = 0x736c6f70,
    kSaltRefinement = 0x72656669,
};

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) {
        return kNaN;
    }
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

Interval percentile_interval(std::vector<double> stats, double level) {
    std::sort(stats.begin(), stats.end());
    const double tail = (1.0 - level) / 2.0;
    return {quantile_sorted(stats, tail), quantile_sorted(stats, 1.0 - tail)};
}

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw DomainError("confidence level must lie in (0, 1)");
    }
}

std::vector<std::size_t> draw_indices(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) {
        i = pick(rng);
    }
    return idx;
}

std::vector<double> gather(std::span<const double> x, const std::vector<std::size_t>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out[i] = x[idx[i]];
    }
    return out;
}

double squared_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return s;
}

int lcm_of(const std::vector<int>& values) {
    long long acc = 1;
    for (int v : values) {
        if (v <= 0) {
            throw ConfigError("resolutions must be positive");
        }
        acc = std::lcm(acc, static_cast<long long>(v));
        if (acc > std::numeric_limits<int>::max()) {
            throw ConfigError("common noise resolution overflows");
        }
    }
    return static_cast<int>(acc);
}

// Fit of log values against t over t >= 1 where the value is positive.
std::optional<LinearFit> log_decay_fit(const std::vector<double>& times, const std::vector<double>& values) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] >= 1.0 && values[i] > 0.0 && std::isfinite(values[i])) {
            x.push_back(times[i]);
            y.push_back(std::log(values[i]));
        }
    }
    if (x.size() < 2) {
        return std::nullopt;
    }
    return fit_line(x, y);
}

}  // namespace

// =============================================================================
// Statistics helpers
// =============================================================================

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw SizeMismatch("fit_line needs equally many x and y values");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        throw DomainError("fit_line needs at least two points");
    }
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw DomainError("fit_line needs at least two distinct x values");
    }
    LinearFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (fit.intercept + fit.slope * x[i]);
        fit.residual_ss += e * e;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - fit.residual_ss / syy : 1.0;
    if (n > 2) {
        fit.slope_stderr = std::sqrt(fit.residual_ss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

double sample_mean(std::span<const double> x) {
    if (x.empty()) {
        return kNaN;
    }
    double s = 0.0;
    for (double v : x) {
        s += v;
    }
    return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
    if (x.size() < 2) {
        return 0.0;
    }
    const double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) {
        s += (v - m) * (v - m);
    }
    return s / static_cast<double>(x.size() - 1);
}

Interval bootstrap_mean_ci(std::span<const double> samples, std::size_t resamples, std::uint64_t seed, double level) {
    check_level(level);
    if (samples.empty()) {
        throw SizeMismatch("bootstrap of an empty sample");
    }
    if (resamples == 0) {
        throw DomainError("bootstrap needs at least one resample");
    }
    std::mt19937_64 rng(mix_seed(seed, kSaltMeanCi));
    std::vector<double> stats(resamples);
    for (auto& st : stats) {
        st = sample_mean(gather(samples, draw_indices(rng, samples.size())));
    }
    return percentile_interval(std::move(stats), level);
}

double empirical_wasserstein_1d(std::span<const double> a, std::span<const double> b, int p) {
    if (p != 1 && p != 2) {
        throw DomainError("empirical_wasserstein_1d supports p = 1 or p = 2");
    }
    if (a.size() != b.size() || a.empty()) {
        throw SizeMismatch("empirical_wasserstein_1d needs two non-empty samples of equal size (got " +
                           std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
    }
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = std::abs(sa[i] - sb[i]);
        s += p == 1 ? d : d * d;
    }
    s /= static_cast<double>(sa.size());
    return p == 1 ? s : std::sqrt(s);
}

Interval bootstrap_w1_ci(std::span<const double> a, std::span<const double> b, bool paired, std::size_t resamples,
                         std::uint64_t seed, double level) {
    check_level(level);
    if (a.size() != b.size() || a.empty()) {
        throw SizeMismatch("bootstrap_w1_ci needs two non-empty samples of equal size");
    }
    if (resamples == 0) {
        throw DomainError("bootstrap needs at least one resample");
    }
    std::mt19937_64 rng(mix_seed(seed, kSaltW1Ci));
    std::vector<double> stats(resamples);
    for (auto& st : stats) {
        const auto ia = draw_indices(rng, a.size());
        const auto ib = paired ? ia : draw_indices(rng, b.size());
        st = empirical_wasserstein_1d(gather(a, ia), gather(b, ib), 1);
    }
    return percentile_interval(std::move(stats), level);
}

// =============================================================================
// Test functionals
// =============================================================================

TestFunctional TestFunctional::norm() {
    return {"norm", [](double x) { return x; }};
}

TestFunctional TestFunctional::cos_norm() {
    return {"cos_norm", [](double x) { return std::cos(x); }};
}

TestFunctional TestFunctional::capped_norm(double cap) {
    if (!(cap > 0.0)) {
        throw DomainError("cap must be positive");
    }
    std::string name = cap == 2.0 ? "norm_min_2" : "norm_min_" + std::to_string(cap);
    return {std::move(name), [cap](double x) { return std::min(x, cap); }};
}

TestFunctional TestFunctional::polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) {
        throw DomainError("polynomial functional needs coefficients");
    }
    return {"poly_norm", [c = std::move(coeffs)](double x) {
                double acc = 0.0;
                for (auto it = c.rbegin(); it != c.rend(); ++it) {
                    acc = acc * x + *it;
                }
                return acc;
            }};
}

std::vector<double> EnsembleStats::functional_samples(std::size_t functional, std::size_t time,
                                                      const std::vector<TestFunctional>& fns) const {
    if (functional >= fns.size() || time >= norm_samples.size()) {
        throw DomainError("functional or time index out of range");
    }
    std::vector<double> out;
    out.reserve(norm_samples[time].size());
    for (double n : norm_samples[time]) {
        out.push_back(fns[functional].apply(n));
    }
    return out;
}

// =============================================================================
// Strong error
// =============================================================================

RateFit fit_rate(std::vector<int> levels, std::vector<double> rms_errors) {
    if (levels.size() != rms_errors.size()) {
        throw SizeMismatch("fit_rate needs one error per level");
    }
    if (levels.size() < 2) {
        throw DomainError("fit_rate needs at least two levels");
    }
    RateFit out;
    out.levels = std::move(levels);
    out.rms_errors = std::move(rms_errors);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < out.levels.size(); ++i) {
        if (out.levels[i] <= 0) {
            throw DomainError("levels must be positive");
        }
        if (out.rms_errors[i] > 0.0 && std::isfinite(out.rms_errors[i])) {
            x.push_back(-std::log2(static_cast<double>(out.levels[i])));
            y.push_back(std::log2(out.rms_errors[i]));
        }
    }
    if (x.size() < 2) {
        out.slope = out.intercept = out.r_squared = out.residual = kNaN;
        return out;
    }
    const LinearFit f = fit_line(x, y);
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.r_squared = f.r_squared;
    out.residual = f.residual_ss;
    out.fitted = true;
    return out;
}

RateStudy rms_segment_error(const SfdeModel& model, const RateSetup& setup, const InitialData& xi,
                            const RunOptions& opt) {
    if (setup.paths < 2) {
        throw ConfigError("rate study needs M >= 2 paths");
    }
    if (setup.levels.empty()) {
        throw ConfigError("rate study needs at least one level");
    }
    for (int l : setup.levels) {
        if (l <= 0 || setup.l_ref % l != 0) {
            throw ConfigError("l_ref = " + std::to_string(setup.l_ref) + " is not a multiple of l = " +
                              std::to_string(l));
        }
    }
    const int k_ref = setup.k_ref == 0 ? setup.k : setup.k_ref;
    if (k_ref < setup.k) {
        throw ConfigError("reference memory window k_ref must be at least k");
    }

    auto config_for = [&](int k, int l) {
        SchemeConfig c;
        c.k = k;
        c.l = l;
        c.horizon = setup.horizon;
        c.fading_rate = setup.fading_rate;
        c.policy = setup.policy;
        c.record_times = {setup.horizon};
        c.keep_segments = true;
        c.validate();
        return c;
    };
    const SchemeConfig ref_cfg = config_for(k_ref, setup.l_ref);
    std::vector<SchemeConfig> level_cfg;
    for (int l : setup.levels) {
        level_cfg.push_back(config_for(setup.k, l));
    }

    struct PathErrors {
        std::vector<double> coarse_sq;
        std::vector<double> fine_sq;
        std::vector<char> clipped;
    };
    const std::size_t nl = setup.levels.size();
    const auto per_path = parallel_map<PathErrors>(setup.paths, opt.workers, [&](std::size_t p) {
        const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), setup.l_ref);
        const PathRecord ref = simulate_path(model, ref_cfg, xi, stream);
        const Segment& fine = *ref.snapshots.back().segment;
        PathErrors e{std::vector<double>(nl), std::vector<double>(nl), std::vector<char>(nl)};
        for (std::size_t i = 0; i < nl; ++i) {
            const PathRecord rec = simulate_path(model, level_cfg[i], xi, stream);
            const Segment& coarse = *rec.snapshots.back().segment;
            const double ec = segment_error(coarse, fine, ErrorGrid::Coarse);
            const double ef = segment_error(coarse, fine, ErrorGrid::Fine);
            e.coarse_sq[i] = ec * ec;
            e.fine_sq[i] = ef * ef;
            e.clipped[i] = std::sqrt(squared_norm(coarse.newest())) >= rec.clip_radius * (1.0 - 1e-12);
        }
        return e;
    });

    RateStudy out;
    out.reference_radius = setup.policy.clip_radius(setup.l_ref);
    out.clipped_at_horizon.assign(nl, 0);
    out.squared_errors.assign(nl, std::vector<double>(setup.paths));
    std::vector<double> coarse_rms(nl), fine_rms(nl);
    for (std::size_t i = 0; i < nl; ++i) {
        out.clip_radii.push_back(setup.policy.clip_radius(setup.levels[i]));
        double sc = 0.0, sf = 0.0;
        for (std::size_t p = 0; p < setup.paths; ++p) {
            sc += per_path[p].coarse_sq[i];
            sf += per_path[p].fine_sq[i];
            out.clipped_at_horizon[i] += per_path[p].clipped[i] ? 1 : 0;
            out.squared_errors[i][p] =
                setup.grid == ErrorGrid::Fine ? per_path[p].fine_sq[i] : per_path[p].coarse_sq[i];
        }
        coarse_rms[i] = std::sqrt(sc / static_cast<double>(setup.paths));
        fine_rms[i] = std::sqrt(sf / static_cast<double>(setup.paths));
    }
    if (nl >= 2) {
        out.coarse_grid = fit_rate(setup.levels, coarse_rms);
        out.fine_grid = fit_rate(setup.levels, fine_rms);
    } else {
        out.coarse_grid.levels = out.fine_grid.levels = setup.levels;
        out.coarse_grid.rms_errors = coarse_rms;
        out.fine_grid.rms_errors = fine_rms;
        out.coarse_grid.slope = out.fine_grid.slope = kNaN;
    }
    out.fit = setup.grid == ErrorGrid::Fine ? out.fine_grid : out.coarse_grid;
    return out;
}

RateFit rms_error_vs_exact(const SfdeModel& model, const RateSetup& setup, const InitialData& xi,
                           const ExactSolution& exact, const RunOptions& opt) {
    if (setup.paths < 1) {
        throw ConfigError("need at least one path");
    }
    const int base = lcm_of(setup.levels);
    const std::size_t n = model.dim();
    std::vector<double> rms;
    for (int l : setup.levels) {
        SchemeConfig c;
        c.k = setup.k;
        c.l = l;
        c.horizon = setup.horizon;
        c.fading_rate = setup.fading_rate;
        c.policy = setup.policy;
        c.record_times = {setup.horizon};
        c.keep_segments = true;
        c.validate();
        const auto sq = parallel_map<double>(setup.paths, opt.workers, [&](std::size_t p) {
            const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), base);
            const PathRecord rec = simulate_path(model, c, xi, stream);
            const Segment& s = *rec.snapshots.back().segment;
            std::vector<double> ref(n);
            double worst = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double u = s.node_time(i);
                exact(setup.horizon + u, ref);
                const auto x = s.node(i);
                double d2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    d2 += (x[j] - ref[j]) * (x[j] - ref[j]);
                }
                worst = std::max(worst, std::exp(setup.fading_rate * u) * std::sqrt(d2));
            }
            return worst * worst;
        });
        rms.push_back(std::sqrt(sample_mean(sq)));
    }
    return fit_rate(setup.levels, std::move(rms));
}

// =============================================================================
// Ergodicity
// =============================================================================

std::vector<EnsembleStats> ergodic_functional_scan(const SfdeModel& model, const SchemeConfig& cfg,
                                                   const std::vector<InitialData>& xis, std::size_t paths,
                                                   const std::vector<TestFunctional>& functionals,
                                                   const RunOptions& opt) {
    cfg.validate();
    if (paths == 0) {
        throw ConfigError("ensemble needs at least one path");
    }
    const auto steps = cfg.record_steps();
    std::vector<double> times;
    for (auto s : steps) {
        times.push_back(static_cast<double>(s) / cfg.l);
    }
    std::vector<EnsembleStats> out;
    for (std::size_t x = 0; x < xis.size(); ++x) {
        const auto records = parallel_map<PathRecord>(paths, opt.workers, [&](std::size_t p) {
            const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), cfg.l,
                                     static_cast<std::uint32_t>(x));
            try {
                PathRecord r = simulate_path(model, cfg, xis[x], stream);
                if (r.exceeded_ceiling) {
                    r.aborted = true;
                    r.abort_reason = "exceeded ceiling";
                }
                return r;
            } catch (const PathAborted& e) {
                PathRecord r;
                r.path_index = static_cast<std::uint32_t>(p);
                r.aborted = true;
                r.abort_reason = e.what();
                return r;
            }
        });

        EnsembleStats st;
        st.id = "xi" + std::to_string(x + 1);
        st.times = times;
        st.paths = paths;
        for (const auto& f : functionals) {
            st.functionals.push_back(f.name);
        }
        st.norm_samples.assign(times.size(), {});
        std::int64_t neg_steps = 0;
        std::int64_t all_steps = 0;
        for (const auto& r : records) {
            if (r.aborted) {
                ++st.aborts;
                continue;
            }
            for (std::size_t t = 0; t < times.size(); ++t) {
                st.norm_samples[t].push_back(r.snapshots[t].norm);
            }
            neg_steps += r.negative_steps;
            all_steps += r.steps_taken;
            if (r.negative_steps > 0) {
                ++st.negative_paths;
            }
        }
        st.negative_step_fraction = all_steps > 0 ? static_cast<double>(neg_steps) / all_steps : 0.0;
        st.mean.assign(functionals.size(), std::vector<double>(times.size()));
        st.variance.assign(functionals.size(), std::vector<double>(times.size()));
        for (std::size_t f = 0; f < functionals.size(); ++f) {
            for (std::size_t t = 0; t < times.size(); ++t) {
                const auto v = st.functional_samples(f, t, functionals);
                st.mean[f][t] = sample_mean(v);
                st.variance[f][t] = sample_variance(v);
            }
        }
        out.push_back(std::move(st));
    }
    return out;
}

IpmProbeReport ipm_convergence_probe(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                                     const InitialData& eta, std::size_t paths, const RunOptions& opt) {
    cfg.validate();
    if (paths < 2) {
        throw ConfigError("ipm probe needs M >= 2 paths");
    }
    IpmProbeReport rep;
    for (auto s : cfg.record_steps()) {
        rep.times.push_back(static_cast<double>(s) / cfg.l);
    }
    const std::size_t nt = rep.times.size();
    const bool use_observable = static_cast<bool>(cfg.observable);
    auto observe = [&](const PathRecord& r) {
        std::vector<double> v(nt);
        for (std::size_t t = 0; t < nt; ++t) {
            v[t] = use_observable ? r.snapshots[t].observable : r.snapshots[t].norm;
        }
        return v;
    };

    // Independent ensembles: stream 0 drives xi, stream 1 drives eta.
    auto ensemble = [&](const InitialData& init, std::uint32_t stream_id) {
        return parallel_map<std::vector<double>>(paths, opt.workers, [&](std::size_t p) {
            const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), cfg.l, stream_id);
            return observe(simulate_path(model, cfg, init, stream));
        });
    };
    const auto a = ensemble(xi, 0);
    const auto b = ensemble(eta, 1);
    for (std::size_t t = 0; t < nt; ++t) {
        std::vector<double> va(paths), vb(paths);
        for (std::size_t p = 0; p < paths; ++p) {
            va[p] = a[p][t];
            vb[p] = b[p][t];
        }
        rep.w1.push_back(empirical_wasserstein_1d(va, vb, 1));
        rep.xi_samples.push_back(std::move(va));
        rep.eta_samples.push_back(std::move(vb));
    }
    rep.w1_decay = log_decay_fit(rep.times, rep.w1);

    // Synchronous coupling on stream 2.
    const auto dist = parallel_map<std::vector<double>>(paths, opt.workers, [&](std::size_t p) {
        const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), cfg.l, 2);
        auto d = simulate_coupled(model, cfg, xi, eta, stream).distance;
        for (auto& v : d) {
            v *= v;
        }
        return d;
    });
    auto mean_square = [&](const std::vector<std::size_t>* idx) {
        std::vector<double> ms(nt, 0.0);
        for (std::size_t i = 0; i < paths; ++i) {
            const auto& d = dist[idx ? (*idx)[i] : i];
            for (std::size_t t = 0; t < nt; ++t) {
                ms[t] += d[t];
            }
        }
        for (auto& v : ms) {
            v /= static_cast<double>(paths);
        }
        return ms;
    };
    rep.coupled_mean_square = mean_square(nullptr);
    rep.coupled_distance_sq = dist;
    rep.coupled_decay = log_decay_fit(rep.times, rep.coupled_mean_square);

    if (rep.coupled_decay) {
        std::mt19937_64 rng(mix_seed(opt.seed, kSaltSlopeCi));
        std::vector<double> slopes;
        slopes.reserve(opt.bootstrap_resamples);
        for (std::size_t b_i = 0; b_i < opt.bootstrap_resamples; ++b_i) {
            const auto idx = draw_indices(rng, paths);
            const auto fit = log_decay_fit(rep.times, mean_square(&idx));
            if (fit) {
                slopes.push_back(fit->slope);
            }
        }
        if (!slopes.empty()) {
            rep.coupled_slope_ci = percentile_interval(std::move(slopes), 0.95);
        } else {
            rep.coupled_slope_ci = {kNaN, kNaN};
        }
    } else {
        rep.coupled_slope_ci = {kNaN, kNaN};
    }

    try {
        rep.dissipativity = check_dissipativity(model, cfg.fading_rate);
    } catch (const MissingMetadata& e) {
        rep.refusal = std::string("no dissipativity constants: ") + e.what();
        return rep;
    }
    if (!rep.dissipativity->passed) {
        rep.refusal = "dissipativity check failed: " + rep.dissipativity->summary();
    } else if (!rep.coupled_decay) {
        rep.refusal = "coupled distance has fewer than two positive values at t >= 1";
    } else if (!(rep.coupled_slope_ci.hi < 0.0)) {
        rep.refusal = "coupled decay slope is not negative at 95% confidence";
    } else {
        rep.certified = true;
    }
    return rep;
}

DeltaRefinementReport delta_refinement_probe(const SfdeModel& model, int k, std::vector<int> levels, int finest,
                                             const InitialData& xi, std::size_t paths, double t_star,
                                             const TruncationPolicy& policy, double fading_rate,
                                             const RunOptions& opt) {
    if (paths == 0) {
        throw ConfigError("delta refinement needs at least one path");
    }
    std::sort(levels.begin(), levels.end());
    for (int l : levels) {
        if (l <= 0 || finest % l != 0) {
            throw ConfigError("finest l = " + std::to_string(finest) + " is not a multiple of l = " +
                              std::to_string(l));
        }
    }
    DeltaRefinementReport rep;
    rep.levels = levels;
    rep.finest = finest;
    rep.t_star = t_star;
    rep.insufficient_samples = paths < 2;

    std::vector<int> all = levels;
    all.push_back(finest);
    std::vector<SchemeConfig> cfgs;
    for (int l : all) {
        SchemeConfig c;
        c.k = k;
        c.l = l;
        c.horizon = t_star;
        c.fading_rate = fading_rate;
        c.policy = policy;
        c.record_times = {t_star};
        c.validate();
        cfgs.push_back(std::move(c));
    }
    // samples[path][level], with the finest level last.
    const auto samples = parallel_map<std::vector<double>>(paths, opt.workers, [&](std::size_t p) {
        const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), finest);
        std::vector<double> v;
        for (const auto& c : cfgs) {
            v.push_back(simulate_path(model, c, xi, stream).snapshots.back().norm);
        }
        return v;
    });
    auto column = [&](std::size_t j) {
        std::vector<double> c(paths);
        for (std::size_t p = 0; p < paths; ++p) {
            c[p] = samples[p][j];
        }
        return c;
    };
    for (std::size_t j = 0; j <= levels.size(); ++j) {
        rep.samples.push_back(column(j));
    }
    const auto& ref = rep.samples.back();
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto& col = rep.samples[j];
        const double w = empirical_wasserstein_1d(col, ref, 1);
        rep.w1.push_back(w);
        if (rep.insufficient_samples) {
            rep.ci.push_back({kNaN, kNaN});
        } else {
            rep.ci.push_back(bootstrap_w1_ci(col, ref, true, opt.bootstrap_resamples,
                                             mix_seed(opt.seed, kSaltRefinement + j)));
        }
    }
    if (!rep.insufficient_samples) {
        rep.nonincreasing = true;
        for (std::size_t j = 1; j < levels.size(); ++j) {
            // A finer level may not be significantly farther from the reference.
            if (rep.ci[j].lo > rep.ci[j - 1].hi) {
                rep.nonincreasing = false;
            }
        }
    }
    return rep;
}

// =============================================================================
// EM blow-up
// =============================================================================

BlowupReport em_blowup_demo(const SfdeModel& model, const BlowupSetup& setup, const InitialData& xi,
                            const RunOptions& opt) {
    if (setup.paths == 0) {
        throw ConfigError("blow-up demo needs at least one path");
    }
    std::vector<int> all = setup.tem_levels;
    all.push_back(setup.l_em);
    const int base = lcm_of(all);
    const double every = 1.0 / setup.l_em;

    auto run_arm = [&](int l, const TruncationPolicy& policy, bool truncated) {
        SchemeConfig c;
        c.k = setup.k;
        c.l = l;
        c.horizon = setup.horizon;
        c.fading_rate = setup.fading_rate;
        c.policy = policy;
        c.record_times = SchemeConfig::uniform_times(setup.horizon, every);
        c.ceiling = setup.ceiling;
        c.validate();

        struct Outcome {
            std::vector<double> sq;  // |X(t)|^2 per record time, NaN once gone
            bool exceeded = false;
            bool aborted = false;
            double exceed_time = kNaN;
        };
        const std::size_t nt = c.record_times.size();
        const auto outcomes = parallel_map<Outcome>(setup.paths, opt.workers, [&](std::size_t p) {
            const NoiseStream stream(opt.seed, static_cast<std::uint32_t>(p), model.noise_dim(), base);
            Outcome o{std::vector<double>(nt, kNaN)};
            try {
                const PathRecord r = simulate_path(model, c, xi, stream);
                for (std::size_t t = 0; t < r.snapshots.size(); ++t) {
                    const double v = squared_norm(r.snapshots[t].head);
                    if (v <= setup.ceiling) {
                        o.sq[t] = v;
                    }
                }
                o.exceeded = r.exceeded_ceiling;
                if (o.exceeded) o.exceed_time = r.exceed_time;
            } catch (const PathAborted& e) {
                o.exceeded = true;
                o.aborted = true;
                o.exceed_time = e.time();
            }
            return o;
        });

        BlowupArm arm;
        arm.l = l;
        arm.truncated = truncated;
        arm.clip_radius = policy.clip_radius(l);
        arm.paths = setup.paths;
        arm.times = c.record_times;
        arm.mean_square.assign(nt, kNaN);
        for (const auto& o : outcomes) {
            arm.exceeded += o.exceeded ? 1 : 0;
            arm.aborted += o.aborted ? 1 : 0;
            arm.exceed_times.push_back(o.exceed_time);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            double s = 0.0;
            std::size_t n = 0;
            for (const auto& o : outcomes) {
                if (!std::isnan(o.sq[t])) {
                    s += o.sq[t];
                    ++n;
                }
            }
            if (n > 0) {
                arm.mean_square[t] = s / static_cast<double>(n);
                arm.max_mean_square = std::max(arm.max_mean_square, arm.mean_square[t]);
            }
        }
        return arm;
    };

    BlowupReport rep;
    rep.ceiling = setup.ceiling;
    rep.em = run_arm(setup.l_em, TruncationPolicy::classical(), false);
    for (int l : setup.tem_levels) {
        rep.tem.push_back(run_arm(l, setup.policy, setup.policy.clips()));
    }
    return rep;
}

}  // namespace tem
