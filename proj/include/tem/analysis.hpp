#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tem/models.hpp"
#include "tem/scheme.hpp"

namespace tem {

// =============================================================================
// Statistics helpers
// =============================================================================

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual_ss = 0.0;
    /// OLS standard error of the slope (0 for two points).
    double slope_stderr = 0.0;
    std::size_t points = 0;
};

/// Least squares y = intercept + slope x. DomainError for fewer than 2 points
/// or constant x.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
    bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
    double width() const { return hi - lo; }
};

double sample_mean(std::span<const double> x);
/// Unbiased sample variance (0 for fewer than two samples).
double sample_variance(std::span<const double> x);

/// Percentile bootstrap interval of the mean.
Interval bootstrap_mean_ci(std::span<const double> samples, std::size_t resamples, std::uint64_t seed,
                           double level = 0.95);

/// Exact W_p between the empirical measures of two equal-size samples:
/// ((1/N) sum |a_(i) - b_(i)|^p)^(1/p) over order statistics. SizeMismatch
/// for unequal or empty samples; DomainError unless p is 1 or 2.
double empirical_wasserstein_1d(std::span<const double> a, std::span<const double> b, int p);

/// Percentile bootstrap interval of W_1. With `paired`, index i of a and b
/// is resampled together (samples driven by the same noise).
Interval bootstrap_w1_ci(std::span<const double> a, std::span<const double> b, bool paired, std::size_t resamples,
                         std::uint64_t seed, double level = 0.95);

// =============================================================================
// Test functionals of the segment norm
// =============================================================================

struct TestFunctional {
    std::string name;
    std::function<double(double norm)> apply;

    static TestFunctional norm();
    static TestFunctional cos_norm();
    /// min(norm, cap)
    static TestFunctional capped_norm(double cap = 2.0);
    /// sum_i coeffs[i] norm^i
    static TestFunctional polynomial(std::vector<double> coeffs);
};

struct EnsembleStats {
    std::string id;
    std::vector<double> times;
    std::size_t paths = 0;   ///< M
    std::size_t aborts = 0;
    std::vector<std::string> functionals;
    /// [functional][time]
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> variance;
    /// [time][path] samples of ||X_t||_r over non-aborted paths, path order.
    std::vector<std::vector<double>> norm_samples;
    /// Paths that went negative in some component at least once.
    std::size_t negative_paths = 0;
    /// Fraction of all steps after which some component was negative.
    double negative_step_fraction = 0.0;

    std::vector<double> functional_samples(std::size_t functional, std::size_t time,
                                           const std::vector<TestFunctional>& fns) const;
};

// =============================================================================
// Experiments
// =============================================================================

/// Knobs shared by the ensemble experiments.
struct RunOptions {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t bootstrap_resamples = 500;
};

struct RateFit {
    std::vector<int> levels;           ///< l values, so Delta = 1/l
    std::vector<double> rms_errors;
    double slope = 0.0;                ///< of log2(error) vs log2(Delta)
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual = 0.0;             ///< residual sum of squares of the log-log fit
    /// False when fewer than two levels had a positive error (slope is NaN).
    bool fitted = false;
};

/// Fits log2(error) against log2(1/l) over the levels with positive error.
/// DomainError for fewer than 2 levels, SizeMismatch for mismatched lengths.
RateFit fit_rate(std::vector<int> levels, std::vector<double> rms_errors);

struct RateStudy {
    RateFit fit;                       ///< from the configured error grid
    RateFit coarse_grid;               ///< node-subsampled errors, for comparison
    RateFit fine_grid;                 ///< coarse interpolant vs every reference node
    /// Per level, paths whose coarse head sat on the clip radius at T.
    std::vector<std::size_t> clipped_at_horizon;
    /// [level][path] squared errors on the configured grid.
    std::vector<std::vector<double>> squared_errors;
    std::vector<double> clip_radii;
    double reference_radius = 0.0;
};

struct RateSetup {
    int k = 12;
    std::vector<int> levels{8, 16, 32, 64};
    int l_ref = 128;
    int k_ref = 0;                     ///< 0 = k
    double horizon = 10.0;
    double fading_rate = 0.3;
    std::size_t paths = 200;
    TruncationPolicy policy = TruncationPolicy::classical();
    ErrorGrid grid = ErrorGrid::Fine;
};

/// sqrt(E ||X^l_T - X^ref_T||_r^2) per level, every coarse run sharing the
/// Brownian path of its reference run. ConfigError when l_ref is not a
/// multiple of every level or M < 2.
RateStudy rms_segment_error(const SfdeModel& model, const RateSetup& setup, const InitialData& xi,
                            const RunOptions& opt);

/// Exact solution x(t) for t <= horizon (t < 0 reproduces the initial datum).
using ExactSolution = std::function<void(double t, std::span<double> out)>;

/// Same study against a closed-form solution evaluated at the coarse nodes.
RateFit rms_error_vs_exact(const SfdeModel& model, const RateSetup& setup, const InitialData& xi,
                           const ExactSolution& exact, const RunOptions& opt);

/// Ensemble means of the test functionals at each record time, one
/// EnsembleStats per initial datum; initial datum i is driven by stream id i.
std::vector<EnsembleStats> ergodic_functional_scan(const SfdeModel& model, const SchemeConfig& cfg,
                                                   const std::vector<InitialData>& xis, std::size_t paths,
                                                   const std::vector<TestFunctional>& functionals,
                                                   const RunOptions& opt);

struct IpmProbeReport {
    std::vector<double> times;
    /// W_1 between the observable's empirical laws from xi and eta
    /// (independent ensembles).
    std::vector<double> w1;
    std::optional<LinearFit> w1_decay;         ///< log W_1 vs t over t >= 1
    /// [time][path] observable samples of the two independent ensembles.
    std::vector<std::vector<double>> xi_samples;
    std::vector<std::vector<double>> eta_samples;
    /// [path][time] squared coupled distances.
    std::vector<std::vector<double>> coupled_distance_sq;
    /// E ||X^xi_t - X^eta_t||_r^2 under synchronous coupling.
    std::vector<double> coupled_mean_square;
    std::optional<LinearFit> coupled_decay;    ///< log mean-square vs t over t >= 1
    Interval coupled_slope_ci;                 ///< path-bootstrap 95% interval of that slope
    std::optional<DissipativityReport> dissipativity;
    std::string refusal;                       ///< why decay is not certified, if so
    bool certified = false;
};

/// Runs two independent M-path ensembles from xi and eta and the
/// synchronous-coupling variant up to cfg.horizon. The observable is
/// cfg.observable when set, the segment norm otherwise. Decay is certified
/// only when the model passes check_dissipativity and the coupled slope's
/// upper 95% bound is negative.
IpmProbeReport ipm_convergence_probe(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                                     const InitialData& eta, std::size_t paths, const RunOptions& opt);

struct DeltaRefinementReport {
    std::vector<int> levels;
    int finest = 0;
    double t_star = 0.0;
    std::vector<double> w1;          ///< W_1(level, finest) of the norm at t_star
    std::vector<Interval> ci;
    /// [level][path] norms at t_star, the finest level last.
    std::vector<std::vector<double>> samples;
    bool insufficient_samples = false;
    bool nonincreasing = false;      ///< within bootstrap bands
};

/// Long-run laws of ||X_{t_star}||_r at each level against the finest level,
/// all levels sharing each path's Brownian motion.
DeltaRefinementReport delta_refinement_probe(const SfdeModel& model, int k, std::vector<int> levels, int finest,
                                             const InitialData& xi, std::size_t paths, double t_star,
                                             const TruncationPolicy& policy, double fading_rate,
                                             const RunOptions& opt);

struct BlowupArm {
    int l = 0;
    bool truncated = false;
    double clip_radius = 0.0;
    std::size_t paths = 0;
    std::size_t exceeded = 0;   ///< |X|^2 passed the ceiling (or went non-finite)
    std::size_t aborted = 0;    ///< non-finite updates
    std::vector<double> times;
    /// Mean |X(t)|^2 over paths still below the ceiling at t.
    std::vector<double> mean_square;
    double max_mean_square = 0.0;
    /// Per path, the time |X|^2 first passed the ceiling (NaN if never; the
    /// step time for non-finite aborts).
    std::vector<double> exceed_times;

    double exceed_fraction() const { return paths ? static_cast<double>(exceeded) / paths : 0.0; }
};

struct BlowupReport {
    BlowupArm em;
    std::vector<BlowupArm> tem;
    double ceiling = 0.0;
};

struct BlowupSetup {
    int k = 12;
    int l_em = 2;
    std::vector<int> tem_levels{2, 4, 8, 16};
    double horizon = 10.0;
    double fading_rate = 0.3;
    double ceiling = 1e6;
    std::size_t paths = 100;
    TruncationPolicy policy = TruncationPolicy::classical();
};

/// Plain Euler-Maruyama against the truncated scheme under identical noise.
/// Paths that pass the ceiling or go non-finite are counted, not errors.
BlowupReport em_blowup_demo(const SfdeModel& model, const BlowupSetup& setup, const InitialData& xi,
                            const RunOptions& opt);

}  // namespace tem
