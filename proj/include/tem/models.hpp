#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tem/memory_measure.hpp"
#include "tem/segment.hpp"
#include "tem/truncation.hpp"

namespace tem {

/// What the coefficients of a model are allowed to see: the current value
/// phi(0) and the integrals of phi against the model's declared measures.
struct SegmentFeatures {
    std::span<const double> current;
    /// Measure-major: integrals[m * dim + c] = int phi_c d mu_m.
    std::span<const double> integrals;

    std::span<const double> integral(std::size_t measure, std::size_t dim) const {
        return integrals.subspan(measure * dim, dim);
    }
};

/// Constants of the one-sided drift and diffusion Lipschitz conditions
///   <phi(0)-psi(0), f(phi)-f(psi)> <= -b1 |phi(0)-psi(0)|^2 + b2 int |phi-psi|^2 d nu1,
///   |g(phi)-g(psi)|^2 <= b3 int |phi-psi|^2 d nu2.
struct DissipativityParams {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    MemoryMeasure nu1 = MemoryMeasure::dirac_at_zero();
    MemoryMeasure nu2 = MemoryMeasure::dirac_at_zero();
};

/// |f(phi) - f(psi)| <= a8 ||phi - psi||_r (1 + ||phi||_r^v + ||psi||_r^v).
struct PolynomialGrowth {
    double a8 = 0.0;
    double v = 0.0;
};

/// dx(t) = f(x_t) dt + g(x_t) dB(t) with x(t) in R^n, B in R^d.
class SfdeModel {
public:
    virtual ~SfdeModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t noise_dim() const = 0;
    virtual const std::vector<MemoryMeasure>& measures() const = 0;

    virtual void drift(const SegmentFeatures& x, std::span<double> out) const = 0;
    /// Row-major n x d.
    virtual void diffusion(const SegmentFeatures& x, std::span<double> out) const = 0;

    virtual std::optional<DissipativityParams> dissipativity() const { return std::nullopt; }
    virtual std::optional<PolynomialGrowth> growth() const { return std::nullopt; }
    /// Model-specific parameter constraints that do not hold (empty when fine).
    virtual std::vector<std::string> parameter_violations() const { return {}; }
    /// Parameters echoed into run manifests.
    virtual std::map<std::string, double> parameters() const { return {}; }

    std::vector<double> drift(const Segment& s) const;
    std::vector<double> diffusion(const Segment& s) const;
    /// |f(0)|, needed to validate the truncation level L.
    double drift_at_zero_norm() const;
};

/// Computes SegmentFeatures for one model on one (k, l) grid and owns the
/// memory kernels and buffers for it. Not thread-safe; one per worker.
class FeatureEvaluator {
public:
    FeatureEvaluator(const SfdeModel& model, int k, int l);

    const SegmentFeatures& evaluate(const Segment& s);

private:
    std::size_t dim_;
    std::vector<MemoryKernel> kernels_;
    std::vector<double> current_;
    std::vector<double> integrals_;
    SegmentFeatures features_;
};

// =============================================================================
// Built-in models
// =============================================================================

/// dx = (d1 - d2 x - d3 x^3 + d4 int x dmu) dt + d5 int x dmu dB, mu = 3 e^{3u} du.
class CubicScalarModel final : public SfdeModel {
public:
    struct Params {
        double d1 = 1.0;
        double d2 = 4.0;
        double d3 = 8.0;
        double d4 = 1.0;
        double d5 = 1.0;
    };

    explicit CubicScalarModel(Params p);

    const Params& params() const { return p_; }
    const MemoryMeasure& memory() const { return measures_.front(); }
    /// d2 + 3 d3 / 2 + 2.
    double a8() const { return p_.d2 + 1.5 * p_.d3 + 2.0; }

    std::string name() const override { return "cubic-example1"; }
    std::size_t dim() const override { return 1; }
    std::size_t noise_dim() const override { return 1; }
    const std::vector<MemoryMeasure>& measures() const override { return measures_; }
    void drift(const SegmentFeatures& x, std::span<double> out) const override;
    void diffusion(const SegmentFeatures& x, std::span<double> out) const override;
    std::optional<DissipativityParams> dissipativity() const override;
    std::optional<PolynomialGrowth> growth() const override;
    std::vector<std::string> parameter_violations() const override;
    std::map<std::string, double> parameters() const override;

    using SfdeModel::diffusion;
    using SfdeModel::drift;

private:
    Params p_;
    std::vector<MemoryMeasure> measures_;
};

double cubic_drift(const CubicScalarModel& m, const Segment& s);
double cubic_diffusion(const CubicScalarModel& m, const Segment& s);

/// dx = diag(x) [g + A x + B int x dmu] dt + diag(x) Sigma dB, mu = 3 e^{3u} du.
class LotkaVolterraModel final : public SfdeModel {
public:
    using Vec2 = std::array<double, 2>;
    using Mat2 = std::array<std::array<double, 2>, 2>;

    struct Params {
        Vec2 growth{0.8, 0.6};
        Mat2 a{{{-1.0, -0.05}, {-0.05, -1.0}}};
        Mat2 b{{{-0.01, -0.02}, {-0.03, -0.015}}};
        Vec2 sigma{0.05, 0.1};  ///< diagonal of Sigma
    };

    explicit LotkaVolterraModel(Params p);

    const Params& params() const { return p_; }
    const MemoryMeasure& memory() const { return measures_.front(); }

    std::string name() const override { return "lotka-volterra-example2"; }
    std::size_t dim() const override { return 2; }
    std::size_t noise_dim() const override { return 2; }
    const std::vector<MemoryMeasure>& measures() const override { return measures_; }
    void drift(const SegmentFeatures& x, std::span<double> out) const override;
    void diffusion(const SegmentFeatures& x, std::span<double> out) const override;
    std::vector<std::string> parameter_violations() const override;
    std::map<std::string, double> parameters() const override;

    using SfdeModel::diffusion;
    using SfdeModel::drift;

private:
    Params p_;
    std::vector<MemoryMeasure> measures_;
};

std::array<double, 2> lv_drift(const LotkaVolterraModel& m, const Segment& s);
/// Row-major 2 x 2.
std::array<double, 4> lv_diffusion(const LotkaVolterraModel& m, const Segment& s);

/// dx = -rate x(t) dt + sigma x(t) dB, scalar; exactly solvable.
class LinearModel final : public SfdeModel {
public:
    explicit LinearModel(double rate = 1.0, double sigma = 0.0);

    double rate() const { return rate_; }
    double sigma() const { return sigma_; }

    std::string name() const override { return "linear"; }
    std::size_t dim() const override { return 1; }
    std::size_t noise_dim() const override { return 1; }
    const std::vector<MemoryMeasure>& measures() const override { return measures_; }
    void drift(const SegmentFeatures& x, std::span<double> out) const override;
    void diffusion(const SegmentFeatures& x, std::span<double> out) const override;
    std::optional<DissipativityParams> dissipativity() const override;
    std::map<std::string, double> parameters() const override;

    using SfdeModel::diffusion;
    using SfdeModel::drift;

private:
    double rate_;
    double sigma_;
    std::vector<MemoryMeasure> measures_;
};

/// Coefficients given as callbacks over SegmentFeatures (library use).
class FunctionalModel final : public SfdeModel {
public:
    using Coefficient = std::function<void(const SegmentFeatures&, std::span<double>)>;

    FunctionalModel(std::string name, std::size_t dim, std::size_t noise_dim, std::vector<MemoryMeasure> measures,
                    Coefficient drift, Coefficient diffusion,
                    std::optional<DissipativityParams> dissipativity = std::nullopt);

    std::string name() const override { return name_; }
    std::size_t dim() const override { return dim_; }
    std::size_t noise_dim() const override { return noise_dim_; }
    const std::vector<MemoryMeasure>& measures() const override { return measures_; }
    void drift(const SegmentFeatures& x, std::span<double> out) const override { drift_(x, out); }
    void diffusion(const SegmentFeatures& x, std::span<double> out) const override { diffusion_(x, out); }
    std::optional<DissipativityParams> dissipativity() const override { return dissipativity_; }

    using SfdeModel::diffusion;
    using SfdeModel::drift;

private:
    std::string name_;
    std::size_t dim_;
    std::size_t noise_dim_;
    std::vector<MemoryMeasure> measures_;
    Coefficient drift_;
    Coefficient diffusion_;
    std::optional<DissipativityParams> dissipativity_;
};

// =============================================================================
// Model checks
// =============================================================================

struct DissipativityReport {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    double lhs = 0.0;           ///< 2 b1
    double rhs = 0.0;           ///< 2 b2 + b3
    double weighted_rhs = 0.0;  ///< 2 b2 nu1^(2r) + b3 nu2^(2r)
    double nu1_moment = 0.0;    ///< nu1^(2r), +inf when divergent
    double nu2_moment = 0.0;
    bool moments_finite = false;
    std::vector<std::string> parameter_violations;
    bool passed = false;

    double margin() const { return lhs - rhs; }
    std::string summary() const;
};

/// Checks 2 b1 > 2 b2 + b3, nu1, nu2 in P_{2r} and the model's own parameter
/// constraints. MissingMetadata when the model has no dissipativity constants.
DissipativityReport check_dissipativity(const SfdeModel& model, double fading_rate);

// =============================================================================
// Presets
// =============================================================================

/// "cubic-example1", "lotka-volterra-example2" or "linear", with named
/// parameter overrides (d1..d5; growth1, a11, ..., sigma2; rate, sigma).
/// ConfigError on unknown names or keys.
std::unique_ptr<SfdeModel> make_model(const std::string& preset, const std::map<std::string, double>& overrides = {});

/// Truncation used with a preset: the polynomial bound with a8 = 18, v = 2,
/// L = 24, theta = 2/5 for the cubic model; Lambda(R) = 1 + 9R, L = 1,
/// theta = 1/3 for Lotka-Volterra; no clipping for the linear model.
TruncationPolicy preset_policy(const std::string& preset);

/// The three initial data used with each preset.
std::vector<InitialData> preset_initial_data(const std::string& preset);

/// Fading rate paired with each preset (0.3 throughout).
double preset_fading_rate(const std::string& preset);

}  // namespace tem
