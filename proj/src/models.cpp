#include "tem/models.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "tem/errors.hpp"

namespace tem {

// =============================================================================
// SfdeModel
// =============================================================================

std::vector<double> SfdeModel::drift(const Segment& s) const {
    FeatureEvaluator eval(*this, s.horizon(), s.resolution());
    std::vector<double> out(dim());
    drift(eval.evaluate(s), out);
    return out;
}

std::vector<double> SfdeModel::diffusion(const Segment& s) const {
    FeatureEvaluator eval(*this, s.horizon(), s.resolution());
    std::vector<double> out(dim() * noise_dim());
    diffusion(eval.evaluate(s), out);
    return out;
}

double SfdeModel::drift_at_zero_norm() const {
    const std::vector<double> zero(dim() * (measures().size() + 1), 0.0);
    const SegmentFeatures x{std::span<const double>(zero.data(), dim()),
                            std::span<const double>(zero.data() + dim(), dim() * measures().size())};
    std::vector<double> f(dim());
    drift(x, f);
    double s = 0.0;
    for (double v : f) {
        s += v * v;
    }
    return std::sqrt(s);
}

FeatureEvaluator::FeatureEvaluator(const SfdeModel& model, int k, int l)
    : dim_(model.dim()), current_(model.dim()), integrals_(model.dim() * model.measures().size()) {
    kernels_.reserve(model.measures().size());
    for (const auto& m : model.measures()) {
        kernels_.emplace_back(m, k, l);
    }
    features_ = SegmentFeatures{current_, integrals_};
}

const SegmentFeatures& FeatureEvaluator::evaluate(const Segment& s) {
    if (s.dim() != dim_) {
        throw DimensionMismatch("segment dimension does not match the model");
    }
    const auto head = s.newest();
    std::copy(head.begin(), head.end(), current_.begin());
    for (std::size_t m = 0; m < kernels_.size(); ++m) {
        kernels_[m].apply(s, std::span<double>(integrals_.data() + m * dim_, dim_));
    }
    return features_;
}

// =============================================================================
// Cubic scalar model
// =============================================================================

CubicScalarModel::CubicScalarModel(Params p) : p_(p), measures_{MemoryMeasure::exponential(3.0)} {}

void CubicScalarModel::drift(const SegmentFeatures& x, std::span<double> out) const {
    const double now = x.current[0];
    const double memory = x.integrals[0];
    out[0] = p_.d1 - p_.d2 * now - p_.d3 * now * now * now + p_.d4 * memory;
}

void CubicScalarModel::diffusion(const SegmentFeatures& x, std::span<double> out) const {
    out[0] = p_.d5 * x.integrals[0];
}

std::optional<DissipativityParams> CubicScalarModel::dissipativity() const {
    return DissipativityParams{p_.d2 - p_.d4 / 2.0, p_.d4 / 2.0, p_.d5, memory(), memory()};
}

std::optional<PolynomialGrowth> CubicScalarModel::growth() const { return PolynomialGrowth{a8(), 2.0}; }

std::vector<std::string> CubicScalarModel::parameter_violations() const {
    std::vector<std::string> out;
    const std::array<std::pair<const char*, double>, 4> positive{
        {{"d2", p_.d2}, {"d3", p_.d3}, {"d4", p_.d4}, {"d5", p_.d5}}};
    for (const auto& [name, value] : positive) {
        if (!(value > 0.0)) {
            out.push_back(std::string(name) + " must be positive");
        }
    }
    if (!(p_.d2 > p_.d4 + p_.d5)) {
        std::ostringstream os;
        os << "d2 > d4 + d5 fails (" << p_.d2 << " <= " << p_.d4 + p_.d5 << ")";
        out.push_back(os.str());
    }
    return out;
}

std::map<std::string, double> CubicScalarModel::parameters() const {
    return {{"d1", p_.d1}, {"d2", p_.d2}, {"d3", p_.d3}, {"d4", p_.d4}, {"d5", p_.d5}, {"a8", a8()}};
}

double cubic_drift(const CubicScalarModel& m, const Segment& s) { return m.drift(s)[0]; }

double cubic_diffusion(const CubicScalarModel& m, const Segment& s) { return m.diffusion(s)[0]; }

// =============================================================================
// Lotka-Volterra model
// =============================================================================

LotkaVolterraModel::LotkaVolterraModel(Params p) : p_(p), measures_{MemoryMeasure::exponential(3.0)} {}

void LotkaVolterraModel::drift(const SegmentFeatures& x, std::span<double> out) const {
    const auto now = x.current;
    const auto memory = x.integrals;
    for (std::size_t i = 0; i < 2; ++i) {
        double rate = p_.growth[i];
        for (std::size_t j = 0; j < 2; ++j) {
            rate += p_.a[i][j] * now[j] + p_.b[i][j] * memory[j];
        }
        out[i] = now[i] * rate;
    }
}

void LotkaVolterraModel::diffusion(const SegmentFeatures& x, std::span<double> out) const {
    out[0] = x.current[0] * p_.sigma[0];
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = x.current[1] * p_.sigma[1];
}

std::vector<std::string> LotkaVolterraModel::parameter_violations() const {
    std::vector<std::string> out;
    if (!(p_.sigma[0] >= 0.0) || !(p_.sigma[1] >= 0.0)) {
        out.emplace_back("Sigma must be diagonal with nonnegative entries");
    }
    return out;
}

std::map<std::string, double> LotkaVolterraModel::parameters() const {
    return {{"growth1", p_.growth[0]}, {"growth2", p_.growth[1]}, {"a11", p_.a[0][0]}, {"a12", p_.a[0][1]},
            {"a21", p_.a[1][0]},       {"a22", p_.a[1][1]},       {"b11", p_.b[0][0]}, {"b12", p_.b[0][1]},
            {"b21", p_.b[1][0]},       {"b22", p_.b[1][1]},       {"sigma1", p_.sigma[0]}, {"sigma2", p_.sigma[1]}};
}

std::array<double, 2> lv_drift(const LotkaVolterraModel& m, const Segment& s) {
    const auto f = m.drift(s);
    return {f[0], f[1]};
}

std::array<double, 4> lv_diffusion(const LotkaVolterraModel& m, const Segment& s) {
    const auto g = m.diffusion(s);
    return {g[0], g[1], g[2], g[3]};
}

// =============================================================================
// Linear model
// =============================================================================

LinearModel::LinearModel(double rate, double sigma) : rate_(rate), sigma_(sigma) {
    if (!std::isfinite(rate) || !std::isfinite(sigma)) {
        throw DomainError("linear model needs finite coefficients");
    }
}

void LinearModel::drift(const SegmentFeatures& x, std::span<double> out) const { out[0] = -rate_ * x.current[0]; }

void LinearModel::diffusion(const SegmentFeatures& x, std::span<double> out) const {
    out[0] = sigma_ * x.current[0];
}

std::optional<DissipativityParams> LinearModel::dissipativity() const {
    return DissipativityParams{rate_, 0.0, sigma_ * sigma_, MemoryMeasure::dirac_at_zero(),
                               MemoryMeasure::dirac_at_zero()};
}

std::map<std::string, double> LinearModel::parameters() const { return {{"rate", rate_}, {"sigma", sigma_}}; }

// =============================================================================
// Functional model
// =============================================================================

FunctionalModel::FunctionalModel(std::string name, std::size_t dim, std::size_t noise_dim,
                                 std::vector<MemoryMeasure> measures, Coefficient drift, Coefficient diffusion,
                                 std::optional<DissipativityParams> dissipativity)
    : name_(std::move(name)),
      dim_(dim),
      noise_dim_(noise_dim),
      measures_(std::move(measures)),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      dissipativity_(std::move(dissipativity)) {
    if (dim_ == 0 || noise_dim_ == 0 || !drift_ || !diffusion_) {
        throw DomainError("functional model needs dimensions and both coefficients");
    }
}

// =============================================================================
// Dissipativity
// =============================================================================

namespace {

double moment_or_inf(const MemoryMeasure& m, double a) {
    try {
        return mu_moment(m, a);
    } catch (const InfiniteMoment&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

std::string DissipativityReport::summary() const {
    std::ostringstream os;
    os << "2b1 = " << lhs << " vs 2b2 + b3 = " << rhs << " (margin " << margin() << ")"
       << ", nu1^(2r) = " << nu1_moment << ", nu2^(2r) = " << nu2_moment;
    for (const auto& v : parameter_violations) {
        os << "; " << v;
    }
    os << (passed ? "; pass" : "; FAIL");
    return os.str();
}

DissipativityReport check_dissipativity(const SfdeModel& model, double fading_rate) {
    const auto params = model.dissipativity();
    if (!params) {
        throw MissingMetadata("model '" + model.name() + "' carries no dissipativity constants");
    }
    DissipativityReport r;
    r.b1 = params->b1;
    r.b2 = params->b2;
    r.b3 = params->b3;
    r.lhs = 2.0 * r.b1;
    r.rhs = 2.0 * r.b2 + r.b3;
    r.nu1_moment = moment_or_inf(params->nu1, 2.0 * fading_rate);
    r.nu2_moment = moment_or_inf(params->nu2, 2.0 * fading_rate);
    r.moments_finite = std::isfinite(r.nu1_moment) && std::isfinite(r.nu2_moment);
    r.weighted_rhs = 2.0 * r.b2 * r.nu1_moment + r.b3 * r.nu2_moment;
    r.parameter_violations = model.parameter_violations();
    r.passed = r.lhs > r.rhs && r.moments_finite && r.parameter_violations.empty();
    return r;
}

// =============================================================================
// Presets
// =============================================================================

namespace {

double take(std::map<std::string, double>& rest, const std::string& key, double fallback) {
    auto it = rest.find(key);
    if (it == rest.end()) {
        return fallback;
    }
    const double v = it->second;
    rest.erase(it);
    return v;
}

void reject_leftovers(const std::string& preset, const std::map<std::string, double>& rest) {
    if (!rest.empty()) {
        throw ConfigError("unknown parameter '" + rest.begin()->first + "' for model preset '" + preset + "'");
    }
}

}  // namespace

std::unique_ptr<SfdeModel> make_model(const std::string& preset, const std::map<std::string, double>& overrides) {
    auto rest = overrides;
    if (preset == "cubic-example1") {
        CubicScalarModel::Params p;
        p.d1 = take(rest, "d1", p.d1);
        p.d2 = take(rest, "d2", p.d2);
        p.d3 = take(rest, "d3", p.d3);
        p.d4 = take(rest, "d4", p.d4);
        p.d5 = take(rest, "d5", p.d5);
        reject_leftovers(preset, rest);
        return std::make_unique<CubicScalarModel>(p);
    }
    if (preset == "lotka-volterra-example2") {
        LotkaVolterraModel::Params p;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto idx = std::to_string(i + 1);
            p.growth[i] = take(rest, "growth" + idx, p.growth[i]);
            p.sigma[i] = take(rest, "sigma" + idx, p.sigma[i]);
            for (std::size_t j = 0; j < 2; ++j) {
                const auto ij = idx + std::to_string(j + 1);
                p.a[i][j] = take(rest, "a" + ij, p.a[i][j]);
                p.b[i][j] = take(rest, "b" + ij, p.b[i][j]);
            }
        }
        reject_leftovers(preset, rest);
        return std::make_unique<LotkaVolterraModel>(p);
    }
    if (preset == "linear") {
        const double rate = take(rest, "rate", 1.0);
        const double sigma = take(rest, "sigma", 0.0);
        reject_leftovers(preset, rest);
        return std::make_unique<LinearModel>(rate, sigma);
    }
    throw ConfigError("unknown model preset '" + preset + "'");
}

TruncationPolicy preset_policy(const std::string& preset) {
    if (preset == "cubic-example1") {
        return TruncationPolicy(PolynomialBound{18.0, 2.0}, 24.0, 2.0 / 5.0);
    }
    if (preset == "lotka-volterra-example2") {
        return TruncationPolicy(AffineBound{1.0, 9.0}, 1.0, 1.0 / 3.0);
    }
    if (preset == "linear") {
        return TruncationPolicy::classical(1.0);
    }
    throw ConfigError("unknown model preset '" + preset + "'");
}

std::vector<InitialData> preset_initial_data(const std::string& preset) {
    using F = InitialComponent::Family;
    if (preset == "cubic-example1") {
        return {InitialData({{F::Exponential, 1.0, 0.2}}), InitialData({{F::Exponential, -1.0, 0.2}}),
                InitialData({{F::Linear, 1.0, 0.0}})};
    }
    if (preset == "lotka-volterra-example2") {
        return {InitialData({{F::Exponential, 0.3, 0.2}, {F::Exponential, 0.8, -0.1}}),
                InitialData({{F::Exponential, 0.5, -0.1}, {F::Exponential, 0.6, 0.2}}),
                InitialData({{F::Exponential, 0.2, 0.2}, {F::PolyExp, 0.3, 0.1}})};
    }
    if (preset == "linear") {
        return {InitialData::constant({1.0})};
    }
    throw ConfigError("unknown model preset '" + preset + "'");
}

double preset_fading_rate(const std::string& preset) {
    if (preset == "cubic-example1" || preset == "lotka-volterra-example2" || preset == "linear") {
        return 0.3;
    }
    throw ConfigError("unknown model preset '" + preset + "'");
}

}  // namespace tem
