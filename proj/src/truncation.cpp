#include "tem/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tem/errors.hpp"

namespace tem {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool positive_finite(double x) { return x > 0.0 && std::isfinite(x); }

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace

TruncationPolicy::TruncationPolicy(BoundForm form, double level, double theta)
    : form_(form), level_(level), theta_(theta) {
    if (!(theta > 0.0 && theta <= 0.5)) {
        throw ConfigError("theta must lie in (0, 1/2], got " + std::to_string(theta));
    }
    if (!(level >= 1.0) || !std::isfinite(level)) {
        throw ConfigError("L must be a finite real >= 1, got " + std::to_string(level));
    }
    std::visit(overloaded{
                   [&](const PolynomialBound& p) {
                       if (!positive_finite(p.a8) || !positive_finite(p.v)) {
                           throw ConfigError("polynomial bound needs a8 > 0 and v > 0");
                       }
                       if (!(level > p.a8)) {
                           throw ConfigError("polynomial bound needs L > a8 (L = " + std::to_string(level) +
                                             ", a8 = " + std::to_string(p.a8) + ")");
                       }
                   },
                   [&](const AffineBound& a) {
                       if (!positive_finite(a.c0) || !positive_finite(a.c1)) {
                           throw ConfigError("affine bound needs c0 > 0 and c1 > 0");
                       }
                   },
                   [&](const ConstantBound& c) {
                       if (!positive_finite(c.value)) {
                           throw ConfigError("constant bound needs a positive value");
                       }
                   },
               },
               form_);
}

TruncationPolicy TruncationPolicy::classical(double lipschitz) {
    return TruncationPolicy(ConstantBound{lipschitz}, std::max(1.0, lipschitz), 0.5);
}

double TruncationPolicy::lambda(double radius) const {
    if (!(radius >= 0.0)) {
        throw DomainError("Lambda is defined on R >= 0");
    }
    return std::visit(overloaded{
                          [&](const PolynomialBound& p) { return p.a8 * (1.0 + 2.0 * std::pow(radius, p.v)); },
                          [&](const AffineBound& a) { return a.c0 + a.c1 * radius; },
                          [&](const ConstantBound& c) { return c.value; },
                      },
                      form_);
}

double TruncationPolicy::lambda_inverse(double value) const {
    if (!clips()) {
        return std::numeric_limits<double>::infinity();
    }
    const double floor = lambda(0.0);
    if (!(value >= floor)) {
        throw DomainError("Lambda^{-1} is defined on [Lambda(0), inf) = [" + std::to_string(floor) + ", inf)");
    }
    return std::visit(overloaded{
                          [&](const PolynomialBound& p) {
                              return std::pow(value / (2.0 * p.a8) - 0.5, 1.0 / p.v);
                          },
                          [&](const AffineBound& a) { return (value - a.c0) / a.c1; },
                          [&](const ConstantBound&) { return std::numeric_limits<double>::infinity(); },
                      },
                      form_);
}

double TruncationPolicy::clip_radius(int l) const {
    if (l <= 0) {
        throw ConfigError("step size 1/l needs a positive integer l");
    }
    if (!clips()) {
        return std::numeric_limits<double>::infinity();
    }
    const double target = level_ * std::pow(static_cast<double>(l), theta_);
    if (target < lambda(0.0)) {
        throw ConfigError("truncation radius undefined: L * Delta^-theta = " + std::to_string(target) +
                          " < Lambda(0) = " + std::to_string(lambda(0.0)));
    }
    return lambda_inverse(target);
}

void TruncationPolicy::check_level(double drift_at_zero) const {
    const double need = std::max(1.0, std::abs(drift_at_zero));
    if (level_ < need) {
        throw ConfigError("L = " + std::to_string(level_) + " is below 1 v |f(0)| = " + std::to_string(need));
    }
}

std::string TruncationPolicy::kind() const {
    return std::visit(overloaded{
                          [](const PolynomialBound&) { return std::string("polynomial"); },
                          [](const AffineBound&) { return std::string("affine"); },
                          [](const ConstantBound&) { return std::string("constant"); },
                      },
                      form_);
}

std::string TruncationPolicy::describe() const {
    std::ostringstream os;
    os.precision(15);
    std::visit(overloaded{
                   [&](const PolynomialBound& p) { os << "polynomial(a8=" << p.a8 << ",v=" << p.v << ")"; },
                   [&](const AffineBound& a) { os << "affine(c0=" << a.c0 << ",c1=" << a.c1 << ")"; },
                   [&](const ConstantBound& c) { os << "constant(" << c.value << ")"; },
               },
               form_);
    os << ",L=" << level_ << ",theta=" << theta_;
    return os.str();
}

double lambda_of(const TruncationPolicy& p, double radius) { return p.lambda(radius); }
double lambda_inv(const TruncationPolicy& p, double value) { return p.lambda_inverse(value); }
double clip_radius(const TruncationPolicy& p, int l) { return p.clip_radius(l); }

void pi_delta(std::span<const double> x, double radius, std::span<double> out) {
    if (out.size() != x.size()) {
        throw DimensionMismatch("pi_delta output has wrong dimension");
    }
    const double norm = norm2(x);
    if (norm <= radius) {
        std::copy(x.begin(), x.end(), out.begin());
        return;
    }
    double scale = radius / norm;
    for (;;) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            out[i] = x[i] * scale;
        }
        if (norm2(out) <= radius) {
            return;
        }
        scale = std::nextafter(scale, 0.0);
    }
}

std::vector<double> pi_delta(std::span<const double> x, double radius) {
    std::vector<double> out(x.size());
    pi_delta(x, radius, out);
    return out;
}

}  // namespace tem
