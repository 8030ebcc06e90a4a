#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tem {

/// Lambda(R) = a8 (1 + 2 R^v), the bound that goes with a polynomial
/// local-Lipschitz estimate of the drift.
struct PolynomialBound {
    double a8 = 1.0;
    double v = 1.0;
};

/// Lambda(R) = c0 + c1 R.
struct AffineBound {
    double c0 = 1.0;
    double c1 = 1.0;
};

/// Lambda(R) = value for every R: a globally Lipschitz drift. Disables clipping,
/// so the truncated scheme is the classical Euler-Maruyama scheme.
struct ConstantBound {
    double value = 1.0;
};

using BoundForm = std::variant<PolynomialBound, AffineBound, ConstantBound>;

/// Space-truncation setup: the increasing bound Lambda, the level L and the
/// exponent theta. The clip radius at step 1/l is Lambda^{-1}(L l^theta).
class TruncationPolicy {
public:
    /// Validates the structural invariants: positive parameters, Lambda
    /// strictly increasing, theta in (0, 1/2], L >= 1 and, for the polynomial
    /// form, L > a8. Throws ConfigError.
    TruncationPolicy(BoundForm form, double level, double theta);

    /// Constant bound: classical Euler-Maruyama.
    static TruncationPolicy classical(double lipschitz = 1.0);

    const BoundForm& form() const { return form_; }
    double level() const { return level_; }
    double theta() const { return theta_; }
    bool clips() const { return !std::holds_alternative<ConstantBound>(form_); }

    double lambda(double radius) const;
    /// +inf for the constant form. DomainError below Lambda(0).
    double lambda_inverse(double value) const;
    /// Lambda^{-1}(L * l^theta); +inf for the constant form. ConfigError when
    /// L l^theta < Lambda(0).
    double clip_radius(int l) const;

    /// ConfigError unless L >= 1 v |f(0)|.
    void check_level(double drift_at_zero) const;

    std::string kind() const;
    std::string describe() const;

private:
    BoundForm form_;
    double level_;
    double theta_;
};

double lambda_of(const TruncationPolicy& p, double radius);
double lambda_inv(const TruncationPolicy& p, double value);
double clip_radius(const TruncationPolicy& p, int l);

/// Radial projection onto the closed ball of `radius`: x is returned bitwise
/// when |x| <= radius, 0 maps to 0, and the result satisfies |y| <= radius
/// exactly so the map is idempotent.
void pi_delta(std::span<const double> x, double radius, std::span<double> out);
std::vector<double> pi_delta(std::span<const double> x, double radius);

}  // namespace tem
