#pragma once

#include <span>
#include <string>
#include <vector>

#include "tem/segment.hpp"

namespace tem {

/// weight * lambda e^{lambda u} du on (-inf, 0].
struct ExponentialComponent {
    double weight = 1.0;
    double rate = 1.0;
};

/// Probability measure on (-inf, 0]: a finite mixture of exponential
/// densities plus an optional point mass at u = 0. Immutable.
class MemoryMeasure {
public:
    /// Weights must be nonnegative and sum to 1 within 1e-12; rates positive.
    explicit MemoryMeasure(std::vector<ExponentialComponent> components, double atom_at_zero = 0.0);

    static MemoryMeasure exponential(double rate);
    static MemoryMeasure dirac_at_zero();

    const std::vector<ExponentialComponent>& components() const { return components_; }
    double atom_at_zero() const { return atom_; }

    /// Smallest rate carrying positive weight (+inf for the pure atom).
    double critical_rate() const;

    std::string describe() const;

private:
    std::vector<ExponentialComponent> components_;
    double atom_ = 0.0;
};

/// mu^(a) = int e^{-a u} mu(du). InfiniteMoment once a reaches an active
/// rate, DomainError for a < 0.
double mu_moment(const MemoryMeasure& m, double a);

/// Exact node weights of the functional phi -> int phi d mu for
/// piecewise-linear segments on the (k, l) grid with constant tail.
///
/// Each linear piece is integrated against lambda e^{lambda u} in closed
/// form, the tail beyond -k against the remaining mass e^{-lambda k}, and the
/// atom at 0 lands on the newest node. Weights are the hat-function
/// integrals, so applying them is exact for the interpolant.
class MemoryKernel {
public:
    MemoryKernel(const MemoryMeasure& m, int k, int l);

    int horizon() const { return k_; }
    int resolution() const { return l_; }
    /// Oldest first, k*l + 1 entries.
    std::span<const double> weights() const { return weights_; }

    /// out = int phi d mu, one entry per segment component.
    void apply(const Segment& s, std::span<double> out) const;

private:
    int k_;
    int l_;
    std::vector<double> weights_;
};

/// int_{-inf}^0 phi(u) mu(du) for the interpolant of `s`.
std::vector<double> integrate_segment(const MemoryMeasure& m, const Segment& s);

}  // namespace tem
