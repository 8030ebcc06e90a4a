#include "tem/memory_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tem/errors.hpp"

namespace tem {

namespace {

// (e^x - 1)/x - 1, accurate for small x.
double exprel_minus_one(double x) {
    if (std::abs(x) < 0.5) {
        double term = x / 2.0;
        double sum = term;
        for (int n = 2; n < 30; ++n) {
            term *= x / (n + 1);
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) {
                break;
            }
        }
        return sum;
    }
    return std::expm1(x) / x - 1.0;
}

// scale * e^{exponent}, taken through log space when e^{exponent} would
// underflow; results below the double range are 0.
double scaled_exp(double scale, double exponent) {
    if (scale <= 0.0) {
        return 0.0;
    }
    if (exponent < -700.0) {
        return std::exp(exponent + std::log(scale));
    }
    return scale * std::exp(exponent);
}

}  // namespace

MemoryMeasure::MemoryMeasure(std::vector<ExponentialComponent> components, double atom_at_zero)
    : components_(std::move(components)), atom_(atom_at_zero) {
    if (!(atom_ >= 0.0) || !std::isfinite(atom_)) {
        throw DomainError("atom weight must be nonnegative");
    }
    double total = atom_;
    for (const auto& c : components_) {
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
            throw DomainError("mixture weights must be nonnegative");
        }
        if (!(c.rate > 0.0) || !std::isfinite(c.rate)) {
            throw DomainError("exponential rates must be positive");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw DomainError("memory measure weights sum to " + std::to_string(total) + ", expected 1");
    }
}

MemoryMeasure MemoryMeasure::exponential(double rate) { return MemoryMeasure({{1.0, rate}}); }

MemoryMeasure MemoryMeasure::dirac_at_zero() { return MemoryMeasure({}, 1.0); }

double MemoryMeasure::critical_rate() const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& c : components_) {
        if (c.weight > 0.0) {
            lo = std::min(lo, c.rate);
        }
    }
    return lo;
}

std::string MemoryMeasure::describe() const {
    std::ostringstream os;
    os.precision(15);
    for (std::size_t i = 0; i < components_.size(); ++i) {
        if (i) os << ";";
        os << components_[i].weight << ":" << components_[i].rate;
    }
    if (atom_ > 0.0) {
        if (!components_.empty()) os << ";";
        os << "atom:" << atom_;
    }
    return os.str();
}

double mu_moment(const MemoryMeasure& m, double a) {
    if (!(a >= 0.0)) {
        throw DomainError("exponential moment needs a >= 0");
    }
    if (a == 0.0) {
        return 1.0;
    }
    double total = m.atom_at_zero();
    for (const auto& c : m.components()) {
        if (c.weight == 0.0) {
            continue;
        }
        if (a >= c.rate) {
            throw InfiniteMoment("mu^(a) diverges: a = " + std::to_string(a) + " >= rate " + std::to_string(c.rate));
        }
        total += c.weight * c.rate / (c.rate - a);
    }
    return total;
}

// =============================================================================
// MemoryKernel
// =============================================================================

MemoryKernel::MemoryKernel(const MemoryMeasure& m, int k, int l) : k_(k), l_(l) {
    if (k <= 0 || l <= 0) {
        throw DomainError("memory kernel needs k > 0 and l > 0");
    }
    const std::size_t nodes = static_cast<std::size_t>(k) * static_cast<std::size_t>(l) + 1;
    const long kl = static_cast<long>(k) * l;
    const double delta = 1.0 / l;
    weights_.assign(nodes, 0.0);

    for (const auto& comp : m.components()) {
        if (comp.weight == 0.0) {
            continue;
        }
        const double lambda = comp.rate;
        const double x = lambda * delta;
        const double left = exprel_minus_one(x);
        const double right = std::expm1(x) - left;
        for (std::size_t piece = 0; piece + 1 < nodes; ++piece) {
            const double a = static_cast<double>(static_cast<long>(piece) - kl) / l;
            weights_[piece] += scaled_exp(comp.weight * left, lambda * a);
            weights_[piece + 1] += scaled_exp(comp.weight * right, lambda * a);
        }
        // Mass of (-inf, -k] sees the constant tail value.
        weights_[0] += scaled_exp(comp.weight, -lambda * k);
    }
    weights_[nodes - 1] += m.atom_at_zero();
}

void MemoryKernel::apply(const Segment& s, std::span<double> out) const {
    if (s.horizon() != k_ || s.resolution() != l_) {
        throw DimensionMismatch("memory kernel built for a different grid");
    }
    if (out.size() != s.dim()) {
        throw DimensionMismatch("integral output has wrong dimension");
    }
    const std::size_t n = s.dim();
    std::fill(out.begin(), out.end(), 0.0);
    if (n == 1) {
        double acc = 0.0;
        s.for_each_run([&](std::size_t first, std::span<const double> run) {
            const double* w = weights_.data() + first;
            for (std::size_t j = 0; j < run.size(); ++j) {
                acc += w[j] * run[j];
            }
        });
        out[0] = acc;
        return;
    }
    s.for_each_run([&](std::size_t first, std::span<const double> run) {
        const std::size_t count = run.size() / n;
        for (std::size_t j = 0; j < count; ++j) {
            const double w = weights_[first + j];
            for (std::size_t c = 0; c < n; ++c) {
                out[c] += w * run[j * n + c];
            }
        }
    });
}

std::vector<double> integrate_segment(const MemoryMeasure& m, const Segment& s) {
    const MemoryKernel kernel(m, s.horizon(), s.resolution());
    std::vector<double> out(s.dim());
    kernel.apply(s, out);
    return out;
}

}  // namespace tem
