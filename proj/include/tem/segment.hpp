#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tem {

/// Discrete fading-memory state on [-k, 0] sampled with spacing 1/l.
///
/// Storage is a ring buffer of exactly k*l + 1 node vectors, oldest first in
/// logical order: logical node i sits at u_i = -k + i/l. Values for u < -k
/// are the oldest node (constant tail), values in between are linear
/// interpolants. Advancing one step costs O(n) regardless of the horizon.
class Segment {
public:
    Segment(std::size_t dim, int k, int l, double fading_rate);

    std::size_t dim() const { return dim_; }
    int horizon() const { return k_; }
    int resolution() const { return l_; }
    double step() const { return 1.0 / l_; }
    double fading_rate() const { return r_; }
    /// Number of stored nodes, always k*l + 1.
    std::size_t size() const { return nodes_; }

    /// Abscissa of logical node i, in [-k, 0].
    double node_time(std::size_t i) const;
    std::span<const double> node(std::size_t i) const;
    std::span<const double> newest() const { return node(nodes_ - 1); }
    std::span<const double> oldest() const { return node(0); }

    void set_node(std::size_t i, std::span<const double> value);

    /// Drops the oldest node and installs `value` at u = 0. O(n).
    void shift_append(std::span<const double> value);

    /// Weights exp(r t_i) used by norm_r, oldest first.
    std::span<const double> norm_weights() const { return *norm_weights_; }

    /// Calls f(first_logical_index, contiguous node data) over the ring in
    /// logical order; at most two calls.
    template <class F>
    void for_each_run(F&& f) const {
        const std::size_t first = nodes_ - head_;
        f(std::size_t{0}, std::span<const double>(data_.data() + head_ * dim_, first * dim_));
        if (head_ != 0) {
            f(first, std::span<const double>(data_.data(), head_ * dim_));
        }
    }

    bool operator==(const Segment& other) const;

private:
    std::size_t physical(std::size_t i) const {
        const std::size_t p = head_ + i;
        return p >= nodes_ ? p - nodes_ : p;
    }

    std::size_t dim_;
    int k_;
    int l_;
    double r_;
    std::size_t nodes_;
    std::size_t head_ = 0;
    std::vector<double> data_;
    std::shared_ptr<const std::vector<double>> norm_weights_;
};

/// One closed-form component of an initial datum.
struct InitialComponent {
    enum class Family {
        Exponential,  ///< c * exp(a u)
        Linear,       ///< c * u
        PolyExp,      ///< c * (u^2 + 1) * exp(a u)
    };
    Family family = Family::Exponential;
    double c = 0.0;
    double a = 0.0;

    double value(double u) const;
    /// exp(r u) * value(u), evaluated with the exponents folded together.
    double faded(double u, double r) const;
    std::string describe() const;
};

/// Initial datum xi: R_- -> R^n.
class InitialData {
public:
    using Sampler = std::function<void(double u, std::span<double> out)>;

    explicit InitialData(std::vector<InitialComponent> components);
    /// Arbitrary sampling function (library use only; not expressible in config files).
    InitialData(std::size_t dim, Sampler sampler, std::string label = "custom");

    static InitialData constant(std::vector<double> values);

    std::size_t dim() const { return dim_; }
    void evaluate(double u, std::span<double> out) const;
    std::vector<double> operator()(double u) const;

    /// True when exp(r u) xi(u) has a finite limit as u -> -inf. Decided
    /// exactly for closed-form components; a sampler is probed at
    /// u = -max(10k, 200) and twice that (agreement within 1e-6).
    bool in_phase_space(double r, int k) const;

    const std::vector<InitialComponent>& components() const { return components_; }
    std::string describe() const;

private:
    std::size_t dim_ = 0;
    std::vector<InitialComponent> components_;
    Sampler sampler_;
    std::string label_;
};

/// Samples xi at the nodes t_j, j = -kl..0. Throws NotInPhaseSpace.
Segment from_initial(const InitialData& xi, int k, int l, double fading_rate);

/// Piecewise-linear value at u <= 0, constant for u < -k.
void interpolate(const Segment& s, double u, std::span<double> out);
std::vector<double> interpolate(const Segment& s, double u);

/// Node-restricted fading norm max_i exp(r t_i) |x_i|. The exact supremum
/// over the interpolant exceeds this by at most a factor exp(r/l).
double norm_r(const Segment& s);

/// Node-restricted fading norm of the difference of two segments on the same grid.
double distance_r(const Segment& a, const Segment& b);

/// Radial clip of every node to `radius`.
Segment clip_segment(const Segment& s, double radius);

/// Keeps every `stride`-th node counting back from u = 0, restricted to
/// u >= -horizon (0 keeps the full window). The result lives on the grid with
/// resolution l / stride.
Segment subsample(const Segment& s, int stride, int horizon = 0);

/// Rows "t,x_1,...,x_n", oldest first, with `time_offset` added to the node abscissae.
void write_segment_csv(std::ostream& os, const Segment& s, double time_offset = 0.0);

}  // namespace tem
