#include "tem/segment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <tuple>

#include "tem/errors.hpp"
#include "tem/truncation.hpp"

namespace tem {

namespace {

// Shared exp(r t_i) tables keyed by (r, k, l).
std::shared_ptr<const std::vector<double>> norm_weight_table(double r, int k, int l) {
    using Key = std::tuple<double, int, int>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<const std::vector<double>>> cache;

    const std::lock_guard lock(mutex);
    const Key key{r, k, l};
    if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    const std::size_t nodes = static_cast<std::size_t>(k) * static_cast<std::size_t>(l) + 1;
    auto table = std::make_shared<std::vector<double>>(nodes);
    const long kl = static_cast<long>(k) * l;
    for (std::size_t i = 0; i < nodes; ++i) {
        const double t = static_cast<double>(static_cast<long>(i) - kl) / l;
        (*table)[i] = std::exp(r * t);
    }
    cache.emplace(key, table);
    return table;
}

double euclidean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace

// =============================================================================
// Segment
// =============================================================================

Segment::Segment(std::size_t dim, int k, int l, double fading_rate)
    : dim_(dim), k_(k), l_(l), r_(fading_rate) {
    if (dim == 0 || k <= 0 || l <= 0) {
        throw DomainError("segment needs dim > 0, k > 0 and l > 0");
    }
    if (!(fading_rate > 0.0) || !std::isfinite(fading_rate)) {
        throw DomainError("fading rate r must be positive");
    }
    nodes_ = static_cast<std::size_t>(k) * static_cast<std::size_t>(l) + 1;
    data_.assign(nodes_ * dim_, 0.0);
    norm_weights_ = norm_weight_table(r_, k_, l_);
}

double Segment::node_time(std::size_t i) const {
    const long kl = static_cast<long>(k_) * l_;
    return static_cast<double>(static_cast<long>(i) - kl) / l_;
}

std::span<const double> Segment::node(std::size_t i) const {
    return {data_.data() + physical(i) * dim_, dim_};
}

void Segment::set_node(std::size_t i, std::span<const double> value) {
    if (value.size() != dim_) {
        throw DimensionMismatch("node value has wrong dimension");
    }
    if (i >= nodes_) {
        throw DomainError("node index out of range");
    }
    for (double v : value) {
        if (!std::isfinite(v)) {
            throw NonFiniteValue("non-finite node value");
        }
    }
    std::copy(value.begin(), value.end(), data_.begin() + static_cast<std::ptrdiff_t>(physical(i) * dim_));
}

void Segment::shift_append(std::span<const double> value) {
    if (value.size() != dim_) {
        throw DimensionMismatch("appended value has wrong dimension");
    }
    for (double v : value) {
        if (!std::isfinite(v)) {
            throw NonFiniteValue("non-finite value appended to segment");
        }
    }
    // The oldest slot becomes the newest.
    std::copy(value.begin(), value.end(), data_.begin() + static_cast<std::ptrdiff_t>(head_ * dim_));
    head_ = head_ + 1 == nodes_ ? 0 : head_ + 1;
}

bool Segment::operator==(const Segment& other) const {
    if (dim_ != other.dim_ || k_ != other.k_ || l_ != other.l_ || r_ != other.r_) {
        return false;
    }
    for (std::size_t i = 0; i < nodes_; ++i) {
        const auto a = node(i);
        const auto b = other.node(i);
        if (std::memcmp(a.data(), b.data(), dim_ * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

// =============================================================================
// Initial data
// =============================================================================

double InitialComponent::value(double u) const {
    switch (family) {
        case Family::Exponential:
            return c * std::exp(a * u);
        case Family::Linear:
            return c * u;
        case Family::PolyExp:
            return c * (u * u + 1.0) * std::exp(a * u);
    }
    return 0.0;
}

double InitialComponent::faded(double u, double r) const {
    switch (family) {
        case Family::Exponential:
            return c * std::exp((a + r) * u);
        case Family::Linear:
            return c * u * std::exp(r * u);
        case Family::PolyExp:
            return c * (u * u + 1.0) * std::exp((a + r) * u);
    }
    return 0.0;
}

std::string InitialComponent::describe() const {
    std::ostringstream os;
    os.precision(15);
    switch (family) {
        case Family::Exponential:
            os << "exp(" << c << "," << a << ")";
            break;
        case Family::Linear:
            os << "lin(" << c << ")";
            break;
        case Family::PolyExp:
            os << "polyexp(" << c << "," << a << ")";
            break;
    }
    return os.str();
}

InitialData::InitialData(std::vector<InitialComponent> components)
    : dim_(components.size()), components_(std::move(components)) {
    if (dim_ == 0) {
        throw DomainError("initial datum needs at least one component");
    }
}

InitialData::InitialData(std::size_t dim, Sampler sampler, std::string label)
    : dim_(dim), sampler_(std::move(sampler)), label_(std::move(label)) {
    if (dim_ == 0 || !sampler_) {
        throw DomainError("initial datum needs a dimension and a sampler");
    }
}

InitialData InitialData::constant(std::vector<double> values) {
    std::vector<InitialComponent> comps;
    comps.reserve(values.size());
    for (double v : values) {
        comps.push_back({InitialComponent::Family::Exponential, v, 0.0});
    }
    return InitialData(std::move(comps));
}

void InitialData::evaluate(double u, std::span<double> out) const {
    if (out.size() != dim_) {
        throw DimensionMismatch("initial datum output has wrong dimension");
    }
    if (sampler_) {
        sampler_(u, out);
        return;
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        out[i] = components_[i].value(u);
    }
}

std::vector<double> InitialData::operator()(double u) const {
    std::vector<double> out(dim_);
    evaluate(u, out);
    return out;
}

bool InitialData::in_phase_space(double r, int k) const {
    if (!sampler_) {
        // exp(r u) xi(u) has a limit at -inf iff each exponent r + a is
        // nonnegative (c u always fades for r > 0).
        for (const auto& c : components_) {
            if (!std::isfinite(c.c) || !std::isfinite(c.a)) {
                return false;
            }
            if (c.c != 0.0 && c.family != InitialComponent::Family::Linear && r + c.a < 0.0) {
                return false;
            }
            if (c.c != 0.0 && c.family == InitialComponent::Family::PolyExp && r + c.a == 0.0) {
                return false;
            }
        }
        return r > 0.0;
    }
    const double u1 = -std::max(10.0 * k, 200.0);
    const double u2 = 2.0 * u1;
    std::vector<double> x1(dim_), x2(dim_);
    evaluate(u1, x1);
    evaluate(u2, x2);
    for (std::size_t i = 0; i < dim_; ++i) {
        x1[i] *= std::exp(r * u1);
        x2[i] *= std::exp(r * u2);
        if (!std::isfinite(x1[i]) || !std::isfinite(x2[i]) || std::abs(x1[i] - x2[i]) > 1e-6) {
            return false;
        }
    }
    return true;
}

std::string InitialData::describe() const {
    if (sampler_) {
        return label_;
    }
    std::string out;
    for (std::size_t i = 0; i < components_.size(); ++i) {
        if (i) out += ",";
        out += components_[i].describe();
    }
    return out;
}

// =============================================================================
// Segment operations
// =============================================================================

Segment from_initial(const InitialData& xi, int k, int l, double fading_rate) {
    if (!xi.in_phase_space(fading_rate, k)) {
        throw NotInPhaseSpace("initial datum " + xi.describe() + " is not in C_r for r = " +
                              std::to_string(fading_rate));
    }
    Segment s(xi.dim(), k, l, fading_rate);
    std::vector<double> value(xi.dim());
    for (std::size_t i = 0; i < s.size(); ++i) {
        xi.evaluate(s.node_time(i), value);
        s.set_node(i, value);
    }
    return s;
}

void interpolate(const Segment& s, double u, std::span<double> out) {
    if (out.size() != s.dim()) {
        throw DimensionMismatch("interpolation output has wrong dimension");
    }
    const int k = s.horizon();
    if (u <= -k) {
        const auto v = s.oldest();
        std::copy(v.begin(), v.end(), out.begin());
        return;
    }
    if (u >= 0.0) {
        const auto v = s.newest();
        std::copy(v.begin(), v.end(), out.begin());
        return;
    }
    double pos = (u + k) * s.resolution();
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) {
        pos = nearest;
    }
    const auto last = s.size() - 1;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= last) {
        const auto v = s.newest();
        std::copy(v.begin(), v.end(), out.begin());
        return;
    }
    const double frac = pos - static_cast<double>(i);
    const auto lo = s.node(i);
    if (frac == 0.0) {
        std::copy(lo.begin(), lo.end(), out.begin());
        return;
    }
    const auto hi = s.node(i + 1);
    for (std::size_t c = 0; c < s.dim(); ++c) {
        out[c] = (1.0 - frac) * lo[c] + frac * hi[c];
    }
}

std::vector<double> interpolate(const Segment& s, double u) {
    std::vector<double> out(s.dim());
    interpolate(s, u, out);
    return out;
}

double norm_r(const Segment& s) {
    const auto w = s.norm_weights();
    const std::size_t n = s.dim();
    double best = 0.0;
    s.for_each_run([&](std::size_t first, std::span<const double> run) {
        const std::size_t count = run.size() / n;
        for (std::size_t j = 0; j < count; ++j) {
            const double v = w[first + j] * euclidean(run.subspan(j * n, n));
            best = std::max(best, v);
        }
    });
    return best;
}

double distance_r(const Segment& a, const Segment& b) {
    if (a.dim() != b.dim() || a.size() != b.size() || a.resolution() != b.resolution()) {
        throw DimensionMismatch("segments live on different grids");
    }
    const auto w = a.norm_weights();
    const std::size_t n = a.dim();
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a.node(i);
        const auto y = b.node(i);
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double d = x[c] - y[c];
            s += d * d;
        }
        best = std::max(best, w[i] * std::sqrt(s));
    }
    return best;
}

Segment clip_segment(const Segment& s, double radius) {
    if (!(radius > 0.0)) {
        throw DomainError("clip radius must be positive");
    }
    Segment out(s.dim(), s.horizon(), s.resolution(), s.fading_rate());
    std::vector<double> buf(s.dim());
    for (std::size_t i = 0; i < s.size(); ++i) {
        pi_delta(s.node(i), radius, buf);
        out.set_node(i, buf);
    }
    return out;
}

Segment subsample(const Segment& s, int stride, int horizon) {
    if (stride <= 0 || s.resolution() % stride != 0) {
        throw DomainError("subsample stride must divide the resolution");
    }
    const int k = horizon == 0 ? s.horizon() : horizon;
    if (k <= 0 || k > s.horizon()) {
        throw DomainError("subsample window exceeds the segment horizon");
    }
    Segment out(s.dim(), k, s.resolution() / stride, s.fading_rate());
    const std::size_t last = s.size() - 1;
    const std::size_t out_last = out.size() - 1;
    for (std::size_t j = 0; j <= out_last; ++j) {
        // Count back from the newest node so both grids share u = 0.
        const std::size_t back = (out_last - j) * static_cast<std::size_t>(stride);
        out.set_node(j, s.node(last - back));
    }
    return out;
}

void write_segment_csv(std::ostream& os, const Segment& s, double time_offset) {
    os << "t";
    for (std::size_t c = 0; c < s.dim(); ++c) {
        os << ",x" << (c + 1);
    }
    os << "\n";
    const auto old_precision = os.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << s.node_time(i) + time_offset;
        for (double v : s.node(i)) {
            os << "," << v;
        }
        os << "\n";
    }
    os.precision(old_precision);
}

}  // namespace tem
