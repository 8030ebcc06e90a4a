#include "tem/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tem/errors.hpp"

namespace tem {

namespace {

double squared_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return s;
}

bool any_negative(std::span<const double> x) {
    return std::any_of(x.begin(), x.end(), [](double v) { return v < 0.0; });
}

Snapshot take_snapshot(const Segment& s, double t, const SchemeConfig& cfg) {
    Snapshot snap;
    snap.t = t;
    snap.norm = norm_r(s);
    const auto head = s.newest();
    snap.head.assign(head.begin(), head.end());
    if (cfg.observable) {
        snap.observable = cfg.observable(s);
    }
    if (cfg.keep_segments) {
        snap.segment = s;
    }
    return snap;
}

void check_clipped(const Segment& s, double radius, std::int64_t step) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::sqrt(squared_norm(s.node(i))) > radius) {
            throw DomainError("clipped-state invariant violated after step " + std::to_string(step));
        }
    }
}

// Walks record steps in order alongside the time loop.
class RecordCursor {
public:
    explicit RecordCursor(std::vector<std::int64_t> steps) : steps_(std::move(steps)) {}
    bool due(std::int64_t step) {
        if (next_ < steps_.size() && steps_[next_] == step) {
            ++next_;
            return true;
        }
        return false;
    }

private:
    std::vector<std::int64_t> steps_;
    std::size_t next_ = 0;
};

}  // namespace

// =============================================================================
// SchemeConfig
// =============================================================================

std::int64_t SchemeConfig::steps() const {
    if (l <= 0) {
        throw ConfigError("l must be positive");
    }
    const double n = horizon * l;
    const double rounded = std::round(n);
    if (!(horizon >= 0.0) || std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
        throw ConfigError("horizon T * l must be a nonnegative integer");
    }
    return static_cast<std::int64_t>(rounded);
}

std::vector<std::int64_t> SchemeConfig::record_steps() const {
    const std::int64_t total = steps();
    std::vector<std::int64_t> out;
    out.reserve(record_times.size());
    for (double t : record_times) {
        const double n = t * l;
        const double rounded = std::round(n);
        if (std::abs(n - rounded) > 1e-9 * std::max(1.0, std::abs(n))) {
            throw ConfigError("record time " + std::to_string(t) + " is not a multiple of 1/l");
        }
        const auto step = static_cast<std::int64_t>(rounded);
        if (step < 0 || step > total) {
            throw ConfigError("record time " + std::to_string(t) + " is outside [0, T]");
        }
        out.push_back(step);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void SchemeConfig::validate() const {
    std::vector<std::string> problems;
    if (k <= 0) problems.emplace_back("k must be positive");
    if (l <= 0) problems.emplace_back("l must be positive");
    if (!(fading_rate > 0.0)) problems.emplace_back("fading rate r must be positive");
    if (problems.empty()) {
        try {
            (void)record_steps();
        } catch (const ConfigError& e) {
            problems.emplace_back(e.what());
        }
        try {
            (void)policy.clip_radius(l);
        } catch (const ConfigError& e) {
            problems.emplace_back(e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid scheme configuration:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ConfigError(msg);
    }
}

std::vector<double> SchemeConfig::uniform_times(double horizon, double every) {
    if (!(every > 0.0)) {
        throw ConfigError("record spacing must be positive");
    }
    std::vector<double> out;
    const auto count = static_cast<std::int64_t>(std::floor(horizon / every + 1e-9));
    for (std::int64_t i = 0; i <= count; ++i) {
        out.push_back(static_cast<double>(i) * every);
    }
    return out;
}

PathAborted::PathAborted(std::uint32_t path_index, std::int64_t step, double t, const std::string& what)
    : NonFiniteValue("path " + std::to_string(path_index) + " aborted at step " + std::to_string(step) +
                     " (t = " + std::to_string(t) + "): " + what),
      path_(path_index),
      step_(step),
      t_(t) {}

// =============================================================================
// Stepping
// =============================================================================

TemStepper::TemStepper(const SfdeModel& model, Segment initial, double radius)
    : model_(model),
      segment_(std::move(initial)),
      radius_(radius),
      dt_(1.0 / segment_.resolution()),
      features_(model, segment_.horizon(), segment_.resolution()),
      f_(model.dim()),
      g_(model.dim() * model.noise_dim()),
      y_(model.dim()),
      x_(model.dim()) {
    if (segment_.dim() != model.dim()) {
        throw DimensionMismatch("initial segment dimension does not match the model");
    }
}

void TemStepper::step(std::span<const double> dB) {
    const std::size_t n = model_.dim();
    const std::size_t d = model_.noise_dim();
    if (dB.size() != d) {
        throw DimensionMismatch("Brownian increment has wrong dimension");
    }
    const auto& x = features_.evaluate(segment_);
    model_.drift(x, f_);
    model_.diffusion(x, g_);
    for (std::size_t i = 0; i < n; ++i) {
        double y = x.current[i] + f_[i] * dt_;
        for (std::size_t j = 0; j < d; ++j) {
            y += g_[i * d + j] * dB[j];
        }
        if (!std::isfinite(y)) {
            throw NonFiniteValue("non-finite update in component " + std::to_string(i));
        }
        y_[i] = y;
    }
    pi_delta(y_, radius_, x_);
    segment_.shift_append(x_);
}

Segment tem_step(const Segment& seg, const SfdeModel& model, double radius, std::span<const double> dB, double dt) {
    const std::size_t n = model.dim();
    const std::size_t d = model.noise_dim();
    if (dB.size() != d) {
        throw DimensionMismatch("Brownian increment has wrong dimension");
    }
    FeatureEvaluator eval(model, seg.horizon(), seg.resolution());
    const auto& x = eval.evaluate(seg);
    std::vector<double> f(n), g(n * d), y(n);
    model.drift(x, f);
    model.diffusion(x, g);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x.current[i] + f[i] * dt;
        for (std::size_t j = 0; j < d; ++j) {
            v += g[i * d + j] * dB[j];
        }
        if (!std::isfinite(v)) {
            throw NonFiniteValue("non-finite update in component " + std::to_string(i));
        }
        y[i] = v;
    }
    Segment out = seg;
    out.shift_append(pi_delta(y, radius));
    return out;
}

Segment initial_segment(const InitialData& xi, const SchemeConfig& cfg) {
    const double radius = cfg.policy.clip_radius(cfg.l);
    Segment s = from_initial(xi, cfg.k, cfg.l, cfg.fading_rate);
    if (std::isinf(radius)) {
        return s;
    }
    return clip_segment(s, radius);
}

// =============================================================================
// Paths
// =============================================================================

PathRecord simulate_path(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                         const NoiseStream& stream) {
    cfg.validate();
    if (xi.dim() != model.dim() || stream.dim() != model.noise_dim()) {
        throw DimensionMismatch("initial datum or noise dimension does not match the model");
    }
    const double radius = cfg.policy.clip_radius(cfg.l);
    const std::int64_t total = cfg.steps();
    RecordCursor cursor(cfg.record_steps());

    PathRecord rec;
    rec.path_index = stream.path_index();
    rec.clip_radius = radius;

    TemStepper stepper(model, initial_segment(xi, cfg), radius);
    std::vector<double> dB(model.noise_dim());
    if (cursor.due(0)) {
        rec.snapshots.push_back(take_snapshot(stepper.segment(), 0.0, cfg));
    }
    for (std::int64_t j = 0; j < total; ++j) {
        stream.increment(j, cfg.l, dB);
        try {
            stepper.step(dB);
        } catch (const NonFiniteValue& e) {
            throw PathAborted(rec.path_index, j, static_cast<double>(j) / cfg.l, e.what());
        }
        rec.steps_taken = j + 1;
        const double t = static_cast<double>(j + 1) / cfg.l;
        const auto head = stepper.segment().newest();
        if (any_negative(head)) {
            ++rec.negative_steps;
        }
        if (cfg.check_invariants) {
            check_clipped(stepper.segment(), radius, j + 1);
        }
        if (cursor.due(j + 1)) {
            rec.snapshots.push_back(take_snapshot(stepper.segment(), t, cfg));
        }
        if (cfg.ceiling && squared_norm(head) > *cfg.ceiling) {
            rec.exceeded_ceiling = true;
            rec.exceed_time = t;
            break;
        }
    }
    return rec;
}

CoupledRecord simulate_coupled(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                               const InitialData& eta, const NoiseStream& stream, const NoiseStream* second_stream) {
    cfg.validate();
    if (xi.dim() != model.dim() || eta.dim() != model.dim() || stream.dim() != model.noise_dim()) {
        throw DimensionMismatch("initial datum or noise dimension does not match the model");
    }
    const double radius = cfg.policy.clip_radius(cfg.l);
    const std::int64_t total = cfg.steps();
    RecordCursor cursor(cfg.record_steps());

    CoupledRecord out;
    out.first.path_index = stream.path_index();
    out.second.path_index = second_stream ? second_stream->path_index() : stream.path_index();
    out.first.clip_radius = out.second.clip_radius = radius;

    TemStepper a(model, initial_segment(xi, cfg), radius);
    TemStepper b(model, initial_segment(eta, cfg), radius);
    std::vector<double> dB(model.noise_dim());
    std::vector<double> dB2(model.noise_dim());

    auto record = [&](double t) {
        out.first.snapshots.push_back(take_snapshot(a.segment(), t, cfg));
        out.second.snapshots.push_back(take_snapshot(b.segment(), t, cfg));
        out.distance.push_back(distance_r(a.segment(), b.segment()));
    };
    if (cursor.due(0)) {
        record(0.0);
    }
    for (std::int64_t j = 0; j < total; ++j) {
        stream.increment(j, cfg.l, dB);
        if (second_stream) {
            second_stream->increment(j, cfg.l, dB2);
        }
        const double t_now = static_cast<double>(j) / cfg.l;
        try {
            a.step(dB);
        } catch (const NonFiniteValue& e) {
            throw PathAborted(out.first.path_index, j, t_now, e.what());
        }
        try {
            b.step(second_stream ? std::span<const double>(dB2) : std::span<const double>(dB));
        } catch (const NonFiniteValue& e) {
            throw PathAborted(out.second.path_index, j, t_now, e.what());
        }
        out.first.steps_taken = out.second.steps_taken = j + 1;
        if (any_negative(a.segment().newest())) ++out.first.negative_steps;
        if (any_negative(b.segment().newest())) ++out.second.negative_steps;
        if (cursor.due(j + 1)) {
            record(static_cast<double>(j + 1) / cfg.l);
        }
    }
    return out;
}

RefinedPair simulate_refined_pair(const SfdeModel& model, int k, int l_coarse, int m, double horizon,
                                  const InitialData& xi, const NoiseStream& stream, const TruncationPolicy& policy,
                                  double fading_rate, int k_fine) {
    if (m <= 0) {
        throw ConfigError("refinement factor must be a positive integer");
    }
    SchemeConfig coarse;
    coarse.k = k;
    coarse.l = l_coarse;
    coarse.horizon = horizon;
    coarse.fading_rate = fading_rate;
    coarse.policy = policy;
    coarse.record_times = {horizon};
    coarse.keep_segments = true;

    SchemeConfig fine = coarse;
    fine.k = k_fine == 0 ? k : k_fine;
    fine.l = l_coarse * m;
    if (fine.k < k) {
        throw ConfigError("fine memory window must cover the coarse one");
    }
    if (stream.base_resolution() % fine.l != 0) {
        throw ConfigError("noise base resolution must be a multiple of the fine resolution");
    }
    return {simulate_path(model, coarse, xi, stream), simulate_path(model, fine, xi, stream)};
}

double segment_error(const Segment& coarse, const Segment& fine, ErrorGrid grid) {
    if (coarse.dim() != fine.dim() || fine.resolution() % coarse.resolution() != 0 ||
        fine.horizon() < coarse.horizon()) {
        throw DimensionMismatch("fine segment does not refine the coarse one");
    }
    const int stride = fine.resolution() / coarse.resolution();
    if (grid == ErrorGrid::Coarse) {
        return distance_r(coarse, subsample(fine, stride, coarse.horizon()));
    }
    const double r = coarse.fading_rate();
    const std::size_t n = coarse.dim();
    const std::size_t fine_last = fine.size() - 1;
    const std::size_t window = static_cast<std::size_t>(coarse.horizon()) * fine.resolution();
    std::vector<double> interp(n);
    double best = 0.0;
    for (std::size_t back = 0; back <= window; ++back) {
        const std::size_t i = fine_last - back;
        const double u = fine.node_time(i);
        interpolate(coarse, u, interp);
        const auto x = fine.node(i);
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double d = interp[c] - x[c];
            s += d * d;
        }
        best = std::max(best, std::exp(r * u) * std::sqrt(s));
    }
    return best;
}

}  // namespace tem
