#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tem/errors.hpp"
#include "tem/models.hpp"
#include "tem/noise.hpp"
#include "tem/segment.hpp"
#include "tem/truncation.hpp"

namespace tem {

/// Grid, horizon and truncation for one run of the scheme.
struct SchemeConfig {
    int k = 12;
    int l = 16;
    double horizon = 10.0;
    double fading_rate = 0.3;
    TruncationPolicy policy = TruncationPolicy::classical();
    /// Multiples of 1/l in [0, horizon] at which snapshots are taken.
    std::vector<double> record_times;
    bool keep_segments = false;
    /// Stop a path once |X(t)|^2 exceeds this value.
    std::optional<double> ceiling;
    /// Verify |node| <= clip radius after every step (throws DomainError).
    bool check_invariants = false;
    /// Extra scalar observable recorded with each snapshot.
    std::function<double(const Segment&)> observable;

    double step() const { return 1.0 / l; }
    /// horizon * l; ConfigError when not an integer.
    std::int64_t steps() const;
    /// Record times converted to step indices, validated.
    std::vector<std::int64_t> record_steps() const;
    /// Throws ConfigError with every problem found.
    void validate() const;

    /// 0, every, 2 every, ..., horizon.
    static std::vector<double> uniform_times(double horizon, double every);
};

struct Snapshot {
    double t = 0.0;
    double norm = 0.0;
    std::vector<double> head;
    double observable = 0.0;
    std::optional<Segment> segment;

    bool operator==(const Snapshot&) const = default;
};

struct PathRecord {
    std::uint32_t path_index = 0;
    std::vector<Snapshot> snapshots;
    double clip_radius = 0.0;
    std::int64_t steps_taken = 0;
    /// Steps after which some component of X(t) was negative.
    std::int64_t negative_steps = 0;
    bool exceeded_ceiling = false;
    double exceed_time = 0.0;
    bool aborted = false;
    std::string abort_reason;

    bool operator==(const PathRecord&) const = default;
};

/// A path hit a non-finite update. Carries where it happened.
class PathAborted : public NonFiniteValue {
public:
    PathAborted(std::uint32_t path_index, std::int64_t step, double t, const std::string& what);
    std::uint32_t path_index() const { return path_; }
    std::int64_t step() const { return step_; }
    double time() const { return t_; }

private:
    std::uint32_t path_;
    std::int64_t step_;
    double t_;
};

/// Advances one truncated Euler-Maruyama path in place:
///   Y = X(t_j) + f(X_{t_j}) dt + g(X_{t_j}) dB_j,   X(t_{j+1}) = Pi(Y).
/// The only per-path state is the Segment ring buffer. One per worker.
class TemStepper {
public:
    /// `initial` must already be clipped to `radius`.
    TemStepper(const SfdeModel& model, Segment initial, double radius);

    /// NonFiniteValue when Y is not finite.
    void step(std::span<const double> dB);

    const Segment& segment() const { return segment_; }
    double radius() const { return radius_; }
    /// Y before clipping from the last step.
    std::span<const double> last_unclipped() const { return y_; }

private:
    const SfdeModel& model_;
    Segment segment_;
    double radius_;
    double dt_;
    FeatureEvaluator features_;
    std::vector<double> f_;
    std::vector<double> g_;
    std::vector<double> y_;
    std::vector<double> x_;
};

/// One step on a copy of `seg`; `seg` must satisfy |node| <= radius.
Segment tem_step(const Segment& seg, const SfdeModel& model, double radius, std::span<const double> dB, double dt);

/// from_initial followed by the radial clip of every node.
Segment initial_segment(const InitialData& xi, const SchemeConfig& cfg);

/// Runs horizon * l steps. Throws PathAborted on a non-finite update.
PathRecord simulate_path(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                         const NoiseStream& stream);

struct CoupledRecord {
    PathRecord first;
    PathRecord second;
    /// ||X^xi_t - X^eta_t||_r at each record time.
    std::vector<double> distance;
};

/// Two paths from xi and eta. With `second_stream` unset both use `stream`
/// (synchronous coupling); otherwise eta is driven independently.
CoupledRecord simulate_coupled(const SfdeModel& model, const SchemeConfig& cfg, const InitialData& xi,
                               const InitialData& eta, const NoiseStream& stream,
                               const NoiseStream* second_stream = nullptr);

struct RefinedPair {
    PathRecord coarse;
    PathRecord fine;
};

/// Coarse run at 1/l_coarse and fine run at 1/(m l_coarse) on the same
/// Brownian path, each keeping its segment at the horizon. The fine run may
/// use a longer memory window `k_fine` (0 means k).
RefinedPair simulate_refined_pair(const SfdeModel& model, int k, int l_coarse, int m, double horizon,
                                  const InitialData& xi, const NoiseStream& stream, const TruncationPolicy& policy,
                                  double fading_rate, int k_fine = 0);

enum class ErrorGrid {
    Coarse,  ///< subsample the fine segment onto the coarse nodes
    Fine,    ///< interpolate the coarse segment onto the fine nodes
};

/// ||coarse - fine||_r over the coarse window [-k, 0]; both segments end at
/// the same time and the fine resolution is a multiple of the coarse one.
double segment_error(const Segment& coarse, const Segment& fine, ErrorGrid grid = ErrorGrid::Fine);

}  // namespace tem
