#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tem/analysis.hpp"
#include "tem/models.hpp"
#include "tem/scheme.hpp"
#include "tem/segment.hpp"
#include "tem/truncation.hpp"

namespace tem {

inline constexpr const char* kConfigSchema = "temsim-config/1";

enum class ExperimentKind { Rate, ErgodicScan, IpmProbe, DeltaRefinement, EmBlowup, SinglePath };

std::string to_string(ExperimentKind kind);
/// ConfigError for unknown names.
ExperimentKind parse_experiment_kind(const std::string& name);

/// Raw `key = value` entries in file order. Lines starting with '#' and
/// blank lines are ignored; trailing '# ...' comments are stripped.
struct ConfigFile {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string text;  ///< the bytes that were parsed

    std::optional<std::string> get(const std::string& key) const;
};

/// ConfigError (listing every malformed line) on syntax errors or duplicate keys.
ConfigFile parse_config_text(const std::string& text);
ConfigFile read_config_file(const std::filesystem::path& path);

/// A fully resolved experiment description.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::SinglePath;
    std::string model = "cubic-example1";
    std::map<std::string, double> model_params;
    TruncationPolicy policy = TruncationPolicy::classical();
    double fading_rate = 0.3;
    int k = 12;
    int l = 16;
    std::vector<int> l_list;
    int l_ref = 128;
    int k_ref = 0;
    double horizon = 10.0;
    double record_every = 1.0;
    std::vector<InitialData> initial;
    std::size_t eta = 1;   ///< index into `initial` of the second datum (ipm-probe)
    std::size_t paths = 1;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::string out = "out";
    std::vector<std::string> functionals{"cos_norm", "norm_min_2"};
    double t_star = 20.0;
    double ceiling = 1e6;
    int l_em = 2;
    ErrorGrid grid = ErrorGrid::Fine;
    std::size_t bootstrap = 500;
};

struct ValidatedConfig {
    ExperimentConfig config;
    std::vector<std::string> warnings;
    /// Clip radius for every resolution the experiment uses.
    std::vector<std::pair<int, double>> clip_radii;
    std::optional<DissipativityReport> dissipativity;
    /// Normalized `key = value` lines (defaults filled in), for the manifest.
    std::vector<std::pair<std::string, std::string>> resolved;
    std::uint64_t checksum = 0;  ///< FNV-1a 64 of the config bytes
};

/// Resolves presets and defaults and checks every cross-field constraint
/// without running anything. Throws one ConfigError listing all problems.
ValidatedConfig validate(const ConfigFile& file);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(const std::string& bytes);

/// Parses "tem" test functional names: norm, cos_norm, norm_min_<c>,
/// poly(c0,c1,...). ConfigError otherwise.
TestFunctional parse_functional(const std::string& spec);

/// Parses initial data: components exp(c,a), lin(c), polyexp(c,a) or
/// const(c), comma-separated within one datum; data separated by ';'.
std::vector<InitialData> parse_initial_data(const std::string& spec);

enum ExitStatus : int {
    kExitOk = 0,
    kExitConfigError = 1,
    kExitSimulationError = 2,
    kExitAcceptanceFailure = 3,
};

struct RunResult {
    int status = kExitOk;
    std::vector<std::string> check_lines;  ///< "PASS ..." / "FAIL ..." in --check mode
    std::vector<std::filesystem::path> written;
};

/// Runs the experiment and writes manifest.txt, samples.csv and summary.csv
/// (plus path.csv and segment.csv for single-path runs) into `out_dir`.
/// With `check`, the experiment's acceptance thresholds decide the status.
/// Simulation errors propagate as exceptions.
RunResult run(const ValidatedConfig& cfg, const std::filesystem::path& out_dir, bool check);

}  // namespace tem
