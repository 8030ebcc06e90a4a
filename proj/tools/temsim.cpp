// temsim: config-driven runner for truncated Euler-Maruyama experiments.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tem/errors.hpp"
#include "tem/experiment.hpp"

namespace fs = std::filesystem;

namespace {

fs::path preset_path(const std::string& name) {
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("TEMSIM_PRESET_DIR")) {
        dirs.emplace_back(env);
    }
    dirs.emplace_back("presets");
#ifdef TEMSIM_PRESET_DIR
    dirs.emplace_back(TEMSIM_PRESET_DIR);
#endif
    for (const auto& d : dirs) {
        const fs::path p = d / (name + ".cfg");
        if (fs::exists(p)) {
            return p;
        }
    }
    throw tem::ConfigError("unknown preset '" + name + "' (no " + name + ".cfg in the preset directories)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run truncated Euler-Maruyama experiments for SFDEs with infinite memory"};
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
    bool check = false;
    bool validate_only = false;

    auto* cfg_opt = app.add_option("--config", config_path, "Experiment config file");
    auto* preset_opt = app.add_option("--preset", preset, "Shipped preset name (e.g. rate-cubic)");
    cfg_opt->excludes(preset_opt);
    app.add_option("--out", out_dir, "Output directory (overrides the config)");
    app.add_option("--workers", workers, "Worker threads (0 = all cores)");
    app.add_option("--seed", seed, "Master seed (overrides the config)");
    app.add_flag("--check", check, "Apply the experiment's acceptance thresholds; exit 3 on failure");
    app.add_flag("--validate-only", validate_only, "Validate the config and print the resolved settings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : tem::kExitConfigError;
    }

    tem::ValidatedConfig vc;
    try {
        if (config_path.empty() && preset.empty()) {
            throw tem::ConfigError("one of --config or --preset is required");
        }
        const fs::path path = config_path.empty() ? preset_path(preset) : fs::path(config_path);
        vc = tem::validate(tem::read_config_file(path));
    } catch (const tem::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return tem::kExitConfigError;
    } catch (const tem::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return tem::kExitConfigError;
    }
    if (seed) {
        vc.config.seed = *seed;
        for (auto& [k, v] : vc.resolved) {
            if (k == "seed") v = std::to_string(*seed);
        }
    }
    if (workers) {
        vc.config.workers = *workers;
    }
    for (const auto& w : vc.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    if (validate_only) {
        for (const auto& [k, v] : vc.resolved) std::cout << k << " = " << v << '\n';
        for (const auto& [l, r] : vc.clip_radii) std::cout << "clip_radius.l=" << l << " = " << r << '\n';
        if (vc.dissipativity) std::cout << "dissipativity = " << vc.dissipativity->summary() << '\n';
        return tem::kExitOk;
    }

    fs::path out = out_dir.empty() ? fs::path(vc.config.out) : fs::path(out_dir);
    if (out.is_relative()) {
        if (const char* root = std::getenv("TEMSIM_OUTPUT_ROOT")) {
            out = fs::path(root) / out;
        }
    }

    try {
        const tem::RunResult res = tem::run(vc, out, check);
        for (const auto& line : res.check_lines) std::cout << line << '\n';
        std::cout << "wrote " << out.string() << '\n';
        return res.status;
    } catch (const tem::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return tem::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "simulation error: " << e.what() << '\n';
        return tem::kExitSimulationError;
    }
}
