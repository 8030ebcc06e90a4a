#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "tem/errors.hpp"
#include "tem/experiment.hpp"

using namespace tem;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string config_error(const std::string& text) {
    try {
        validate(parse_config_text(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("tem_exp_" + std::to_string(::getpid()) + "_" +
                                                   std::to_string(counter_++))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TEMSIM_BINARY) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

const std::string kSingle =
    "schema = temsim-config/1\nexperiment = single-path\nmodel = cubic-example1\nk = 2\nl = 4\nT = 1\n"
    "record_every = 1/4\n";

}  // namespace

TEST(ConfigText, ParsesKeysAndComments) {
    const auto f = parse_config_text("# header\nk = 3  # trailing\n\n  l=8\n");
    ASSERT_EQ(f.entries.size(), 2u);
    EXPECT_EQ(f.get("k"), "3");
    EXPECT_EQ(f.get("l"), "8");
    EXPECT_FALSE(f.get("T").has_value());
}

TEST(ConfigText, ReportsEveryBadLine) {
    try {
        parse_config_text("k = 1\nnonsense\nk = 2\n = 4\n");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos);
        EXPECT_NE(msg.find("duplicate key 'k'"), std::string::npos);
        EXPECT_NE(msg.find("line 4"), std::string::npos);
    }
}

TEST(Validate, MissingSchemaAndUnknownKey) {
    const auto msg = config_error("experiment = single-path\nbogus = 1\n");
    EXPECT_NE(msg.find("schema: missing"), std::string::npos);
    EXPECT_NE(msg.find("unknown key 'bogus'"), std::string::npos);
}

TEST(Validate, ReferenceLevelMustBeAMultiple) {
    const auto msg = config_error(
        "schema = temsim-config/1\nexperiment = rate\nmodel = cubic-example1\nl_list = 8, 12\nl_ref = 128\n");
    EXPECT_NE(msg.find("l_ref = 128 is not a multiple of l = 12"), std::string::npos) << msg;
}

TEST(Validate, GridAndPhaseSpaceProblems) {
    const auto msg = config_error(kSingle + "initial = exp(1, -1)\n");
    EXPECT_NE(msg.find("not in C_r"), std::string::npos) << msg;
    const auto grid = config_error(
        "schema = temsim-config/1\nexperiment = single-path\nl = 4\nT = 1.1\n");
    EXPECT_NE(grid.find("T"), std::string::npos) << grid;
    const auto dim = config_error(kSingle + "initial = const(1), const(2)\n");
    EXPECT_NE(dim.find("dimension"), std::string::npos) << dim;
    const auto theta = config_error(kSingle + "policy.theta = 0.7\n");
    EXPECT_NE(theta.find("theta"), std::string::npos) << theta;
}

TEST(Validate, CubicPresetIsValidWithMargins) {
    const auto vc = validate(read_config_file(fs::path(TEMSIM_PRESETS) / "ergodic-cubic.cfg"));
    EXPECT_EQ(vc.config.kind, ExperimentKind::ErgodicScan);
    EXPECT_TRUE(vc.warnings.empty());
    ASSERT_TRUE(vc.dissipativity.has_value());
    EXPECT_TRUE(vc.dissipativity->passed);
    EXPECT_EQ(vc.dissipativity->margin(), 5.0);
    ASSERT_EQ(vc.clip_radii.size(), 1u);
    EXPECT_EQ(vc.clip_radii[0].first, 16);
    EXPECT_GT(vc.clip_radii[0].second, 1.0);
    EXPECT_EQ(vc.config.paths, 2000u);
    EXPECT_EQ(vc.config.initial.size(), 3u);
}

TEST(Validate, EveryShippedPresetIsValid) {
    for (const auto& entry : fs::directory_iterator(TEMSIM_PRESETS)) {
        EXPECT_NO_THROW(validate(read_config_file(entry.path()))) << entry.path();
    }
}

TEST(Validate, ConstantPolicyWithIpmProbeWarns) {
    const auto vc = validate(parse_config_text(
        "schema = temsim-config/1\nexperiment = ipm-probe\nmodel = cubic-example1\npolicy = constant\n"));
    bool found = false;
    for (const auto& w : vc.warnings) found |= w.find("constant policy") != std::string::npos;
    EXPECT_TRUE(found);
}

TEST(Validate, HalfThetaWithLongRunWarns) {
    const auto vc = validate(parse_config_text(
        "schema = temsim-config/1\nexperiment = ergodic-scan\nmodel = cubic-example1\npolicy.theta = 0.5\n"));
    ASSERT_EQ(vc.warnings.size(), 1u);
    EXPECT_NE(vc.warnings[0].find("theta = 1/2"), std::string::npos);
}

TEST(Validate, PureAndIdempotent) {
    const auto file = parse_config_text(kSingle);
    const auto a = validate(file);
    const auto b = validate(file);
    EXPECT_EQ(a.resolved, b.resolved);
    EXPECT_EQ(a.warnings, b.warnings);
    EXPECT_EQ(a.checksum, b.checksum);
    EXPECT_EQ(a.checksum, fnv1a64(kSingle));
}

TEST(Fnv1a, KnownValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(ParseFunctional, Names) {
    EXPECT_EQ(parse_functional("norm").apply(2.0), 2.0);
    EXPECT_EQ(parse_functional("norm_min_3").apply(5.0), 3.0);
    EXPECT_EQ(parse_functional("poly(1, 2)").apply(3.0), 7.0);
    EXPECT_THROW(parse_functional("sin_norm"), ConfigError);
}

TEST(ParseInitialData, Components) {
    const auto data = parse_initial_data("exp(1, 0.2); lin(-2), const(3); polyexp(0.5, 0.1)");
    ASSERT_EQ(data.size(), 3u);
    EXPECT_EQ(data[0].dim(), 1u);
    EXPECT_EQ(data[1].dim(), 2u);
    EXPECT_EQ(data[1](-1.0), (std::vector<double>{2.0, 3.0}));
    EXPECT_DOUBLE_EQ(data[2](0.0)[0], 0.5);
    EXPECT_THROW(parse_initial_data("sin(1)"), ConfigError);
    EXPECT_THROW(parse_initial_data(""), ConfigError);
}

TEST(Run, SinglePathZeroHorizonWritesOneRow) {
    TempDir tmp;
    const auto vc = validate(parse_config_text(
        "schema = temsim-config/1\nexperiment = single-path\nk = 2\nl = 4\nT = 0\n"));
    const auto res = run(vc, tmp.path(), false);
    EXPECT_EQ(res.status, kExitOk);
    EXPECT_EQ(count_lines(slurp(tmp.path() / "path.csv")), 2u);
    EXPECT_EQ(count_lines(slurp(tmp.path() / "segment.csv")), 10u);
    for (const char* f : {"manifest.txt", "samples.csv", "summary.csv"}) EXPECT_TRUE(fs::exists(tmp.path() / f));
}

TEST(Run, SameConfigGivesIdenticalBytes) {
    TempDir tmp;
    const auto vc = validate(parse_config_text(kSingle + "seed = 17\n"));
    run(vc, tmp.path() / "a", false);
    run(vc, tmp.path() / "b", false);
    for (const char* f : {"manifest.txt", "samples.csv", "summary.csv", "path.csv", "segment.csv"}) {
        EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
    }
}

TEST(Run, ManifestCarriesChecksumAndLeavesConfigAlone) {
    TempDir tmp;
    const fs::path cfg = tmp.path() / "run.cfg";
    { std::ofstream(cfg, std::ios::binary) << kSingle; }
    const auto vc = validate(read_config_file(cfg));
    run(vc, tmp.path() / "out", false);
    EXPECT_EQ(slurp(cfg), kSingle);
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(kSingle);
    const auto manifest = slurp(tmp.path() / "out" / "manifest.txt");
    EXPECT_NE(manifest.find("config_fnv1a64 = " + hex.str()), std::string::npos) << manifest;
    EXPECT_NE(manifest.find("clip_radius.l=4"), std::string::npos);
}

TEST(Run, SamplesHaveLongFormatHeader) {
    TempDir tmp;
    run(validate(parse_config_text(kSingle)), tmp.path(), false);
    const auto samples = slurp(tmp.path() / "samples.csv");
    EXPECT_EQ(samples.substr(0, samples.find('\n')), "arm,path,t,observable,value");
    const auto summary = slurp(tmp.path() / "summary.csv");
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "arm,t,quantity,value");
}

TEST(Cli, ExitCodes) {
    TempDir tmp;
    const fs::path good = tmp.path() / "good.cfg";
    { std::ofstream(good) << kSingle; }
    EXPECT_EQ(run_cli("--config " + good.string() + " --out " + (tmp.path() / "o1").string()), 0);
    EXPECT_EQ(run_cli("--config " + good.string() + " --validate-only"), 0);

    const fs::path bad = tmp.path() / "bad.cfg";
    { std::ofstream(bad) << "schema = temsim-config/1\nexperiment = rate\nl_list = 8, 12\n"; }
    EXPECT_EQ(run_cli("--config " + bad.string()), 1);
    EXPECT_EQ(run_cli("--config " + (tmp.path() / "missing.cfg").string()), 1);
    EXPECT_EQ(run_cli("--preset no-such-preset"), 1);
    EXPECT_EQ(run_cli("--config a --preset b"), 1);

    // Anti-dissipative override: the probe refuses to certify decay.
    const fs::path refuse = tmp.path() / "refuse.cfg";
    {
        std::ofstream(refuse) << "schema = temsim-config/1\nexperiment = ipm-probe\nmodel = cubic-example1\n"
                                 "model.d2 = 1\nk = 2\nl = 4\nT = 2\nrecord_every = 1/2\npaths = 6\nbootstrap = 20\n";
    }
    EXPECT_EQ(run_cli("--config " + refuse.string() + " --check --out " + (tmp.path() / "o2").string()), 3);
}
