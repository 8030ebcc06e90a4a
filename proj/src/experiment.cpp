#include "tem/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "tem/errors.hpp"
#include "tem/noise.hpp"

namespace tem {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Shortest round-trip representation.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::string> split_top_level(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

// Accepts plain decimals and fractions such as 2/5.
double parse_real(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    const auto slash = s.find('/');
    auto one = [&](const std::string& part) {
        const std::string t = trim(part);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (t.empty() || used != t.size()) {
            throw ConfigError(key + ": '" + raw + "' is not a number");
        }
        return v;
    };
    if (slash == std::string::npos) {
        return one(s);
    }
    const double den = one(s.substr(slash + 1));
    if (den == 0.0) {
        throw ConfigError(key + ": division by zero in '" + raw + "'");
    }
    return one(s.substr(0, slash)) / den;
}

long long parse_integer(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError(key + ": '" + raw + "' is not an integer");
    }
    return v;
}

int parse_int(const std::string& key, const std::string& raw) {
    const long long v = parse_integer(key, raw);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw ConfigError(key + ": value out of range");
    }
    return static_cast<int>(v);
}

bool is_integral(double x) { return std::abs(x - std::round(x)) <= 1e-9 * std::max(1.0, std::abs(x)); }

// Collects every problem instead of stopping at the first.
class Reader {
public:
    explicit Reader(const ConfigFile& f) : file_(f) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        return file_.get(key);
    }

    template <class T, class Parse>
    T value(const std::string& key, T fallback, Parse parse) {
        const auto r = raw(key);
        if (!r) {
            return fallback;
        }
        try {
            return parse(key, *r);
        } catch (const ConfigError& e) {
            errors.emplace_back(e.what());
            return fallback;
        }
    }

    double real(const std::string& key, double fallback) { return value(key, fallback, parse_real); }
    int integer(const std::string& key, int fallback) { return value(key, fallback, parse_int); }

    std::vector<int> int_list(const std::string& key, std::vector<int> fallback) {
        return value(key, std::move(fallback), [](const std::string& k, const std::string& r) {
            std::vector<int> out;
            for (const auto& part : split_top_level(r, ',')) {
                out.push_back(parse_int(k, part));
            }
            return out;
        });
    }

    void mark_used(const std::string& key) { used_.insert(key); }

    std::vector<std::string> unknown_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : file_.entries) {
            if (!used_.count(k)) {
                out.push_back(k);
            }
        }
        return out;
    }

    std::vector<std::string> errors;

private:
    const ConfigFile& file_;
    std::set<std::string> used_;
};

struct KindDefaults {
    std::size_t paths;
    double horizon;
    int l;
    std::vector<int> l_list;
    int l_ref;
};

KindDefaults defaults_for(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Rate: return {200, 10.0, 16, {8, 16, 32, 64}, 128};
        case ExperimentKind::ErgodicScan: return {2000, 20.0, 16, {}, 128};
        case ExperimentKind::IpmProbe: return {500, 20.0, 16, {}, 128};
        case ExperimentKind::DeltaRefinement: return {2000, 20.0, 16, {8, 16, 32}, 64};
        case ExperimentKind::EmBlowup: return {100, 10.0, 2, {2, 4, 8, 16}, 128};
        case ExperimentKind::SinglePath: return {1, 10.0, 16, {}, 128};
    }
    return {1, 10.0, 16, {}, 128};
}

TruncationPolicy resolve_policy(Reader& rd, const std::string& model) {
    const std::string kind = trim(rd.raw("policy").value_or("preset"));
    std::optional<TruncationPolicy> base;
    if (kind == "preset") {
        try {
            base = preset_policy(model);
        } catch (const ConfigError& e) {
            rd.errors.emplace_back(e.what());
            base = TruncationPolicy::classical();
        }
    }
    const double level0 = base ? base->level() : 1.0;
    const double theta0 = base ? base->theta() : 0.5;
    const double level = rd.real("policy.L", level0);
    const double theta = rd.real("policy.theta", theta0);
    BoundForm form;
    if (kind == "preset") {
        form = base->form();
    } else if (kind == "constant") {
        form = ConstantBound{rd.real("policy.value", 1.0)};
    } else if (kind == "polynomial") {
        form = PolynomialBound{rd.real("policy.a8", 1.0), rd.real("policy.v", 1.0)};
    } else if (kind == "affine") {
        form = AffineBound{rd.real("policy.c0", 1.0), rd.real("policy.c1", 1.0)};
    } else {
        rd.errors.push_back("policy: unknown kind '" + kind + "' (expected preset, constant, polynomial or affine)");
        return TruncationPolicy::classical();
    }
    try {
        return TruncationPolicy(form, level, theta);
    } catch (const ConfigError& e) {
        rd.errors.push_back(std::string("policy: ") + e.what());
        return TruncationPolicy::classical();
    }
}

// Steps needed for horizon T at resolution l must be integral.
void require_grid(std::vector<std::string>& errors, double horizon, int l, const std::string& what) {
    if (l <= 0) {
        errors.push_back(what + ": l = " + std::to_string(l) + " must be positive");
        return;
    }
    if (!is_integral(horizon * l)) {
        errors.push_back(what + ": T = " + num(horizon) + " is not a multiple of 1/" + std::to_string(l));
    }
}

InitialComponent parse_component(const std::string& raw) {
    using F = InitialComponent::Family;
    const std::string s = trim(raw);
    const auto open = s.find('(');
    if (open == std::string::npos || s.back() != ')') {
        throw ConfigError("initial: cannot parse component '" + s + "'");
    }
    const std::string name = trim(s.substr(0, open));
    const auto args = split_top_level(s.substr(open + 1, s.size() - open - 2), ',');
    auto arg = [&](std::size_t i) { return parse_real("initial", args.at(i)); };
    if (name == "exp" && args.size() == 2) return {F::Exponential, arg(0), arg(1)};
    if (name == "const" && args.size() == 1) return {F::Exponential, arg(0), 0.0};
    if (name == "lin" && args.size() == 1) return {F::Linear, arg(0), 0.0};
    if (name == "polyexp" && args.size() == 2) return {F::PolyExp, arg(0), arg(1)};
    throw ConfigError("initial: unknown component '" + s + "' (expected exp(c,a), const(c), lin(c), polyexp(c,a))");
}

void write_file(const std::filesystem::path& p, const std::string& content, RunResult& result) {
    std::ofstream os(p, std::ios::binary);
    if (!os) {
        throw Error("cannot open " + p.string() + " for writing");
    }
    os << content;
    if (!os) {
        throw Error("failed writing " + p.string());
    }
    result.written.push_back(p);
}

class LongCsv {
public:
    LongCsv() { os_ << "arm,path,t,observable,value\n"; }
    void row(const std::string& arm, std::size_t path, double t, const std::string& obs, double v) {
        os_ << arm << ',' << path << ',' << num(t) << ',' << obs << ',' << num(v) << '\n';
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

class SummaryCsv {
public:
    SummaryCsv() { os_ << "arm,t,quantity,value\n"; }
    void row(const std::string& arm, double t, const std::string& q, double v) {
        os_ << arm << ',' << num(t) << ',' << q << ',' << num(v) << '\n';
    }
    void row(const std::string& arm, const std::string& q, double v) {
        os_ << arm << ",," << q << ',' << num(v) << '\n';
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

void check_line(RunResult& r, bool ok, const std::string& text) {
    r.check_lines.push_back((ok ? "PASS " : "FAIL ") + text);
    if (!ok) {
        r.status = kExitAcceptanceFailure;
    }
}

RunOptions options_of(const ExperimentConfig& c) {
    RunOptions o;
    o.seed = c.seed;
    o.workers = c.workers;
    o.bootstrap_resamples = c.bootstrap;
    return o;
}

SchemeConfig scheme_of(const ExperimentConfig& c) {
    SchemeConfig s;
    s.k = c.k;
    s.l = c.l;
    s.horizon = c.horizon;
    s.fading_rate = c.fading_rate;
    s.policy = c.policy;
    s.record_times = SchemeConfig::uniform_times(c.horizon, c.record_every);
    return s;
}

}  // namespace

// =============================================================================
// Parsing
// =============================================================================

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Rate: return "rate";
        case ExperimentKind::ErgodicScan: return "ergodic-scan";
        case ExperimentKind::IpmProbe: return "ipm-probe";
        case ExperimentKind::DeltaRefinement: return "delta-refinement";
        case ExperimentKind::EmBlowup: return "em-blowup";
        case ExperimentKind::SinglePath: return "single-path";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
    for (auto k : {ExperimentKind::Rate, ExperimentKind::ErgodicScan, ExperimentKind::IpmProbe,
                   ExperimentKind::DeltaRefinement, ExperimentKind::EmBlowup, ExperimentKind::SinglePath}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ConfigError("experiment: unknown kind '" + name + "'");
}

std::optional<std::string> ConfigFile::get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) {
            return v;
        }
    }
    return std::nullopt;
}

ConfigFile parse_config_text(const std::string& text) {
    ConfigFile out;
    out.text = text;
    std::vector<std::string> problems;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(number) + ": expected 'key = value'");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            problems.push_back("line " + std::to_string(number) + ": empty key");
            continue;
        }
        if (!seen.insert(key).second) {
            problems.push_back("line " + std::to_string(number) + ": duplicate key '" + key + "'");
            continue;
        }
        out.entries.emplace_back(std::move(key), std::move(value));
    }
    if (!problems.empty()) {
        std::string msg = "config syntax errors:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg);
    }
    return out;
}

ConfigFile read_config_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

TestFunctional parse_functional(const std::string& spec) {
    const std::string s = trim(spec);
    if (s == "norm") return TestFunctional::norm();
    if (s == "cos_norm") return TestFunctional::cos_norm();
    if (s.rfind("norm_min_", 0) == 0) {
        return TestFunctional::capped_norm(parse_real("functionals", s.substr(9)));
    }
    if (s.rfind("poly(", 0) == 0 && s.back() == ')') {
        std::vector<double> c;
        for (const auto& part : split_top_level(s.substr(5, s.size() - 6), ',')) {
            c.push_back(parse_real("functionals", part));
        }
        auto f = TestFunctional::polynomial(std::move(c));
        f.name = s;
        return f;
    }
    throw ConfigError("functionals: unknown functional '" + s + "' (expected norm, cos_norm, norm_min_<c>, poly(...))");
}

std::vector<InitialData> parse_initial_data(const std::string& spec) {
    std::vector<InitialData> out;
    for (const auto& datum : split_top_level(spec, ';')) {
        if (datum.empty()) {
            continue;
        }
        std::vector<InitialComponent> comps;
        for (const auto& c : split_top_level(datum, ',')) {
            comps.push_back(parse_component(c));
        }
        out.emplace_back(std::move(comps));
    }
    if (out.empty()) {
        throw ConfigError("initial: no initial data given");
    }
    return out;
}

// =============================================================================
// Validation
// =============================================================================

ValidatedConfig validate(const ConfigFile& file) {
    ValidatedConfig v;
    v.checksum = fnv1a64(file.text);
    ExperimentConfig& c = v.config;
    Reader rd(file);
    auto& errors = rd.errors;

    const auto schema = rd.raw("schema");
    if (!schema) {
        errors.push_back(std::string("schema: missing (expected '") + kConfigSchema + "')");
    } else if (*schema != kConfigSchema) {
        errors.push_back("schema: unsupported '" + *schema + "' (expected '" + kConfigSchema + "')");
    }

    const auto kind = rd.raw("experiment");
    if (!kind) {
        errors.emplace_back("experiment: missing");
    } else {
        try {
            c.kind = parse_experiment_kind(*kind);
        } catch (const ConfigError& e) {
            errors.emplace_back(e.what());
        }
    }
    const KindDefaults d = defaults_for(c.kind);

    c.model = rd.raw("model").value_or("cubic-example1");
    for (const auto& [key, value] : file.entries) {
        if (key.rfind("model.", 0) == 0) {
            rd.mark_used(key);
            try {
                c.model_params[key.substr(6)] = parse_real(key, value);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        }
    }
    std::unique_ptr<SfdeModel> model;
    try {
        model = make_model(c.model, c.model_params);
    } catch (const ConfigError& e) {
        errors.push_back(std::string("model: ") + e.what());
    }

    c.policy = resolve_policy(rd, c.model);
    double default_r = 0.3;
    try {
        default_r = preset_fading_rate(c.model);
    } catch (const ConfigError&) {
    }
    c.fading_rate = rd.real("r", default_r);
    c.k = rd.integer("k", 12);
    c.l = rd.integer("l", d.l);
    c.l_list = rd.int_list("l_list", d.l_list);
    c.l_ref = rd.integer("l_ref", d.l_ref);
    c.k_ref = rd.integer("k_ref", 0);
    c.horizon = rd.real("T", d.horizon);
    c.record_every = rd.real("record_every", 1.0);
    c.t_star = rd.real("t_star", c.horizon);
    c.ceiling = rd.real("ceiling", 1e6);
    c.l_em = rd.integer("l_em", 2);
    c.paths = static_cast<std::size_t>(std::max(0, rd.integer("paths", static_cast<int>(d.paths))));
    c.seed = rd.value<std::uint64_t>("seed", 1, [](const std::string& k, const std::string& r) {
        const long long s = parse_integer(k, r);
        if (s < 0) throw ConfigError(k + ": must be nonnegative");
        return static_cast<std::uint64_t>(s);
    });
    c.workers = static_cast<unsigned>(std::max(0, rd.integer("workers", 1)));
    c.out = rd.raw("out").value_or("out/" + to_string(c.kind));
    c.bootstrap = static_cast<std::size_t>(std::max(0, rd.integer("bootstrap", 500)));
    c.eta = static_cast<std::size_t>(std::max(0, rd.integer("eta", 2) - 1));

    const std::string grid = rd.raw("grid").value_or("fine");
    if (grid == "fine") {
        c.grid = ErrorGrid::Fine;
    } else if (grid == "coarse") {
        c.grid = ErrorGrid::Coarse;
    } else {
        errors.push_back("grid: expected 'fine' or 'coarse', got '" + grid + "'");
    }

    if (const auto f = rd.raw("functionals")) {
        c.functionals.clear();
        for (const auto& part : split_top_level(*f, ',')) {
            try {
                c.functionals.push_back(parse_functional(part).name);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        }
    }

    if (const auto init = rd.raw("initial"); init && *init != "preset") {
        try {
            c.initial = parse_initial_data(*init);
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    } else {
        try {
            c.initial = preset_initial_data(c.model);
        } catch (const ConfigError& e) {
            errors.emplace_back(e.what());
        }
    }

    for (const auto& key : rd.unknown_keys()) {
        errors.push_back("unknown key '" + key + "'");
    }

    // Cross-field checks.
    if (c.k <= 0) errors.push_back("k must be positive");
    if (!(c.fading_rate > 0.0)) errors.push_back("r must be positive");
    if (!(c.horizon >= 0.0)) errors.push_back("T must be nonnegative");
    if (!(c.record_every > 0.0)) errors.push_back("record_every must be positive");
    if (c.paths == 0) errors.push_back("paths must be positive");
    if (c.bootstrap == 0) errors.push_back("bootstrap must be positive");
    if (!(c.ceiling > 0.0)) errors.push_back("ceiling must be positive");

    std::vector<int> resolutions;
    switch (c.kind) {
        case ExperimentKind::Rate:
            if (c.l_list.size() < 2) errors.emplace_back("l_list: a rate fit needs at least two levels");
            if (c.paths < 2) errors.emplace_back("paths: a rate study needs M >= 2");
            for (int l : c.l_list) {
                if (l <= 0 || c.l_ref % l != 0) {
                    errors.push_back("l_ref = " + std::to_string(c.l_ref) + " is not a multiple of l = " +
                                     std::to_string(l));
                }
                require_grid(errors, c.horizon, l, "l_list");
            }
            require_grid(errors, c.horizon, c.l_ref, "l_ref");
            if (c.k_ref != 0 && c.k_ref < c.k) errors.emplace_back("k_ref must be at least k");
            resolutions = c.l_list;
            resolutions.push_back(c.l_ref);
            break;
        case ExperimentKind::DeltaRefinement:
            if (c.l_list.empty()) errors.emplace_back("l_list: no levels given");
            for (int l : c.l_list) {
                if (l <= 0 || c.l_ref % l != 0) {
                    errors.push_back("l_ref = " + std::to_string(c.l_ref) + " is not a multiple of l = " +
                                     std::to_string(l));
                }
                require_grid(errors, c.t_star, l, "l_list");
            }
            require_grid(errors, c.t_star, c.l_ref, "l_ref");
            resolutions = c.l_list;
            resolutions.push_back(c.l_ref);
            break;
        case ExperimentKind::EmBlowup:
            if (c.model != "cubic-example1") {
                v.warnings.emplace_back("em-blowup is meant for the cubic model; blow-up needs superlinear drift");
            }
            require_grid(errors, c.horizon, c.l_em, "l_em");
            for (int l : c.l_list) require_grid(errors, c.horizon, l, "l_list");
            if (!c.policy.clips()) {
                v.warnings.emplace_back("constant policy: the TEM arms are plain Euler-Maruyama too");
            }
            resolutions = c.l_list;
            break;
        default:
            require_grid(errors, c.horizon, c.l, "l");
            if (c.l > 0 && !is_integral(c.record_every * c.l)) {
                errors.push_back("record_every = " + num(c.record_every) + " is not a multiple of 1/l");
            }
            resolutions = {c.l};
            break;
    }

    if (c.kind == ExperimentKind::IpmProbe) {
        if (c.initial.size() < 2) {
            errors.emplace_back("ipm-probe needs at least two initial data");
        } else if (c.eta == 0 || c.eta >= c.initial.size()) {
            errors.push_back("eta must select an initial datum other than the first (1-based index 2.." +
                             std::to_string(c.initial.size()) + ")");
        }
        if (c.paths < 2) errors.emplace_back("paths: ipm-probe needs M >= 2");
        if (!c.policy.clips()) {
            v.warnings.emplace_back("constant policy: no truncation is applied (classical Euler-Maruyama)");
        }
    }
    const bool ergodic = c.kind == ExperimentKind::ErgodicScan || c.kind == ExperimentKind::IpmProbe ||
                         c.kind == ExperimentKind::DeltaRefinement;
    if (ergodic && c.policy.clips() && c.policy.theta() == 0.5) {
        v.warnings.emplace_back("theta = 1/2 with a long-run experiment: the contraction argument needs theta < 1/2");
    }
    if (c.kind == ExperimentKind::ErgodicScan && c.functionals.empty()) {
        errors.emplace_back("functionals: none given");
    }

    for (int l : resolutions) {
        if (l <= 0) continue;
        try {
            v.clip_radii.emplace_back(l, c.policy.clip_radius(l));
        } catch (const ConfigError& e) {
            errors.push_back("l = " + std::to_string(l) + ": " + e.what());
        }
    }
    if (c.kind == ExperimentKind::EmBlowup) {
        v.clip_radii.insert(v.clip_radii.begin(), {c.l_em, std::numeric_limits<double>::infinity()});
    }

    if (model) {
        for (std::size_t i = 0; i < c.initial.size(); ++i) {
            const auto& xi = c.initial[i];
            if (xi.dim() != model->dim()) {
                errors.push_back("initial datum " + std::to_string(i + 1) + " has dimension " +
                                 std::to_string(xi.dim()) + ", model needs " + std::to_string(model->dim()));
            } else if (c.k > 0 && c.fading_rate > 0.0 && !xi.in_phase_space(c.fading_rate, c.k)) {
                errors.push_back("initial datum " + std::to_string(i + 1) + " (" + xi.describe() +
                                 ") is not in C_r for r = " + num(c.fading_rate));
            }
        }
        if (c.policy.clips()) {
            try {
                c.policy.check_level(model->drift_at_zero_norm());
            } catch (const ConfigError& e) {
                errors.push_back(std::string("policy: ") + e.what());
            }
        }
        if (model->dissipativity()) {
            v.dissipativity = check_dissipativity(*model, c.fading_rate);
            if (c.kind == ExperimentKind::IpmProbe && !v.dissipativity->passed) {
                v.warnings.push_back("dissipativity check failed; decay will not be certified: " +
                                     v.dissipativity->summary());
            }
        } else if (c.kind == ExperimentKind::IpmProbe) {
            v.warnings.emplace_back("model has no dissipativity constants; decay will not be certified");
        }
    }

    if (!errors.empty()) {
        std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }

    auto& r = v.resolved;
    r.emplace_back("schema", kConfigSchema);
    r.emplace_back("experiment", to_string(c.kind));
    r.emplace_back("model", c.model);
    if (model) {
        for (const auto& [key, value] : model->parameters()) {
            r.emplace_back("model." + key, num(value));
        }
    }
    r.emplace_back("policy", c.policy.describe());
    r.emplace_back("r", num(c.fading_rate));
    r.emplace_back("k", std::to_string(c.k));
    switch (c.kind) {
        case ExperimentKind::Rate:
            r.emplace_back("l_list", join_ints(c.l_list));
            r.emplace_back("l_ref", std::to_string(c.l_ref));
            r.emplace_back("k_ref", std::to_string(c.k_ref == 0 ? c.k : c.k_ref));
            r.emplace_back("grid", c.grid == ErrorGrid::Fine ? "fine" : "coarse");
            r.emplace_back("T", num(c.horizon));
            break;
        case ExperimentKind::DeltaRefinement:
            r.emplace_back("l_list", join_ints(c.l_list));
            r.emplace_back("l_ref", std::to_string(c.l_ref));
            r.emplace_back("t_star", num(c.t_star));
            break;
        case ExperimentKind::EmBlowup:
            r.emplace_back("l_em", std::to_string(c.l_em));
            r.emplace_back("l_list", join_ints(c.l_list));
            r.emplace_back("T", num(c.horizon));
            r.emplace_back("ceiling", num(c.ceiling));
            break;
        default:
            r.emplace_back("l", std::to_string(c.l));
            r.emplace_back("T", num(c.horizon));
            r.emplace_back("record_every", num(c.record_every));
            break;
    }
    std::string init;
    for (std::size_t i = 0; i < c.initial.size(); ++i) {
        if (i) init += "; ";
        init += c.initial[i].describe();
    }
    r.emplace_back("initial", init);
    if (c.kind == ExperimentKind::IpmProbe) r.emplace_back("eta", std::to_string(c.eta + 1));
    if (c.kind == ExperimentKind::ErgodicScan) {
        std::string f;
        for (std::size_t i = 0; i < c.functionals.size(); ++i) {
            if (i) f += ",";
            f += c.functionals[i];
        }
        r.emplace_back("functionals", f);
    }
    r.emplace_back("paths", std::to_string(c.paths));
    r.emplace_back("seed", std::to_string(c.seed));
    r.emplace_back("bootstrap", std::to_string(c.bootstrap));
    return v;
}

// =============================================================================
// Running
// =============================================================================

RunResult run(const ValidatedConfig& vc, const std::filesystem::path& out_dir, bool check) {
    const ExperimentConfig& c = vc.config;
    RunResult result;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }

    const auto model = make_model(c.model, c.model_params);
    const RunOptions opt = options_of(c);
    LongCsv samples;
    SummaryCsv summary;

    switch (c.kind) {
        case ExperimentKind::Rate: {
            RateSetup s;
            s.k = c.k;
            s.levels = c.l_list;
            s.l_ref = c.l_ref;
            s.k_ref = c.k_ref;
            s.horizon = c.horizon;
            s.fading_rate = c.fading_rate;
            s.paths = c.paths;
            s.policy = c.policy;
            s.grid = c.grid;
            for (std::size_t x = 0; x < c.initial.size(); ++x) {
                const std::string arm = "xi" + std::to_string(x + 1);
                const RateStudy st = rms_segment_error(*model, s, c.initial[x], opt);
                for (std::size_t i = 0; i < s.levels.size(); ++i) {
                    const std::string level = arm + "/l=" + std::to_string(s.levels[i]);
                    for (std::size_t p = 0; p < s.paths; ++p) {
                        samples.row(level, p, c.horizon, "sq_error", st.squared_errors[i][p]);
                    }
                    summary.row(level, c.horizon, "log2_delta", -std::log2(static_cast<double>(s.levels[i])));
                    summary.row(level, c.horizon, "rms_error", st.fit.rms_errors[i]);
                    summary.row(level, c.horizon, "rms_error_coarse_grid", st.coarse_grid.rms_errors[i]);
                    summary.row(level, c.horizon, "rms_error_fine_grid", st.fine_grid.rms_errors[i]);
                    summary.row(level, c.horizon, "clipped_at_T", static_cast<double>(st.clipped_at_horizon[i]));
                }
                summary.row(arm, "slope", st.fit.slope);
                summary.row(arm, "intercept", st.fit.intercept);
                summary.row(arm, "r_squared", st.fit.r_squared);
                summary.row(arm, "residual", st.fit.residual);
                summary.row(arm, "slope_coarse_grid", st.coarse_grid.slope);
                summary.row(arm, "slope_fine_grid", st.fine_grid.slope);
                if (check) {
                    const bool ok = st.fit.fitted && st.fit.slope >= 0.35 && st.fit.slope <= 0.65 &&
                                    st.fit.r_squared >= 0.9;
                    check_line(result, ok,
                               "rate " + arm + ": slope " + num(st.fit.slope) + " in [0.35, 0.65], R^2 " +
                                   num(st.fit.r_squared) + " >= 0.9");
                }
            }
            break;
        }
        case ExperimentKind::ErgodicScan: {
            std::vector<TestFunctional> fns;
            for (const auto& f : c.functionals) fns.push_back(parse_functional(f));
            const auto stats = ergodic_functional_scan(*model, scheme_of(c), c.initial, c.paths, fns, opt);
            for (const auto& st : stats) {
                if (st.aborts > 0) {
                    throw NonFiniteValue(st.id + ": " + std::to_string(st.aborts) + " of " +
                                         std::to_string(st.paths) + " paths aborted");
                }
            }
            std::vector<std::vector<Interval>> final_ci(stats.size());
            for (std::size_t x = 0; x < stats.size(); ++x) {
                const auto& st = stats[x];
                for (std::size_t t = 0; t < st.times.size(); ++t) {
                    for (std::size_t p = 0; p < st.norm_samples[t].size(); ++p) {
                        samples.row(st.id, p, st.times[t], "norm", st.norm_samples[t][p]);
                    }
                    for (std::size_t f = 0; f < fns.size(); ++f) {
                        const auto v = st.functional_samples(f, t, fns);
                        const Interval ci = bootstrap_mean_ci(v, c.bootstrap, mix_seed(c.seed, x * 1000003 + t));
                        summary.row(st.id, st.times[t], fns[f].name + ".mean", st.mean[f][t]);
                        summary.row(st.id, st.times[t], fns[f].name + ".variance", st.variance[f][t]);
                        summary.row(st.id, st.times[t], fns[f].name + ".ci_lo", ci.lo);
                        summary.row(st.id, st.times[t], fns[f].name + ".ci_hi", ci.hi);
                        if (t + 1 == st.times.size()) final_ci[x].push_back(ci);
                    }
                }
                summary.row(st.id, "paths", static_cast<double>(st.paths));
                summary.row(st.id, "aborts", static_cast<double>(st.aborts));
                summary.row(st.id, "negative_paths", static_cast<double>(st.negative_paths));
                summary.row(st.id, "negative_step_fraction", st.negative_step_fraction);
            }
            if (check) {
                for (std::size_t f = 0; f < fns.size(); ++f) {
                    double worst = 0.0;
                    bool overlap = true;
                    for (std::size_t a = 0; a < stats.size(); ++a) {
                        for (std::size_t b = a + 1; b < stats.size(); ++b) {
                            worst = std::max(worst, std::abs(stats[a].mean[f].back() - stats[b].mean[f].back()));
                            overlap = overlap && final_ci[a][f].overlaps(final_ci[b][f]);
                        }
                    }
                    check_line(result, worst <= 0.05 && overlap,
                               "ergodic " + fns[f].name + " at t = " + num(c.horizon) + ": max pairwise gap " +
                                   num(worst) + " <= 0.05, bootstrap bands " + (overlap ? "overlap" : "disjoint"));
                }
            }
            break;
        }
        case ExperimentKind::IpmProbe: {
            const auto rep =
                ipm_convergence_probe(*model, scheme_of(c), c.initial[0], c.initial[c.eta], c.paths, opt);
            for (std::size_t t = 0; t < rep.times.size(); ++t) {
                for (std::size_t p = 0; p < c.paths; ++p) {
                    samples.row("xi", p, rep.times[t], "norm", rep.xi_samples[t][p]);
                    samples.row("eta", p, rep.times[t], "norm", rep.eta_samples[t][p]);
                    samples.row("coupled", p, rep.times[t], "distance_sq", rep.coupled_distance_sq[p][t]);
                }
                summary.row("independent", rep.times[t], "w1", rep.w1[t]);
                summary.row("coupled", rep.times[t], "mean_square_distance", rep.coupled_mean_square[t]);
            }
            if (rep.w1_decay) summary.row("independent", "log_w1_slope", rep.w1_decay->slope);
            if (rep.coupled_decay) {
                summary.row("coupled", "log_ms_slope", rep.coupled_decay->slope);
                summary.row("coupled", "log_ms_slope_stderr", rep.coupled_decay->slope_stderr);
            }
            summary.row("coupled", "slope_ci_lo", rep.coupled_slope_ci.lo);
            summary.row("coupled", "slope_ci_hi", rep.coupled_slope_ci.hi);
            summary.row("coupled", "certified", rep.certified ? 1.0 : 0.0);
            if (check) {
                check_line(result, rep.certified,
                           "ipm coupled decay: slope CI [" + num(rep.coupled_slope_ci.lo) + ", " +
                               num(rep.coupled_slope_ci.hi) + "] below 0" +
                               (rep.refusal.empty() ? "" : " (" + rep.refusal + ")"));
            }
            break;
        }
        case ExperimentKind::DeltaRefinement: {
            const auto rep = delta_refinement_probe(*model, c.k, c.l_list, c.l_ref, c.initial[0], c.paths, c.t_star,
                                                    c.policy, c.fading_rate, opt);
            for (std::size_t j = 0; j < rep.samples.size(); ++j) {
                const int l = j < rep.levels.size() ? rep.levels[j] : rep.finest;
                for (std::size_t p = 0; p < rep.samples[j].size(); ++p) {
                    samples.row("l=" + std::to_string(l), p, c.t_star, "norm", rep.samples[j][p]);
                }
            }
            for (std::size_t j = 0; j < rep.levels.size(); ++j) {
                const std::string arm = "l=" + std::to_string(rep.levels[j]);
                summary.row(arm, c.t_star, "w1_vs_finest", rep.w1[j]);
                summary.row(arm, c.t_star, "ci_lo", rep.ci[j].lo);
                summary.row(arm, c.t_star, "ci_hi", rep.ci[j].hi);
            }
            summary.row("all", "nonincreasing", rep.nonincreasing ? 1.0 : 0.0);
            summary.row("all", "insufficient_samples", rep.insufficient_samples ? 1.0 : 0.0);
            if (check) {
                check_line(result, rep.nonincreasing && !rep.insufficient_samples,
                           std::string("delta refinement: W1 to l = ") + std::to_string(rep.finest) +
                               (rep.nonincreasing ? " nonincreasing" : " not nonincreasing") +
                               " within bootstrap bands");
            }
            break;
        }
        case ExperimentKind::EmBlowup: {
            BlowupSetup s;
            s.k = c.k;
            s.l_em = c.l_em;
            s.tem_levels = c.l_list;
            s.horizon = c.horizon;
            s.fading_rate = c.fading_rate;
            s.ceiling = c.ceiling;
            s.paths = c.paths;
            s.policy = c.policy;
            const auto rep = em_blowup_demo(*model, s, c.initial[0], opt);
            auto emit = [&](const BlowupArm& a, const std::string& arm) {
                for (std::size_t t = 0; t < a.times.size(); ++t) {
                    summary.row(arm, a.times[t], "mean_square", a.mean_square[t]);
                }
                summary.row(arm, "exceeded", static_cast<double>(a.exceeded));
                summary.row(arm, "aborted", static_cast<double>(a.aborted));
                summary.row(arm, "exceed_fraction", a.exceed_fraction());
                summary.row(arm, "max_mean_square", a.max_mean_square);
                summary.row(arm, "clip_radius", a.clip_radius);
                for (std::size_t p = 0; p < a.exceed_times.size(); ++p) {
                    const bool gone = !std::isnan(a.exceed_times[p]);
                    samples.row(arm, p, gone ? a.exceed_times[p] : c.horizon, "exceeded", gone ? 1.0 : 0.0);
                }
            };
            emit(rep.em, "em/l=" + std::to_string(rep.em.l));
            for (const auto& a : rep.tem) emit(a, "tem/l=" + std::to_string(a.l));
            if (check) {
                check_line(result, rep.em.exceed_fraction() > 0.5,
                           "em blow-up: EM passes the ceiling in " + num(rep.em.exceed_fraction()) +
                               " of paths (> 0.5)");
                for (const auto& a : rep.tem) {
                    const bool ok = a.exceeded == 0 && a.aborted == 0 && std::isfinite(a.max_mean_square);
                    check_line(result, ok,
                               "em blow-up: TEM l = " + std::to_string(a.l) + " exceeded " +
                                   std::to_string(a.exceeded) + ", max mean square " + num(a.max_mean_square));
                }
            }
            break;
        }
        case ExperimentKind::SinglePath: {
            SchemeConfig s = scheme_of(c);
            s.keep_segments = true;
            const NoiseStream stream(c.seed, 0, model->noise_dim(), c.l);
            const PathRecord rec = simulate_path(*model, s, c.initial[0], stream);
            std::ostringstream path;
            path << "t,norm";
            for (std::size_t i = 0; i < model->dim(); ++i) path << ",x" << i + 1;
            path << '\n';
            for (const auto& snap : rec.snapshots) {
                path << num(snap.t) << ',' << num(snap.norm);
                for (double h : snap.head) path << ',' << num(h);
                path << '\n';
                samples.row("xi1", 0, snap.t, "norm", snap.norm);
                for (std::size_t i = 0; i < snap.head.size(); ++i) {
                    samples.row("xi1", 0, snap.t, "x" + std::to_string(i + 1), snap.head[i]);
                }
            }
            write_file(out_dir / "path.csv", path.str(), result);
            std::ostringstream seg;
            write_segment_csv(seg, *rec.snapshots.back().segment, rec.snapshots.back().t);
            write_file(out_dir / "segment.csv", seg.str(), result);
            summary.row("xi1", "steps", static_cast<double>(rec.steps_taken));
            summary.row("xi1", "negative_steps", static_cast<double>(rec.negative_steps));
            summary.row("xi1", "clip_radius", rec.clip_radius);
            if (check) {
                check_line(result, true, "single-path completed " + std::to_string(rec.steps_taken) + " steps");
            }
            break;
        }
    }

    std::ostringstream manifest;
    manifest << "# temsim manifest\n";
    manifest << "config_fnv1a64 = " << std::hex << std::setw(16) << std::setfill('0') << vc.checksum << std::dec
             << '\n';
    manifest << "generator = " << NoiseStream::generator_id << '\n';
    for (const auto& [k, v] : vc.resolved) manifest << k << " = " << v << '\n';
    for (const auto& [l, radius] : vc.clip_radii) {
        manifest << "clip_radius.l=" << l << " = " << num(radius) << '\n';
    }
    if (vc.dissipativity) manifest << "dissipativity = " << vc.dissipativity->summary() << '\n';
    for (const auto& w : vc.warnings) manifest << "warning = " << w << '\n';
    for (const auto& line : result.check_lines) manifest << "check = " << line << '\n';

    write_file(out_dir / "samples.csv", samples.str(), result);
    write_file(out_dir / "summary.csv", summary.str(), result);
    write_file(out_dir / "manifest.txt", manifest.str(), result);
    return result;
}

}  // namespace tem
