#include "llmnet/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

extern char** environ;

namespace llmnet {

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
    static const std::vector<std::pair<ExperimentKind, std::string>> names{
        {ExperimentKind::simulate, "simulate"},
        {ExperimentKind::meanfield, "meanfield"},
        {ExperimentKind::reduce, "reduce"},
        {ExperimentKind::epsilon_scan, "epsilon-scan"},
        {ExperimentKind::reconfig_bench, "reconfig-bench"},
        {ExperimentKind::prop1, "prop1"},
        {ExperimentKind::sweep, "sweep"},
        {ExperimentKind::optimize, "optimize"},
        {ExperimentKind::concentration, "concentration"},
    };
    return names;
}

int line_of(const YAML::Node& n) {
    const YAML::Mark m = n.Mark();
    return m.line >= 0 ? m.line + 1 : 0;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
    if (std::isnan(v)) return ".nan";
    if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    // Keep floats recognisable as floats for readers of the echo.
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

template <class T, class Fn>
std::string flow(const std::vector<T>& v, Fn item) {
    std::string out = "[";
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + item(v[k]);
    return out + "]";
}

// Conversion errors carry the line of the node and the dotted key.
struct Reader {
    std::string where;

    [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const {
        throw ConfigError(where + ": " + what, line_of(n));
    }

    const YAML::Node& scalar(const YAML::Node& n) const {
        if (!n.IsScalar()) fail(n, "expected a scalar value");
        return n;
    }

    double real(const YAML::Node& n) const {
        const std::string s = scalar(n).Scalar();
        if (s == ".nan" || s == ".NaN") return std::numeric_limits<double>::quiet_NaN();
        double v = 0.0;
        const char* end = s.data() + s.size();
        auto res = std::from_chars(s.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end) fail(n, "expected a number, got '" + s + "'");
        return v;
    }

    std::uint64_t natural(const YAML::Node& n) const {
        const std::string s = scalar(n).Scalar();
        std::uint64_t v = 0;
        const char* end = s.data() + s.size();
        auto res = std::from_chars(s.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end) fail(n, "expected a non-negative integer, got '" + s + "'");
        return v;
    }

    bool boolean(const YAML::Node& n) const {
        const std::string s = scalar(n).Scalar();
        if (s == "true" || s == "True" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "False" || s == "no" || s == "off") return false;
        fail(n, "expected true or false, got '" + s + "'");
    }

    std::string text(const YAML::Node& n) const { return scalar(n).Scalar(); }

    template <class Fn>
    auto list(const YAML::Node& n, Fn item) const {
        if (!n.IsSequence()) fail(n, "expected a list");
        std::vector<decltype(item(n))> out;
        for (const auto& e : n) out.push_back(item(e));
        return out;
    }
};

struct Field {
    std::string section;  // empty = top level
    std::string key;
    std::string doc;
    std::function<void(ExperimentConfig&, const YAML::Node&, const Reader&)> read;
    std::function<std::string(const ExperimentConfig&)> write;

    std::string path() const { return section.empty() ? key : section + "." + key; }
};

template <class Get>
Field real_field(std::string section, std::string key, std::string doc, Get get) {
    return {std::move(section), std::move(key), std::move(doc),
            [get](ExperimentConfig& c, const YAML::Node& n, const Reader& r) { get(c) = r.real(n); },
            [get](const ExperimentConfig& c) { return fmt(get(c)); }};
}

template <class Get>
Field count_field(std::string section, std::string key, std::string doc, Get get) {
    return {std::move(section), std::move(key), std::move(doc),
            [get](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                using T = std::remove_reference_t<decltype(get(c))>;
                const std::uint64_t v = r.natural(n);
                if (v > std::numeric_limits<T>::max()) r.fail(n, "value out of range");
                get(c) = static_cast<T>(v);
            },
            [get](const ExperimentConfig& c) { return std::to_string(get(c)); }};
}

template <class Get>
Field bool_field(std::string section, std::string key, std::string doc, Get get) {
    return {std::move(section), std::move(key), std::move(doc),
            [get](ExperimentConfig& c, const YAML::Node& n, const Reader& r) { get(c) = r.boolean(n); },
            [get](const ExperimentConfig& c) { return std::string(get(c) ? "true" : "false"); }};
}

template <class Get>
Field reals_field(std::string section, std::string key, std::string doc, Get get) {
    return {std::move(section), std::move(key), std::move(doc),
            [get](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                get(c) = r.list(n, [&](const YAML::Node& e) { return r.real(e); });
            },
            [get](const ExperimentConfig& c) { return flow(get(c), [](double v) { return fmt(v); }); }};
}

#define CFG(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"", "experiment",
                     "simulate | meanfield | reduce | epsilon-scan | reconfig-bench | prop1 | sweep | optimize | "
                     "concentration",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         try {
                             c.kind = experiment_kind_from_string(r.text(n));
                         } catch (const ValidationError& e) {
                             r.fail(n, e.what());
                         }
                     },
                     [](const ExperimentConfig& c) { return to_string(c.kind); }});
        f.push_back(count_field("", "seed", "master seed; every random stream derives from it", CFG(seed)));
        f.push_back({"", "output", "output directory (the --out flag takes precedence)",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) { c.output = r.text(n); },
                     [](const ExperimentConfig& c) { return quote(c.output); }});
        f.push_back(count_field("", "jobs", "worker threads; results do not depend on it", CFG(jobs)));

        f.push_back({"network", "kind", "power_law | erdos_renyi",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         try {
                             c.network.kind = network_kind_from_string(r.text(n));
                         } catch (const ValidationError& e) {
                             r.fail(n, e.what());
                         }
                     },
                     [](const ExperimentConfig& c) { return to_string(c.network.kind); }});
        f.push_back(count_field("network", "n", "number of agents", CFG(network.n)));
        f.push_back(real_field("network", "p", "erdos_renyi edge probability", CFG(network.p)));
        f.push_back(real_field("network", "exponent", "power_law in-degree exponent (> 1)", CFG(network.exponent)));
        f.push_back(count_field("network", "max_degree", "power_law maximum in-degree", CFG(network.max_degree)));

        f.push_back(real_field("kernel", "activity", "probability that an agent re-answers in a round",
                               CFG(kernel.activity)));
        f.push_back(real_field("kernel", "beta0", "evidence strength at saturation", CFG(kernel.beta0)));
        f.push_back(real_field("kernel", "u_half", "control at half evidence strength", CFG(kernel.u_half)));
        f.push_back({"kernel", "bias", "logit bias per current state [T, H, D]",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         auto v = r.list(n, [&](const YAML::Node& e) { return r.real(e); });
                         if (v.size() != 3) r.fail(n, "expected three values [T, H, D]");
                         c.kernel.bias = {v[0], v[1], v[2]};
                     },
                     [](const ExperimentConfig& c) {
                         const auto& b = c.kernel.bias;
                         return flow(std::vector<double>(b.begin(), b.end()), [](double v) { return fmt(v); });
                     }});
        f.push_back(real_field("kernel", "verbosity_penalty", "logit penalty for long answers",
                               CFG(kernel.verbosity_penalty)));
        f.push_back(real_field("kernel", "verbosity_midpoint", "control at half penalty",
                               CFG(kernel.verbosity_midpoint)));
        f.push_back(real_field("kernel", "verbosity_width", "penalty transition width",
                               CFG(kernel.verbosity_width)));
        f.push_back(real_field("kernel", "halluc_share_base", "share of non-truthful moves going to H",
                               CFG(kernel.halluc_share_base)));
        f.push_back(real_field("kernel", "halluc_share_bump", "extra H share at the peak control",
                               CFG(kernel.halluc_share_bump)));
        f.push_back(real_field("kernel", "halluc_peak_u", "control where the H share peaks",
                               CFG(kernel.halluc_peak_u)));
        f.push_back(real_field("kernel", "halluc_width", "width of the H share bump", CFG(kernel.halluc_width)));
        f.push_back(real_field("kernel", "halluc_contagion", "pull of hallucinating sources towards H, in [0, 1]",
                               CFG(kernel.halluc_contagion)));
        f.push_back(bool_field("kernel", "absorbing_when_unanimous",
                               "force the T row to (1, 0, 0) when every source is truthful",
                               CFG(kernel.absorbing_when_unanimous)));
        f.push_back({"kernel", "tables",
                     "explicit kernel tables [{u: 20, path: table.csv}, ...]; replaces the logistic family",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         c.kernel_tables = r.list(n, [&](const YAML::Node& e) {
                             if (!e.IsMap()) r.fail(e, "expected {u: <control>, path: <csv>}");
                             KernelTableSource s;
                             bool have_u = false, have_path = false;
                             for (const auto& kv : e) {
                                 const std::string k = kv.first.as<std::string>();
                                 if (k == "u") {
                                     s.u = r.real(kv.second);
                                     have_u = true;
                                 } else if (k == "path") {
                                     s.path = r.text(kv.second);
                                     have_path = true;
                                 } else {
                                     r.fail(kv.first, "unknown key '" + k + "' in a kernel table entry");
                                 }
                             }
                             if (!have_u || !have_path) r.fail(e, "kernel table entries need both u and path");
                             return s;
                         });
                     },
                     [](const ExperimentConfig& c) {
                         return flow(c.kernel_tables, [](const KernelTableSource& s) {
                             return "{u: " + fmt(s.u) + ", path: " + quote(s.path) + "}";
                         });
                     }});

        f.push_back(real_field("control", "u", "token budget per message", CFG(u)));
        f.push_back(count_field("control", "episode_rounds", "rounds per sweep / optimization episode",
                                CFG(episode_rounds)));

        f.push_back(real_field("initial", "truthful", "initial truthful fraction", CFG(initial.T)));
        f.push_back(real_field("initial", "hallucinating", "initial hallucinating fraction", CFG(initial.H)));

        f.push_back({"activation", "mode", "all | uniform_subset | fixed_set",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         const std::string s = r.text(n);
                         if (s == "all") c.activation.mode = ActivationPolicy::Mode::all;
                         else if (s == "uniform_subset") c.activation.mode = ActivationPolicy::Mode::uniform_subset;
                         else if (s == "fixed_set") c.activation.mode = ActivationPolicy::Mode::fixed_set;
                         else r.fail(n, "unknown activation mode '" + s + "'");
                     },
                     [](const ExperimentConfig& c) {
                         switch (c.activation.mode) {
                         case ActivationPolicy::Mode::all: return std::string("all");
                         case ActivationPolicy::Mode::uniform_subset: return std::string("uniform_subset");
                         case ActivationPolicy::Mode::fixed_set: return std::string("fixed_set");
                         }
                         return std::string("all");
                     }});
        f.push_back(real_field("activation", "fraction", "active share per round (uniform_subset)",
                               CFG(activation.fraction)));
        f.push_back({"activation", "fixed", "agent ids that update (fixed_set)",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         c.activation.fixed = r.list(n, [&](const YAML::Node& e) {
                             const std::uint64_t v = r.natural(e);
                             if (v > std::numeric_limits<NodeId>::max()) r.fail(e, "agent id out of range");
                             return static_cast<NodeId>(v);
                         });
                     },
                     [](const ExperimentConfig& c) {
                         return flow(c.activation.fixed, [](NodeId v) { return std::to_string(v); });
                     }});

        f.push_back(real_field("grading", "mu_t", "expected grade of a truthful agent, in [0, 1]",
                               CFG(grading.mu_T)));
        f.push_back(real_field("grading", "mu_d", "expected grade of an abstaining agent", CFG(grading.mu_D)));
        f.push_back(real_field("grading", "mu_h", "expected grade of a hallucinating agent", CFG(grading.mu_H)));
        f.push_back(real_field("grading", "noise_width", "width of the uniform grading noise",
                               CFG(grading.noise_width)));

        f.push_back(bool_field("readjust", "cap_floor", "cap the confidence floors at floor_cap * N",
                               CFG(readjust.cap_floor)));
        f.push_back(real_field("readjust", "floor_cap", "floor cap as a fraction of N", CFG(readjust.floor_cap)));

        f.push_back(real_field("cost", "xi_c", "communication cost weight", CFG(cost.xi_c)));
        f.push_back(real_field("cost", "xi_a", "accuracy cost weight", CFG(cost.xi_a)));
        f.push_back(bool_field("cost", "subtract_accuracy", "subtract the accuracy term instead of adding it",
                               CFG(cost.subtract_accuracy)));
        f.push_back(reals_field("cost", "comm_slope",
                                "per-degree token cost slope; empty means c_c(l, u) = l * u", CFG(comm_slope)));
        f.push_back(reals_field("cost", "comm_offset", "per-degree constant token cost", CFG(comm_offset)));

        f.push_back(count_field("simulate", "rounds", "ABM rounds", CFG(simulate.rounds)));

        f.push_back(real_field("meanfield", "t_end", "integration horizon", CFG(meanfield.t_end)));
        f.push_back(real_field("meanfield", "dt", "RK4 step", CFG(meanfield.dt)));
        f.push_back(count_field("meanfield", "sample_every", "steps between samples", CFG(meanfield.sample_every)));

        f.push_back(real_field("twoscale", "epsilon", "time-scale ratio of the coupled run", CFG(twoscale.epsilon)));
        f.push_back(real_field("twoscale", "t_end", "slow horizon", CFG(twoscale.t_end)));
        f.push_back(real_field("twoscale", "dt_slow", "slow step and sample spacing", CFG(twoscale.dt_slow)));
        f.push_back(real_field("twoscale", "dt_fast", "coupled step; 0 means epsilon * dt_slow",
                               CFG(twoscale.dt_fast)));
        f.push_back(reals_field("twoscale", "q0", "initial in-degree distribution; empty = generated network",
                                CFG(twoscale.q0)));
        f.push_back(real_field("twoscale", "lambda_add", "birth rate of the degree dynamics",
                               CFG(twoscale.slow.lambda_add)));
        f.push_back(real_field("twoscale", "lambda_remove", "death rate of the degree dynamics",
                               CFG(twoscale.slow.lambda_remove)));

        f.push_back(reals_field("epsilon_scan", "epsilons", "time-scale ratios, descending",
                                CFG(epsilon_scan.epsilons)));
        f.push_back(real_field("epsilon_scan", "t_end", "slow horizon", CFG(epsilon_scan.t_end)));
        f.push_back(real_field("epsilon_scan", "dt_slow", "slow step", CFG(epsilon_scan.dt_slow)));
        f.push_back(real_field("epsilon_scan", "boundary_layer", "errors are taken over t >= boundary_layer * epsilon",
                               CFG(epsilon_scan.boundary_layer)));

        f.push_back(count_field("reconfig_bench", "rounds", "ABM rounds per arm", CFG(bench.rounds)));
        f.push_back(count_field("reconfig_bench", "period", "rounds between readjustments", CFG(bench.period)));
        f.push_back(count_field("reconfig_bench", "trials", "matched trials per arm", CFG(bench.trials)));
        f.push_back(real_field("reconfig_bench", "target", "truthful level for time-to-target", CFG(bench.target)));
        f.push_back(count_field("reconfig_bench", "equilibrium_window", "final rounds averaged for the equilibrium",
                                CFG(bench.equilibrium_window)));

        f.push_back(count_field("prop1", "trials", "Monte Carlo trials (>= 500)", CFG(prop1.trials)));
        f.push_back(bool_field("prop1", "cap_floor", "cap the confidence floors", CFG(prop1.cap_floor)));
        f.push_back(real_field("prop1", "floor_cap", "floor cap as a fraction of N", CFG(prop1.floor_cap)));

        f.push_back(reals_field("sweep", "grid", "control values", CFG(sweep.grid)));
        f.push_back(count_field("sweep", "trials", "networks per control value (>= 5)", CFG(sweep.trials)));

        f.push_back(real_field("optimize", "u0", "initial control", CFG(optimize.u0)));
        f.push_back(real_field("optimize", "a0", "SPSA step gain", CFG(optimize.schedule.a0)));
        f.push_back(real_field("optimize", "c0", "SPSA perturbation size", CFG(optimize.schedule.c0)));
        f.push_back(real_field("optimize", "alpha", "step gain decay exponent", CFG(optimize.schedule.alpha)));
        f.push_back(real_field("optimize", "gamma", "perturbation decay exponent", CFG(optimize.schedule.gamma)));
        f.push_back(count_field("optimize", "steps", "SPSA iterations", CFG(optimize.schedule.steps)));
        f.push_back(real_field("optimize", "u_min", "lower control bound", CFG(optimize.schedule.u_min)));
        f.push_back(real_field("optimize", "u_max", "upper control bound", CFG(optimize.schedule.u_max)));
        f.push_back(count_field("optimize", "train_scenarios", "training scenario count",
                                CFG(optimize.train_scenarios)));
        f.push_back(count_field("optimize", "eval_scenarios", "held-out scenario count",
                                CFG(optimize.eval_scenarios)));

        f.push_back({"concentration", "n_list", "population sizes, increasing",
                     [](ExperimentConfig& c, const YAML::Node& n, const Reader& r) {
                         c.concentration.n_list = r.list(n, [&](const YAML::Node& e) {
                             return static_cast<std::size_t>(r.natural(e));
                         });
                     },
                     [](const ExperimentConfig& c) {
                         return flow(c.concentration.n_list, [](std::size_t v) { return std::to_string(v); });
                     }});
        f.push_back(count_field("concentration", "horizon", "rounds compared", CFG(concentration.horizon)));
        f.push_back(count_field("concentration", "trials", "trials per N (>= 30)", CFG(concentration.trials)));
        return f;
    }();
    return table;
}

#undef CFG

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

bool is_section(const std::string& name) {
    return std::any_of(fields().begin(), fields().end(),
                       [&](const Field& f) { return !f.section.empty() && f.section == name; });
}

std::vector<std::string> sections() {
    std::vector<std::string> out;
    for (const auto& f : fields())
        if (std::find(out.begin(), out.end(), f.section) == out.end()) out.push_back(f.section);
    return out;
}

void read_root(ExperimentConfig& cfg, const YAML::Node& root, const std::string& origin) {
    if (!root || root.IsNull()) return;
    if (!root.IsMap()) throw ConfigError(origin + ": top level must be a mapping", line_of(root));
    for (const auto& kv : root) {
        const std::string name = kv.first.as<std::string>();
        if (const Field* f = find_field("", name)) {
            f->read(cfg, kv.second, Reader{origin + ": " + name});
            continue;
        }
        if (!is_section(name)) throw ConfigError(origin + ": unknown key '" + name + "'", line_of(kv.first));
        if (kv.second.IsNull()) continue;
        if (!kv.second.IsMap()) throw ConfigError(origin + ": section '" + name + "' must be a mapping", line_of(kv.second));
        for (const auto& item : kv.second) {
            const std::string key = item.first.as<std::string>();
            const Field* f = find_field(name, key);
            if (!f) throw ConfigError(origin + ": unknown key '" + name + "." + key + "'", line_of(item.first));
            f->read(cfg, item.second, Reader{origin + ": " + f->path()});
        }
    }
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

} // namespace

std::string to_string(ExperimentKind kind) {
    for (const auto& [k, name] : kind_names())
        if (k == kind) return name;
    return "simulate";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (const auto& [k, name] : kind_names())
        if (name == s) return k;
    throw ValidationError("unknown experiment kind '" + s + "'");
}

const std::vector<ExperimentKind>& all_experiment_kinds() {
    static const std::vector<ExperimentKind> kinds = [] {
        std::vector<ExperimentKind> v;
        for (const auto& kv : kind_names()) v.push_back(kv.first);
        return v;
    }();
    return kinds;
}

ConfigError::ConfigError(const std::string& message, int line)
    : ValidationError(line > 0 ? message + " (line " + std::to_string(line) + ")" : message), line_(line) {}

void ExperimentConfig::validate() const {
    auto section = [](const std::string& name, auto&& check) {
        try {
            check();
        } catch (const ConfigError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ConfigError(name + ": " + e.what());
        }
    };
    section("network", [&] { network.validate(); });
    section("kernel", [&] { kernel.validate(); });
    section("kernel.tables", [&] {
        for (const auto& t : kernel_tables) {
            std::ifstream is(t.path);
            if (!is) throw ValidationError("cannot open kernel table '" + t.path + "'");
            TableKernel::read_csv(is);
        }
        static const std::vector<ExperimentKind> table_kinds{ExperimentKind::simulate, ExperimentKind::meanfield,
                                                             ExperimentKind::reduce};
        if (!kernel_tables.empty() && std::find(table_kinds.begin(), table_kinds.end(), kind) == table_kinds.end())
            throw ValidationError("table kernels are supported by simulate, meanfield and reduce only");
    });
    section("control", [&] {
        if (!(std::isfinite(u) && u >= 0.0)) throw ValidationError("u must be finite and >= 0");
        if (episode_rounds < 1) throw ValidationError("episode_rounds must be >= 1");
    });
    section("initial", [&] { initial.validate(); });
    section("activation", [&] {
        activation.validate();
        for (NodeId id : activation.fixed)
            if (id >= network.n) throw ValidationError("fixed agent id " + std::to_string(id) + " >= network.n");
    });
    section("grading", [&] { grading.validate(); });
    section("readjust", [&] { readjust.validate(); });
    section("cost", [&] {
        cost.validate();
        if (!comm_slope.empty()) TableCommCost(comm_slope, comm_offset);
        else if (!comm_offset.empty()) throw ValidationError("comm_offset needs comm_slope");
    });
    if (jobs < 1) throw ConfigError("jobs must be >= 1");

    switch (kind) {
    case ExperimentKind::simulate:
        section("simulate", [&] {
            if (simulate.rounds < 1) throw ValidationError("rounds must be >= 1");
        });
        break;
    case ExperimentKind::meanfield:
        section("meanfield", [&] {
            if (!(meanfield.dt > 0.0)) throw ValidationError("dt must be > 0");
            if (!(meanfield.t_end > 0.0)) throw ValidationError("t_end must be > 0");
            if (meanfield.sample_every < 1) throw ValidationError("sample_every must be >= 1");
        });
        break;
    case ExperimentKind::reduce:
        section("twoscale", [&] {
            TwoScaleConfig tc{twoscale.epsilon, twoscale.t_end, twoscale.dt_slow, twoscale.dt_fast};
            tc.validate();
            twoscale.slow.validate();
            if (!twoscale.q0.empty()) DegreeDistribution{twoscale.q0}.validate();
        });
        break;
    case ExperimentKind::epsilon_scan:
        section("epsilon_scan", [&] {
            const auto& e = epsilon_scan.epsilons;
            if (e.size() < 2) throw ValidationError("epsilons needs at least two values");
            for (std::size_t k = 0; k < e.size(); ++k) {
                if (!(e[k] > 0.0)) throw ValidationError("epsilons must be > 0");
                if (k > 0 && !(e[k] < e[k - 1])) throw ValidationError("epsilons must be strictly descending");
            }
            if (!(epsilon_scan.dt_slow > 0.0) || !(epsilon_scan.t_end > 0.0))
                throw ValidationError("t_end and dt_slow must be > 0");
            if (!(epsilon_scan.boundary_layer >= 0.0)) throw ValidationError("boundary_layer must be >= 0");
            twoscale.slow.validate();
            if (!twoscale.q0.empty()) DegreeDistribution{twoscale.q0}.validate();
        });
        break;
    case ExperimentKind::reconfig_bench:
        section("reconfig_bench", [&] {
            ReconfigBenchConfig b;
            b.rounds = bench.rounds;
            b.period = bench.period;
            b.trials = bench.trials;
            b.target = bench.target;
            b.equilibrium_window = bench.equilibrium_window;
            b.validate();
        });
        break;
    case ExperimentKind::prop1:
        section("prop1", [&] {
            if (prop1.trials < 500) throw ValidationError("trials must be >= 500");
            ReadjustConfig{prop1.cap_floor, prop1.floor_cap}.validate();
        });
        break;
    case ExperimentKind::sweep:
        section("sweep", [&] {
            if (sweep.grid.empty()) throw ValidationError("grid must be non-empty");
            for (double g : sweep.grid)
                if (!(std::isfinite(g) && g >= 0.0)) throw ValidationError("grid values must be finite and >= 0");
            if (sweep.trials < 5) throw ValidationError("trials must be >= 5");
        });
        break;
    case ExperimentKind::optimize:
        section("optimize", [&] {
            optimize.schedule.validate();
            if (!(optimize.u0 >= optimize.schedule.u_min && optimize.u0 <= optimize.schedule.u_max))
                throw ValidationError("u0 must lie in [u_min, u_max]");
            if (optimize.train_scenarios < 1 || optimize.eval_scenarios < 1)
                throw ValidationError("train_scenarios and eval_scenarios must be >= 1");
        });
        break;
    case ExperimentKind::concentration:
        section("concentration", [&] {
            const auto& n = concentration.n_list;
            if (n.empty()) throw ValidationError("n_list must be non-empty");
            for (std::size_t k = 0; k < n.size(); ++k) {
                if (n[k] < 2) throw ValidationError("n_list entries must be >= 2");
                if (k > 0 && !(n[k] > n[k - 1])) throw ValidationError("n_list must be strictly increasing");
                if (network.kind == NetworkSpec::Kind::power_law && network.max_degree >= n[k])
                    throw ValidationError("network.max_degree must be < every N in n_list");
            }
            if (concentration.horizon < 1) throw ValidationError("horizon must be >= 1");
            if (concentration.trials < 30) throw ValidationError("trials must be >= 30");
        });
        break;
    }
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    return parse_config_with_env(text, {}, origin);
}

ExperimentConfig parse_config_with_env(const std::string& text, const std::map<std::string, std::string>& env,
                                       const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(origin + ": " + e.msg, e.mark.line + 1);
    }
    ExperimentConfig cfg;
    read_root(cfg, root, origin);

    for (const auto& [name, value] : env) {
        static const std::string prefix = "LLMNET_";
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string rest = lower(name.substr(prefix.size()));
        const auto sep = rest.find("__");
        const std::string section = sep == std::string::npos ? "" : rest.substr(0, sep);
        const std::string key = sep == std::string::npos ? rest : rest.substr(sep + 2);
        const Field* f = find_field(section, key);
        if (!f) throw ConfigError(name + ": no configuration key '" + (section.empty() ? key : section + "." + key) + "'");
        YAML::Node node;
        try {
            node = YAML::Load(value);
        } catch (const YAML::ParserException& e) {
            throw ConfigError(name + ": " + e.msg);
        }
        try {
            f->read(cfg, node, Reader{name});
        } catch (const ConfigError& e) {
            // Line numbers of an environment value are meaningless.
            std::string msg = e.what();
            msg = msg.substr(0, msg.rfind(" (line "));
            throw ConfigError(msg);
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path);
}

std::map<std::string, std::string> llmnet_environment() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry = *e;
        if (entry.rfind("LLMNET_", 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        out[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return out;
}

std::string to_yaml(const ExperimentConfig& config) {
    std::string out;
    for (const auto& section : sections()) {
        const std::string indent = section.empty() ? "" : "  ";
        if (!section.empty()) out += section + ":\n";
        for (const auto& f : fields())
            if (f.section == section) out += indent + f.key + ": " + f.write(config) + "\n";
    }
    return out;
}

std::string config_reference() {
    const ExperimentConfig defaults;
    std::string out = "# llmnet configuration reference: every key with its default.\n"
                      "# Environment overrides: LLMNET_<SECTION>__<KEY>=<yaml value>, e.g. LLMNET_KERNEL__BETA0=3;\n"
                      "# top-level keys take a single name, e.g. LLMNET_SEED=7.\n";
    for (const auto& section : sections()) {
        const std::string indent = section.empty() ? "" : "  ";
        if (!section.empty()) out += "\n" + section + ":\n";
        for (const auto& f : fields())
            if (f.section == section) out += indent + f.key + ": " + f.write(defaults) + "  # " + f.doc + "\n";
    }
    return out;
}

} // namespace llmnet
