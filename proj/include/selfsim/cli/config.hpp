#pragma once

// TOML run configuration. Every key is validated; unknown keys are rejected.
//
//   seed = 0
//   [ifs]            builtin = "ST" | "SC" | "UC", dimension (UC), or
//                    fixed_points = [[..], ..], ratio, name; optional weights
//   [model]          kernel / coupling / forcing / initial: an expression string
//                    or an inline table { preset = "...", <parameters> }
//   [discretization] levels, dt, t_end, t0, snapshots
//   [quadrature]     method, budget, seed, anchor
//   [output]         dir
//   [study]          integrand, p, levels, samples, repeats, depth, reference,
//                    reference_level, alpha, lip_norm, bound, diffs, methods

#include <selfsim/analysis.hpp>
#include <selfsim/errors.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/model.hpp>
#include <selfsim/quadrature.hpp>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace selfsim::cli {

struct DiscretizationConfig {
    std::vector<int> levels;
    double t0 = 0.0;
    double dt = 1e-3;
    double t_end = 0.0;
    std::vector<double> snapshots; ///< empty means {t_end}
};

struct OutputConfig {
    std::string dir = "out";
};

struct StudyConfig {
    std::optional<std::string> integrand; ///< INITIAL-scope expression in x
    double p = 2.0;
    std::vector<int> levels;
    std::vector<std::uint64_t> samples;
    int repeats = 1;
    int depth = 0; ///< 0 means max(levels) + 2
    std::optional<double> reference;
    int reference_level = 0;
    double alpha = 1.0;
    std::optional<double> lip_norm;
    BoundKind bound = BoundKind::Fractal;
    std::vector<double> diffs; ///< synthetic rate mode when nonempty
    std::vector<QuadMethod> methods;
};

struct RunConfig {
    Ifs ifs = builtin_ifs(BuiltinIfs::SierpinskiTriangle);
    ModelSpec model;
    DiscretizationConfig discretization;
    QuadSpec quad = QuadSpec::uniform(1);
    OutputConfig output;
    StudyConfig study;
    std::uint64_t seed = 0;
    std::string source; ///< original config text
};

namespace detail {

/// Walks one TOML table, recording which keys were read.
class TableReader {
public:
    TableReader(const toml::table& table, std::string path) : table_(&table), path_(std::move(path)) {}

    std::string key_path(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    const toml::node* node(std::string_view key) {
        seen_.insert(std::string(key));
        return table_->get(key);
    }

    bool has(std::string_view key) const { return table_->contains(key); }

    double number(std::string_view key, std::optional<double> fallback = {}) {
        const auto* n = node(key);
        if (n == nullptr) {
            if (fallback) return *fallback;
            throw ConfigError("missing required number", key_path(key));
        }
        return as_number(*n, key_path(key));
    }

    std::optional<double> optional_number(std::string_view key) {
        const auto* n = node(key);
        if (n == nullptr) return std::nullopt;
        return as_number(*n, key_path(key));
    }

    std::int64_t integer(std::string_view key, std::optional<std::int64_t> fallback = {}) {
        const auto* n = node(key);
        if (n == nullptr) {
            if (fallback) return *fallback;
            throw ConfigError("missing required integer", key_path(key));
        }
        return as_integer(*n, key_path(key));
    }

    std::string string(std::string_view key, std::optional<std::string> fallback = {}) {
        const auto* n = node(key);
        if (n == nullptr) {
            if (fallback) return *fallback;
            throw ConfigError("missing required string", key_path(key));
        }
        if (!n->is_string()) throw ConfigError("expected a string", key_path(key));
        return std::string(*n->value<std::string_view>());
    }

    std::vector<double> numbers(std::string_view key) {
        std::vector<double> out;
        const auto* n = node(key);
        if (n == nullptr) return out;
        const auto* arr = n->as_array();
        if (arr == nullptr) throw ConfigError("expected an array of numbers", key_path(key));
        for (std::size_t i = 0; i < arr->size(); ++i)
            out.push_back(as_number(*arr->get(i), key_path(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<std::int64_t> integers(std::string_view key) {
        std::vector<std::int64_t> out;
        const auto* n = node(key);
        if (n == nullptr) return out;
        const auto* arr = n->as_array();
        if (arr == nullptr) throw ConfigError("expected an array of integers", key_path(key));
        for (std::size_t i = 0; i < arr->size(); ++i)
            out.push_back(as_integer(*arr->get(i), key_path(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<std::string> strings(std::string_view key) {
        std::vector<std::string> out;
        const auto* n = node(key);
        if (n == nullptr) return out;
        const auto* arr = n->as_array();
        if (arr == nullptr) throw ConfigError("expected an array of strings", key_path(key));
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const auto* s = arr->get(i);
            if (!s->is_string()) throw ConfigError("expected a string", key_path(key) + "[" + std::to_string(i) + "]");
            out.emplace_back(*s->value<std::string_view>());
        }
        return out;
    }

    std::vector<std::vector<double>> number_rows(std::string_view key) {
        std::vector<std::vector<double>> out;
        const auto* n = node(key);
        if (n == nullptr) return out;
        const auto* arr = n->as_array();
        if (arr == nullptr) throw ConfigError("expected an array of arrays", key_path(key));
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const auto path = key_path(key) + "[" + std::to_string(i) + "]";
            const auto* row = arr->get(i)->as_array();
            if (row == nullptr) throw ConfigError("expected an array of numbers", path);
            std::vector<double> r;
            for (std::size_t k = 0; k < row->size(); ++k)
                r.push_back(as_number(*row->get(k), path + "[" + std::to_string(k) + "]"));
            out.push_back(std::move(r));
        }
        return out;
    }

    std::optional<TableReader> table(std::string_view key) {
        const auto* n = node(key);
        if (n == nullptr) return std::nullopt;
        const auto* t = n->as_table();
        if (t == nullptr) throw ConfigError("expected a table", key_path(key));
        return TableReader(*t, key_path(key));
    }

    /// Rejects every key that no accessor asked for.
    void finish() const {
        for (auto&& [k, v] : *table_)
            if (!seen_.contains(std::string(k.str()))) throw ConfigError("unknown key", key_path(k.str()));
    }

    static double as_number(const toml::node& n, const std::string& path) {
        if (const auto* i = n.as_integer()) return static_cast<double>(i->get());
        if (const auto* f = n.as_floating_point()) {
            if (!std::isfinite(f->get())) throw ConfigError("expected a finite number", path);
            return f->get();
        }
        throw ConfigError("expected a number", path);
    }

    static std::int64_t as_integer(const toml::node& n, const std::string& path) {
        if (const auto* i = n.as_integer()) return i->get();
        throw ConfigError("expected an integer", path);
    }

private:
    const toml::table* table_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto rethrow_as_config(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const ParseError&) {
        throw;
    } catch (const DomainError& e) {
        throw ConfigError(e.what(), path);
    }
}

inline int to_level(std::int64_t v, const std::string& path) {
    if (v < 0 || v > 64) throw ConfigError("level must be in [0, 64]", path);
    return static_cast<int>(v);
}

inline Ifs read_ifs(TableReader& t) {
    std::optional<BernoulliWeights> weights;
    const auto w = t.numbers("weights");
    if (!w.empty()) weights = rethrow_as_config(t.key_path("weights"), [&] { return BernoulliWeights(w); });

    if (t.has("builtin")) {
        if (t.has("fixed_points") || t.has("ratio"))
            throw ConfigError("give either builtin or fixed_points/ratio, not both", t.key_path("builtin"));
        const auto name = t.string("builtin");
        const auto dim = t.integer("dimension", 2);
        Ifs base = rethrow_as_config(t.key_path("builtin"), [&] { return builtin_ifs(name, static_cast<int>(dim)); });
        if (!weights) return base;
        std::vector<Point> fps;
        for (int i = 1; i <= base.size(); ++i) fps.push_back(base.fixed_point(i));
        return rethrow_as_config(t.key_path("weights"),
                                 [&] { return Ifs(base.name(), std::move(fps), base.ratio(), *weights); });
    }
    auto fps = t.number_rows("fixed_points");
    if (fps.empty()) throw ConfigError("missing builtin or fixed_points", t.key_path("builtin"));
    const double ratio = t.number("ratio");
    const auto name = t.string("name", std::string("custom"));
    const int d = static_cast<int>(fps.size());
    return rethrow_as_config(t.key_path("fixed_points"), [&] {
        return Ifs(name, std::move(fps), ratio, weights ? *weights : BernoulliWeights::uniform(d));
    });
}

/// A field is an expression string or an inline table { preset = name, params... }.
template <class Field, class FromExpr, class FromPreset>
Field read_field(TableReader& t, std::string_view key, Field fallback, FromExpr from_expr, FromPreset from_preset) {
    const auto path = t.key_path(key);
    const auto* n = t.node(key);
    if (n == nullptr) return fallback;
    if (n->is_string()) return from_expr(std::string(*n->value<std::string_view>()));
    const auto* tbl = n->as_table();
    if (tbl == nullptr) throw ConfigError("expected an expression string or a preset table", path);
    TableReader r(*tbl, path);
    const auto preset = r.string("preset");
    Field f = from_preset(preset, r);
    r.finish();
    return f;
}

inline ModelSpec read_model(TableReader& t) {
    ModelSpec m;
    auto unknown = [&](std::string_view key, const std::string& name) -> ConfigError {
        return ConfigError("unknown preset '" + name + "'", t.key_path(key) + ".preset");
    };
    m.kernel = read_field<KernelField>(
        t, "kernel", m.kernel, [](const std::string& s) { return kernel_expression(s); },
        [&](const std::string& name, TableReader& r) -> KernelField {
            if (name != "gaussian_kernel") throw unknown("kernel", name);
            return gaussian_kernel(r.number("rate", 2.0));
        });
    m.coupling = read_field<CouplingField>(
        t, "coupling", m.coupling, [](const std::string& s) { return coupling_expression(s); },
        [&](const std::string& name, TableReader&) -> CouplingField {
            if (name != "diffusion_coupling") throw unknown("coupling", name);
            return diffusion_coupling();
        });
    m.forcing = read_field<ForcingField>(
        t, "forcing", m.forcing, [](const std::string& s) { return forcing_expression(s); },
        [&](const std::string& name, TableReader&) -> ForcingField {
            if (name != "zero_forcing") throw unknown("forcing", name);
            return zero_forcing();
        });
    m.initial = read_field<InitialField>(
        t, "initial", m.initial, [](const std::string& s) { return initial_expression(s); },
        [&](const std::string& name, TableReader& r) -> InitialField {
            if (name != "sign_indicator_ic") throw unknown("initial", name);
            const auto branch = r.integer("branch", 2);
            return rethrow_as_config(r.key_path("branch"), [&] { return sign_indicator_ic(static_cast<int>(branch)); });
        });
    return m;
}

inline QuadSpec read_quad(TableReader& t, std::uint64_t default_seed, int dimension) {
    QuadSpec q;
    q.method = rethrow_as_config(t.key_path("method"), [&] { return parse_quad_method(t.string("method", "uniform")); });
    const auto budget = t.integer("budget", q.method == QuadMethod::McErgodic ? 1000 : 1);
    if (budget < 1) throw ConfigError("budget must be >= 1", t.key_path("budget"));
    q.budget = static_cast<std::uint64_t>(budget);
    const auto seed = t.integer("seed", static_cast<std::int64_t>(default_seed));
    q.seed = static_cast<std::uint64_t>(seed);
    auto anchor = t.numbers("anchor");
    if (!anchor.empty()) {
        if (static_cast<int>(anchor.size()) != dimension)
            throw ConfigError("anchor dimension does not match the IFS", t.key_path("anchor"));
        q.anchor = std::move(anchor);
    }
    return q;
}

inline StudyConfig read_study(TableReader& t) {
    StudyConfig s;
    if (t.has("integrand")) s.integrand = t.string("integrand");
    s.p = t.number("p", 2.0);
    if (!(s.p >= 1.0)) throw ConfigError("p must be >= 1", t.key_path("p"));
    for (auto v : t.integers("levels")) s.levels.push_back(to_level(v, t.key_path("levels")));
    for (auto v : t.integers("samples")) {
        if (v < 1) throw ConfigError("sample counts must be >= 1", t.key_path("samples"));
        s.samples.push_back(static_cast<std::uint64_t>(v));
    }
    s.repeats = static_cast<int>(t.integer("repeats", 1));
    if (s.repeats < 1) throw ConfigError("repeats must be >= 1", t.key_path("repeats"));
    s.depth = to_level(t.integer("depth", 0), t.key_path("depth"));
    s.reference = t.optional_number("reference");
    s.reference_level = to_level(t.integer("reference_level", 0), t.key_path("reference_level"));
    s.alpha = t.number("alpha", 1.0);
    if (!(s.alpha > 0.0 && s.alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]", t.key_path("alpha"));
    s.lip_norm = t.optional_number("lip_norm");
    const auto bound = t.string("bound", "fractal");
    if (bound == "fractal")
        s.bound = BoundKind::Fractal;
    else if (bound == "dyadic")
        s.bound = BoundKind::Dyadic;
    else
        throw ConfigError("bound must be 'fractal' or 'dyadic'", t.key_path("bound"));
    s.diffs = t.numbers("diffs");
    for (const auto& m : t.strings("methods"))
        s.methods.push_back(rethrow_as_config(t.key_path("methods"), [&] { return parse_quad_method(m); }));
    return s;
}

inline void validate_levels(const std::vector<int>& levels, const std::string& path) {
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (levels[i] <= levels[i - 1]) throw ConfigError("levels must be strictly increasing", path);
}

} // namespace detail

/// Parses and validates config text. `origin` names the source in error messages.
inline RunConfig parse_config(std::string_view text, const std::string& origin = "<config>") {
    toml::table root;
    try {
        root = toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML syntax error: " << e.description() << " (line " << e.source().begin.line << ", column "
            << e.source().begin.column << ")";
        throw ConfigError(msg.str(), origin);
    }
    detail::TableReader top(root, "");
    RunConfig cfg;
    cfg.source = std::string(text);
    const auto seed = top.integer("seed", 0);
    if (seed < 0) throw ConfigError("seed must be nonnegative", "seed");
    cfg.seed = static_cast<std::uint64_t>(seed);

    if (auto t = top.table("ifs")) {
        cfg.ifs = detail::read_ifs(*t);
        t->finish();
    }
    if (auto t = top.table("model")) {
        cfg.model = detail::read_model(*t);
        t->finish();
    }
    if (auto t = top.table("discretization")) {
        auto& d = cfg.discretization;
        for (auto v : t->integers("levels")) d.levels.push_back(detail::to_level(v, t->key_path("levels")));
        detail::validate_levels(d.levels, t->key_path("levels"));
        d.t0 = t->number("t0", 0.0);
        d.dt = t->number("dt", 1e-3);
        d.t_end = t->number("t_end", d.t0);
        d.snapshots = t->numbers("snapshots");
        if (!(d.dt > 0.0)) throw ConfigError("dt must be positive", t->key_path("dt"));
        const double ratio = (d.t_end - d.t0) / d.dt;
        if (d.t_end < d.t0 || std::abs(std::round(ratio) * d.dt - (d.t_end - d.t0)) > 1e-12)
            throw ConfigError("dt must divide t_end - t0", t->key_path("dt"));
        for (std::size_t i = 0; i < d.snapshots.size(); ++i) {
            const double r = (d.snapshots[i] - d.t0) / d.dt;
            if (d.snapshots[i] < d.t0 || d.snapshots[i] > d.t_end ||
                std::abs(std::round(r) * d.dt - (d.snapshots[i] - d.t0)) > 1e-12)
                throw ConfigError("snapshot time is not a grid point in [t0, t_end]",
                                  t->key_path("snapshots") + "[" + std::to_string(i) + "]");
        }
        t->finish();
    }
    if (auto t = top.table("quadrature")) {
        cfg.quad = detail::read_quad(*t, cfg.seed, cfg.ifs.dimension());
        t->finish();
    } else {
        cfg.quad.seed = cfg.seed;
    }
    if (cfg.quad.method == QuadMethod::VertexSt && !is_triangle_system(cfg.ifs))
        throw ConfigError("the vertex rule needs a 3-map planar system", "quadrature.method");
    if (auto t = top.table("output")) {
        cfg.output.dir = t->string("dir", cfg.output.dir);
        t->finish();
    }
    if (auto t = top.table("study")) {
        cfg.study = detail::read_study(*t);
        detail::validate_levels(cfg.study.levels, "study.levels");
        t->finish();
    }
    if (const auto* sign = std::get_if<SignIndicatorIc>(&cfg.model.initial); sign && sign->branch > cfg.ifs.size())
        throw ConfigError("branch exceeds the number of maps", "model.initial.branch");
    top.finish();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file", file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), file.string());
}

/// Replaces the run seed (and the quadrature seed derived from it).
inline void override_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.quad.seed = seed;
}

/// Fully resolved configuration, defaults included.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    auto& ifs = j["ifs"];
    ifs["name"] = c.ifs.name();
    ifs["ratio"] = c.ifs.ratio();
    ifs["fixed_points"] = nlohmann::json::array();
    for (int i = 1; i <= c.ifs.size(); ++i) ifs["fixed_points"].push_back(c.ifs.fixed_point(i));
    ifs["weights"] = std::vector<double>(c.ifs.weights().values().begin(), c.ifs.weights().values().end());
    auto& model = j["model"];
    model["kernel"] = describe(c.model.kernel);
    model["coupling"] = describe(c.model.coupling);
    model["forcing"] = describe(c.model.forcing);
    model["initial"] = describe(c.model.initial);
    auto& d = j["discretization"];
    d["levels"] = c.discretization.levels;
    d["t0"] = c.discretization.t0;
    d["dt"] = c.discretization.dt;
    d["t_end"] = c.discretization.t_end;
    d["snapshots"] = c.discretization.snapshots;
    auto& q = j["quadrature"];
    q["method"] = std::string(to_string(c.quad.method));
    q["budget"] = c.quad.budget;
    q["seed"] = c.quad.seed;
    if (c.quad.anchor) q["anchor"] = *c.quad.anchor;
    j["output"]["dir"] = c.output.dir;
    auto& s = j["study"];
    if (c.study.integrand) s["integrand"] = *c.study.integrand;
    s["p"] = c.study.p;
    s["levels"] = c.study.levels;
    s["samples"] = c.study.samples;
    s["repeats"] = c.study.repeats;
    s["depth"] = c.study.depth;
    if (c.study.reference) s["reference"] = *c.study.reference;
    s["reference_level"] = c.study.reference_level;
    s["alpha"] = c.study.alpha;
    if (c.study.lip_norm) s["lip_norm"] = *c.study.lip_norm;
    s["bound"] = c.study.bound == BoundKind::Fractal ? "fractal" : "dyadic";
    s["diffs"] = c.study.diffs;
    s["methods"] = nlohmann::json::array();
    for (auto m : c.study.methods) s["methods"].push_back(std::string(to_string(m)));
    return j;
}

} // namespace selfsim::cli
