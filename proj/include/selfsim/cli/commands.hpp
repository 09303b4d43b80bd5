#pragma once

// Subcommand implementations. Each writes its artifacts under the output
// directory and embeds the resolved config and the library version in them.

#include <selfsim/selfsim.hpp>
#include <selfsim/cli/config.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace selfsim::cli {

namespace fs = std::filesystem;

struct RunOptions {
    std::optional<fs::path> out;   ///< overrides output.dir
    std::optional<fs::path> cache; ///< kernel cache directory; caching is off when empty
    unsigned threads = 0;          ///< 0 = one per hardware thread
    std::ostream* log = nullptr;
};

inline fs::path output_dir(const RunConfig& cfg, const RunOptions& opt) {
    return opt.out ? *opt.out : fs::path(cfg.output.dir);
}

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_seconds(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f s", s);
    return buf;
}

inline void write_text(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + file.string());
    os << text;
    if (!os) throw Error("short write to " + file.string());
}

inline void write_json(const fs::path& file, const nlohmann::json& j) { write_text(file, j.dump(2) + "\n"); }

inline nlohmann::json stamp(const RunConfig& cfg, std::string_view command) {
    nlohmann::json j;
    j["tool"] = "selfsim";
    j["version"] = kVersion;
    j["command"] = std::string(command);
    j["config"] = to_json(cfg);
    return j;
}

inline void log(const RunOptions& opt, const std::string& line) {
    if (opt.log != nullptr) *opt.log << line << '\n';
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Expr require_integrand(const RunConfig& cfg) {
    if (!cfg.study.integrand) throw ConfigError("missing integrand expression", "study.integrand");
    return Expr::parse(*cfg.study.integrand, Scope::Initial);
}

} // namespace detail

struct LevelSolution {
    int level = 0;
    std::vector<Snapshot> snapshots;
    std::uint64_t assembly_cost = 0;
    bool cache_hit = false;
    double assemble_seconds = 0.0;
    double integrate_seconds = 0.0;
};

/// Kernel matrix for one level, read from or written to the cache when one is configured.
inline KernelMatrix level_kernel(const RunConfig& cfg, int m, const RunOptions& opt, bool* cache_hit = nullptr) {
    std::optional<fs::path> file;
    std::uint64_t key = 0;
    if (opt.cache) {
        key = kernel_cache_key(cfg.ifs, cfg.model.kernel, m, cfg.quad);
        file = kernel_cache_path(*opt.cache, key, m);
        if (auto km = load_kernel(*file, key, cfg.quad); km && km->level == m) {
            if (cache_hit != nullptr) *cache_hit = true;
            return std::move(*km);
        }
    }
    if (cache_hit != nullptr) *cache_hit = false;
    auto km = assemble_kernel(cfg.ifs, cfg.model.kernel, m, cfg.quad, opt.threads);
    if (file) save_kernel(*file, km, key);
    return km;
}

/// Assembles (or loads) the kernel, projects the initial datum and integrates to t_end.
inline LevelSolution solve_level(const RunConfig& cfg, int m, const RunOptions& opt) {
    const auto& d = cfg.discretization;
    LevelSolution s;
    s.level = m;
    auto t0 = std::chrono::steady_clock::now();
    const auto kernel = level_kernel(cfg, m, opt, &s.cache_hit);
    s.assembly_cost = s.cache_hit ? 0 : kernel.cost;
    s.assemble_seconds = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto u0 = project_initial(cfg.ifs, cfg.model.initial, m, cfg.quad);
    const auto grid = TimeGrid::make(d.t0, d.t_end, d.dt);
    s.snapshots = integrate(cfg.model, kernel, u0, grid, d.snapshots, opt.threads);
    s.integrate_seconds = detail::seconds_since(t0);
    detail::log(opt, "level " + std::to_string(m) + ": " + std::to_string(u0.size()) + " cells, assembly " +
                         (s.cache_hit ? std::string("cached") : detail::format_seconds(s.assemble_seconds)) +
                         ", integration " + detail::format_seconds(s.integrate_seconds));
    return s;
}

/// CSV rows `level,word,word_index,h,value,t` for every snapshot, sorted by h(w).
/// The first line is a comment carrying the version and the resolved config.
inline std::string solution_csv(const RunConfig& cfg, const LevelSolution& s) {
    const int d = cfg.ifs.size();
    const int m = s.level;
    const auto n = static_cast<std::uint64_t>(checked_power(d, m));
    std::vector<std::uint64_t> order(n);
    std::vector<double> h(n);
    std::vector<std::string> names(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto w = Word::decode(d, m, i);
        h[i] = address_map_h(w);
        names[i] = w.str();
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return h[a] < h[b]; });

    std::string out = "# selfsim " + std::string(kVersion) + " config=" + to_json(cfg).dump() + "\n";
    out += "level,word,word_index,h,value,t\n";
    for (const auto& snap : s.snapshots) {
        const std::string t = detail::format_double(snap.t);
        for (auto i : order) {
            out += std::to_string(m);
            out += ',';
            out += names[i];
            out += ',';
            out += std::to_string(i);
            out += ',';
            out += detail::format_double(h[i]);
            out += ',';
            out += detail::format_double(snap.state[static_cast<std::size_t>(i)]);
            out += ',';
            out += t;
            out += '\n';
        }
    }
    return out;
}

struct SimulateResult {
    std::vector<LevelSolution> levels;
    std::vector<fs::path> files;
    nlohmann::json manifest;
};

inline SimulateResult run_simulate(const RunConfig& cfg, const RunOptions& opt = {}) {
    if (cfg.discretization.levels.empty()) throw ConfigError("at least one level is required", "discretization.levels");
    const auto dir = output_dir(cfg, opt);
    SimulateResult r;
    r.manifest = detail::stamp(cfg, "simulate");
    r.manifest["source"] = cfg.source;
    r.manifest["levels"] = nlohmann::json::array();
    for (int m : cfg.discretization.levels) {
        auto s = solve_level(cfg, m, opt);
        const auto csv = solution_csv(cfg, s);
        const auto file = dir / ("solution_m" + std::to_string(m) + ".csv");
        detail::write_text(file, csv);
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(csv)));
        r.manifest["levels"].push_back({{"level", m},
                                        {"file", file.filename().string()},
                                        {"fnv1a64", hash},
                                        {"cells", s.snapshots.front().state.size()},
                                        {"assembly_cost", s.assembly_cost},
                                        {"kernel_cache_hit", s.cache_hit},
                                        {"assemble_seconds", s.assemble_seconds},
                                        {"integrate_seconds", s.integrate_seconds}});
        r.files.push_back(file);
        r.levels.push_back(std::move(s));
    }
    const auto manifest = dir / "manifest.json";
    detail::write_json(manifest, r.manifest);
    r.files.push_back(manifest);
    return r;
}

/// Delta^l and alpha^l at t_end across consecutive levels, or from injected
/// differences when study.diffs is set.
inline RateReport run_rates(const RunConfig& cfg, const RunOptions& opt = {}) {
    RateReport report;
    report.lambda = cfg.ifs.ratio();
    report.p = cfg.study.p;
    report.t = cfg.discretization.t_end;
    if (!cfg.study.diffs.empty()) {
        if (cfg.study.diffs.size() < 2) throw ConfigError("synthetic mode needs at least two differences", "study.diffs");
        report.diffs = cfg.study.diffs;
        report.alphas = detail::rethrow_as_config("study.diffs", [&] { return rate_alpha(report.diffs, report.lambda); });
        const auto& lv = cfg.discretization.levels;
        if (lv.size() == report.diffs.size() + 1) {
            report.levels = lv;
        } else {
            report.levels.resize(report.diffs.size() + 1);
            std::iota(report.levels.begin(), report.levels.end(), 0);
        }
        report.meta["mode"] = "synthetic";
    } else {
        const auto& lv = cfg.discretization.levels;
        if (lv.size() < 3) throw ConfigError("rate estimation needs at least three levels", "discretization.levels");
        for (std::size_t i = 1; i < lv.size(); ++i)
            if (lv[i] != lv[i - 1] + 1) throw ConfigError("rate estimation needs consecutive levels", "discretization.levels");
        std::vector<PiecewiseConstant> finals;
        nlohmann::json timings = nlohmann::json::array();
        for (int m : lv) {
            auto s = solve_level(cfg, m, opt);
            finals.push_back(s.snapshots.back().state);
            timings.push_back({{"level", m}, {"assemble_seconds", s.assemble_seconds},
                               {"integrate_seconds", s.integrate_seconds}, {"kernel_cache_hit", s.cache_hit}});
        }
        auto computed = rate_report(finals, report.lambda, report.p);
        report.levels = std::move(computed.levels);
        report.diffs = std::move(computed.diffs);
        report.alphas = std::move(computed.alphas);
        report.meta["mode"] = "simulation";
        report.meta["timings"] = std::move(timings);
    }
    auto j = detail::stamp(cfg, "rates");
    j["report"] = to_json(report);
    detail::write_json(output_dir(cfg, opt) / "rates.json", j);
    return report;
}

struct QuadratureRow {
    QuadMethod method = QuadMethod::UniformSeq;
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
    int repeats = 1;
    std::uint64_t n_evals = 0;
    double estimate = 0.0;
    double error = 0.0;
    std::optional<double> increment; ///< |S_k - S_{k-1}| for consecutive budgets
};

struct QuadratureTable {
    std::vector<QuadratureRow> rows;
    nlohmann::json manifest;
};

/// Convergence table for the configured integrand. Errors are taken against
/// study.reference when given, otherwise against the method's deepest estimate.
inline QuadratureTable run_quadrature(const RunConfig& cfg, const RunOptions& opt = {}) {
    const auto phi = detail::require_integrand(cfg);
    std::vector<QuadMethod> methods = cfg.study.methods;
    if (methods.empty()) {
        if (!cfg.study.levels.empty()) {
            methods.push_back(QuadMethod::UniformSeq);
            if (is_triangle_system(cfg.ifs)) methods.push_back(QuadMethod::VertexSt);
        }
        if (!cfg.study.samples.empty()) methods.push_back(QuadMethod::McErgodic);
    }
    if (methods.empty()) throw ConfigError("give study.levels and/or study.samples", "study");

    QuadratureTable table;
    table.manifest = detail::stamp(cfg, "quadrature");
    table.manifest["methods"] = nlohmann::json::object();
    const auto anchor = cfg.quad.anchor;
    for (auto method : methods) {
        std::vector<QuadratureRow> rows;
        if (method == QuadMethod::McErgodic) {
            if (cfg.study.samples.empty()) throw ConfigError("the mc method needs sample counts", "study.samples");
            for (auto n : cfg.study.samples) {
                QuadratureRow row{method, n, cfg.quad.seed, cfg.study.repeats, 0, 0.0, 0.0, {}};
                CompensatedSum mean, sq;
                std::vector<double> values;
                for (int r = 0; r < cfg.study.repeats; ++r) {
                    const auto est = integrate_mc(cfg.ifs, phi, n, cfg.quad.seed + static_cast<std::uint64_t>(r), anchor);
                    values.push_back(est.value);
                    mean += est.value;
                    row.n_evals += est.n_evals;
                }
                row.estimate = mean.value() / cfg.study.repeats;
                if (cfg.study.reference) {
                    for (double v : values) sq += (v - *cfg.study.reference) * (v - *cfg.study.reference);
                    row.error = std::sqrt(sq.value() / cfg.study.repeats);
                }
                rows.push_back(row);
            }
        } else {
            if (method == QuadMethod::VertexSt && !is_triangle_system(cfg.ifs))
                throw ConfigError("the vertex rule needs a 3-map planar system", "study.methods");
            if (cfg.study.levels.empty()) throw ConfigError("level-based methods need study.levels", "study.levels");
            for (int m : cfg.study.levels) {
                if (m < 1) throw ConfigError("quadrature levels must be >= 1", "study.levels");
                const auto est = method == QuadMethod::UniformSeq ? integrate_uniform(cfg.ifs, phi, m, anchor)
                                                                  : integrate_vertex_st(cfg.ifs, phi, m);
                QuadratureRow row{method, static_cast<std::uint64_t>(m), 0, 1, est.n_evals, est.value, 0.0, {}};
                if (cfg.study.reference) row.error = std::abs(est.value - *cfg.study.reference);
                rows.push_back(row);
            }
        }
        for (std::size_t k = 1; k < rows.size(); ++k) rows[k].increment = std::abs(rows[k].estimate - rows[k - 1].estimate);
        if (!cfg.study.reference)
            for (auto& row : rows) row.error = std::abs(row.estimate - rows.back().estimate);

        // Slopes: increments against h = lambda^m for level rules, errors against N for MC.
        nlohmann::json info;
        std::vector<double> x, y;
        for (const auto& row : rows) {
            if (method == QuadMethod::McErgodic) {
                if (row.error > 0.0) x.push_back(static_cast<double>(row.budget)), y.push_back(row.error);
            } else if (row.increment && *row.increment > 0.0) {
                x.push_back(std::pow(cfg.ifs.ratio(), static_cast<double>(row.budget)));
                y.push_back(*row.increment);
            }
        }
        if (x.size() >= 2) info[method == QuadMethod::McErgodic ? "error_slope_vs_samples" : "increment_slope_vs_h"] =
            fit_loglog_slope(x, y);
        if (method == QuadMethod::McErgodic) {
            info["seed"] = cfg.quad.seed;
            info["repeats"] = cfg.study.repeats;
        }
        info["n_evals"] = nlohmann::json::array();
        for (const auto& row : rows) info["n_evals"].push_back(row.n_evals);
        table.manifest["methods"][std::string(to_string(method))] = std::move(info);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
    }

    std::string csv = "# selfsim " + std::string(kVersion) + " config=" + to_json(cfg).dump() + "\n";
    csv += "method,budget,seed,repeats,n_evals,estimate,error,increment\n";
    for (const auto& r : table.rows) {
        csv += std::string(to_string(r.method)) + ',' + std::to_string(r.budget) + ',' +
               (r.method == QuadMethod::McErgodic ? std::to_string(r.seed) : std::string()) + ',' +
               std::to_string(r.repeats) + ',' + std::to_string(r.n_evals) + ',' + detail::format_double(r.estimate) +
               ',' + detail::format_double(r.error) + ',' + (r.increment ? detail::format_double(*r.increment) : "") +
               '\n';
    }
    const auto dir = output_dir(cfg, opt);
    detail::write_text(dir / "quadrature.csv", csv);
    detail::write_json(dir / "quadrature.json", table.manifest);
    return table;
}

struct ModulusReport {
    std::vector<int> levels;
    std::vector<double> omega;
    int depth = 0;
    double p = 2.0;
};

inline ModulusReport run_modulus(const RunConfig& cfg, const RunOptions& opt = {}) {
    const auto phi = detail::require_integrand(cfg);
    if (cfg.study.levels.empty()) throw ConfigError("missing levels", "study.levels");
    ModulusReport r;
    r.levels = cfg.study.levels;
    r.p = cfg.study.p;
    r.depth = cfg.study.depth > 0 ? cfg.study.depth : r.levels.back() + 2;
    if (r.depth < r.levels.back()) throw ConfigError("depth must be >= every level", "study.depth");
    ModulusOptions mo;
    mo.anchor = cfg.quad.anchor;
    mo.threads = opt.threads;
    for (int m : r.levels) r.omega.push_back(modulus_lp(cfg.ifs, phi, m, r.p, r.depth, mo));
    auto j = detail::stamp(cfg, "modulus");
    j["levels"] = r.levels;
    j["omega"] = r.omega;
    j["depth"] = r.depth;
    j["p"] = r.p;
    detail::write_json(output_dir(cfg, opt) / "modulus.json", j);
    return r;
}

/// Projection errors ||phi^m - phi^M||_p; cell means use the [quadrature] rule.
inline ProjectionReport run_project(const RunConfig& cfg, const RunOptions& opt = {}) {
    const auto phi = detail::require_integrand(cfg);
    if (cfg.study.levels.size() < 2) throw ConfigError("at least two levels are required", "study.levels");
    ProjectionOptions po;
    po.reference_level = cfg.study.reference_level;
    po.quad = cfg.quad;
    po.alpha = cfg.study.alpha;
    po.lip_norm = cfg.study.lip_norm;
    po.bound = cfg.study.bound;
    auto report = projection_rate_study(cfg.ifs, phi, cfg.study.p, cfg.study.levels, po);
    auto j = detail::stamp(cfg, "project");
    j["report"] = to_json(report);
    detail::write_json(output_dir(cfg, opt) / "projection.json", j);
    return report;
}

/// Version, builtin systems, presets and methods; plus the resolved config when given.
inline nlohmann::json info(const std::optional<RunConfig>& cfg = {}) {
    nlohmann::json j;
    j["tool"] = "selfsim";
    j["version"] = kVersion;
    j["builtin_ifs"] = {"ST", "SC", "UC(dim)"};
    j["presets"] = preset_names();
    j["quadrature_methods"] = {"mc", "uniform", "vertex"};
    if (cfg) j["config"] = to_json(*cfg);
    return j;
}

} // namespace selfsim::cli
