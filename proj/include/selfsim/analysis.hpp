#pragma once

// Norms of piecewise-constant functions, the fractal L^p modulus of continuity,
// inter-level differences and empirical convergence rates.

#include <selfsim/errors.hpp>
#include <selfsim/galerkin.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/parallel.hpp>
#include <selfsim/quadrature.hpp>
#include <selfsim/symbolic.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace selfsim {

/// (sum_w |u_w|^p mu(K_w))^(1/p)
inline double lp_norm(std::span<const double> values, std::span<const double> measures, double p) {
    if (!(p >= 1.0)) throw DomainError("lp_norm needs p >= 1");
    CompensatedSum s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double a = std::abs(values[i]);
        s += (p == 2.0 ? a * a : std::pow(a, p)) * measures[i];
    }
    return p == 2.0 ? std::sqrt(s.value()) : std::pow(s.value(), 1.0 / p);
}

inline double lp_norm(const PiecewiseConstant& u, double p) { return lp_norm(u.values(), u.measures(), p); }

/// ||a - b||_p after bringing both to the finer level.
inline double lp_distance(const PiecewiseConstant& a, const PiecewiseConstant& b, double p) {
    const int level = std::max(a.level(), b.level());
    const auto fa = refine(a, level);
    const auto fb = refine(b, level);
    std::vector<double> d(fa.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = fa[i] - fb[i];
    return lp_norm(d, fa.measures(), p);
}

/// Delta = ||u^{m+1} - u^m||_p; the arguments may come in either order.
inline double level_diff(const PiecewiseConstant& a, const PiecewiseConstant& b, double p = 2.0) {
    if (std::abs(a.level() - b.level()) != 1)
        throw DomainError("level_diff needs levels that differ by exactly one (got " + std::to_string(a.level()) +
                          " and " + std::to_string(b.level()) + ")");
    return lp_distance(a, b, p);
}

/// alpha^l = (log Delta^{l+1} - log Delta^l) / log lambda
inline std::vector<double> rate_alpha(std::span<const double> diffs, double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("rate_alpha needs 0 < lambda < 1");
    for (double d : diffs)
        if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("rate_alpha needs positive finite differences");
    std::vector<double> alphas;
    for (std::size_t l = 0; l + 1 < diffs.size(); ++l)
        alphas.push_back((std::log(diffs[l + 1]) - std::log(diffs[l])) / std::log(lambda));
    return alphas;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line needs at least two (x, y) pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("fit_line needs distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

/// Slope of log y against log x.
inline double fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("log-log fit needs positive data");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return fit_line(lx, ly).slope;
}

/// Exponent a in err_m ~ C lambda^(a m).
inline double fit_decay_exponent(std::span<const int> levels, std::span<const double> errors, double lambda) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(errors[i] > 0.0)) throw DomainError("decay fit needs positive errors");
        x.push_back(levels[i] * std::log(lambda));
        y.push_back(std::log(errors[i]));
    }
    return fit_line(x, y).slope;
}

struct RateReport {
    std::vector<int> levels;
    std::vector<double> diffs; ///< diffs[k] = ||u^{levels[k+1]} - u^{levels[k]}||
    std::vector<double> alphas;
    double lambda = 0.5;
    double p = 2.0;
    double t = 0.0;
    nlohmann::json meta = nlohmann::json::object();
};

/// Builds a report from solutions at consecutive levels.
inline RateReport rate_report(const std::vector<PiecewiseConstant>& solutions, double lambda, double p = 2.0) {
    if (solutions.size() < 3) throw DomainError("a rate report needs at least three levels");
    RateReport r;
    r.lambda = lambda;
    r.p = p;
    for (const auto& s : solutions) r.levels.push_back(s.level());
    for (std::size_t k = 0; k + 1 < solutions.size(); ++k) r.diffs.push_back(level_diff(solutions[k], solutions[k + 1], p));
    r.alphas = rate_alpha(r.diffs, lambda);
    return r;
}

inline nlohmann::json to_json(const RateReport& r) {
    nlohmann::json j;
    j["levels"] = r.levels;
    j["diffs"] = r.diffs;
    j["alphas"] = r.alphas;
    j["lambda"] = r.lambda;
    j["p"] = r.p;
    j["t"] = r.t;
    j["meta"] = r.meta;
    return j;
}

struct ModulusOptions {
    std::optional<Point> anchor; ///< node anchor; default fixed point of F_1
    unsigned threads = 1;
};

/// Discrete L^p modulus of continuity:
///   max over l in [m, depth], i != j of ( sum_{|w|=l} int_{K_wi} |phi(x + lambda^l tau_ij) - phi(x)|^p dmu )^(1/p).
/// x + lambda^l tau_ij = F_wj(z) when x = F_wi(z), so the integral is taken over
/// z in K against nodes at absolute level depth + 1.
template <class Field>
double modulus_lp(const Ifs& ifs, const Field& phi, int m, double p, int depth, const ModulusOptions& opt = {}) {
    if (m < 0 || depth < m) throw DomainError("modulus_lp needs 0 <= m <= depth");
    if (!(p >= 1.0)) throw DomainError("modulus_lp needs p >= 1");
    const int d = ifs.size();
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const Point x0 = opt.anchor ? *opt.anchor : ifs.fixed_point(1);
    if (x0.size() != dim) throw DomainError("modulus anchor has the wrong dimension");
    checked_power(d, depth + 1);

    struct Task {
        int level, i, j;
    };
    std::vector<Task> tasks;
    for (int l = m; l <= depth; ++l)
        for (int i = 1; i <= d; ++i)
            for (int j = 1; j <= d; ++j)
                if (i != j) tasks.push_back({l, i, j});
    std::vector<double> values(tasks.size());

    parallel_for(tasks.size(), opt.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const auto [l, i, j] = tasks[t];
            const auto rule = uniform_rule(ifs, depth - l, x0);
            const auto pw = ratio_powers(ifs.ratio(), l + 1);
            const auto offsets = level_offsets(ifs, l);
            const auto mu = cell_measures(ifs.weights(), l);
            const auto& si = ifs.map(i).shift();
            const auto& sj = ifs.map(j).shift();
            const double pi = ifs.weights()(i);
            Point xi(dim), xj(dim);
            CompensatedSum total;
            for (std::size_t w = 0; w < mu.size(); ++w) {
                const double* off = offsets.data() + w * dim;
                CompensatedSum cell;
                for (std::size_t k = 0; k < rule.count(); ++k) {
                    const auto z = rule.node(k);
                    for (std::size_t c = 0; c < dim; ++c) {
                        const double base = pw[l + 1] * z[c] + off[c];
                        xi[c] = base + pw[l] * si[c];
                        xj[c] = base + pw[l] * sj[c];
                    }
                    const double diff = std::abs(phi(std::span<const double>(xj)) - phi(std::span<const double>(xi)));
                    const double term = p == 2.0 ? diff * diff : std::pow(diff, p);
                    cell += rule.equal_weights() ? term / rule.denominator : rule.weights[k] * term;
                }
                total += mu[w] * pi * cell.value();
            }
            values[t] = std::pow(total.value(), 1.0 / p);
        }
    });
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

enum class BoundKind { Fractal, Dyadic };

/// Constant C in ||phi^m - phi||_p <= C |phi|_Lip lambda^(alpha m).
///   Fractal: d^(1/p) / (1 - lambda^alpha)
///   Dyadic (unit cube in R^D, lambda = 1/2): (2^D - 1)^(1/p) 2^alpha D^(alpha/2) / (2^alpha - 1)
inline double projection_bound_constant(const Ifs& ifs, double p, double alpha, BoundKind kind) {
    if (kind == BoundKind::Fractal)
        return std::pow(static_cast<double>(ifs.size()), 1.0 / p) / (1.0 - std::pow(ifs.ratio(), alpha));
    const double D = ifs.dimension();
    return std::pow(std::pow(2.0, D) - 1.0, 1.0 / p) * std::pow(2.0, alpha) * std::pow(D, alpha / 2.0) /
           (std::pow(2.0, alpha) - 1.0);
}

/// sup over m in [0, max_level] of lambda^(-alpha m) omega_p(phi, m); a finite-range
/// estimate of the generalized Lipschitz seminorm.
template <class Field>
double lip_norm_estimate(const Ifs& ifs, const Field& phi, double p, double alpha, int max_level, int depth,
                         const ModulusOptions& opt = {}) {
    double best = 0.0;
    for (int m = 0; m <= max_level; ++m)
        best = std::max(best, std::pow(ifs.ratio(), -alpha * m) * modulus_lp(ifs, phi, m, p, depth, opt));
    return best;
}

struct ProjectionOptions {
    int reference_level = 0;              ///< 0 means max(levels) + 2
    QuadSpec quad = QuadSpec::uniform(2); ///< rule for the cell means
    double alpha = 1.0;                   ///< exponent used in the bound
    std::optional<double> lip_norm;       ///< enables the bound check
    BoundKind bound = BoundKind::Fractal;
    std::uint64_t cap = kDefaultMaxCells;
};

struct ProjectionReport {
    std::vector<int> levels;
    std::vector<double> errors; ///< ||phi^m - phi^M||_p
    int reference_level = 0;
    double p = 2.0;
    double lambda = 0.5;
    double fitted_exponent = 0.0;
    std::vector<double> bounds; ///< empty unless a Lip norm was given
    bool bound_holds = true;
};

/// Projection errors against a deep reference level M and their fitted decay exponent.
template <class Field>
ProjectionReport projection_rate_study(const Ifs& ifs, const Field& phi, double p, std::vector<int> levels,
                                       const ProjectionOptions& opt = {}) {
    if (levels.size() < 2) throw DomainError("a projection study needs at least two levels");
    if (!std::is_sorted(levels.begin(), levels.end()) ||
        std::adjacent_find(levels.begin(), levels.end()) != levels.end() || levels.front() < 0)
        throw DomainError("projection study levels must be nonnegative and increasing");
    ProjectionReport r;
    r.levels = std::move(levels);
    r.p = p;
    r.lambda = ifs.ratio();
    r.reference_level = opt.reference_level > 0 ? opt.reference_level : r.levels.back() + 2;
    if (r.reference_level <= r.levels.back())
        throw DomainError("the reference level must exceed every study level");

    const auto ref = project(ifs, phi, r.reference_level, opt.quad, opt.cap);
    // phi^m is the p-weighted child average of phi^M, so coarsening the reference is exact.
    for (int m : r.levels) {
        const auto coarse = coarsen(ref, m);
        r.errors.push_back(lp_distance(coarse, ref, p));
    }
    r.fitted_exponent = fit_decay_exponent(r.levels, r.errors, r.lambda);
    if (opt.lip_norm) {
        const double C = projection_bound_constant(ifs, p, opt.alpha, opt.bound);
        const double base = opt.bound == BoundKind::Dyadic ? 0.5 : r.lambda;
        for (std::size_t k = 0; k < r.levels.size(); ++k) {
            r.bounds.push_back(C * *opt.lip_norm * std::pow(base, opt.alpha * r.levels[k]));
            if (!(r.errors[k] <= r.bounds.back())) r.bound_holds = false;
        }
    }
    return r;
}

inline nlohmann::json to_json(const ProjectionReport& r) {
    nlohmann::json j;
    j["levels"] = r.levels;
    j["errors"] = r.errors;
    j["reference_level"] = r.reference_level;
    j["p"] = r.p;
    j["lambda"] = r.lambda;
    j["fitted_exponent"] = r.fitted_exponent;
    if (!r.bounds.empty()) {
        j["bounds"] = r.bounds;
        j["bound_holds"] = r.bound_holds;
    }
    return j;
}

} // namespace selfsim
