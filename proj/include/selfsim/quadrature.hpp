#pragma once

// Integration against the self-similar measure mu:
//   MC_ERGODIC  - averages along shifts of one random symbol string
//   UNIFORM_SEQ - the point set {F_w(x0) : |w| = m}, weighted by mu(K_w)
//   VERTEX_ST   - equal-weight average over the vertices of all level-m triangles
// plus cell means (pullback through F_w) and the product rule on K x K.

#include <selfsim/errors.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/symbolic.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfsim {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    CompensatedSum& operator+=(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
        return *this;
    }

    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

enum class QuadMethod { McErgodic, UniformSeq, VertexSt };

inline std::string_view to_string(QuadMethod m) noexcept {
    switch (m) {
    case QuadMethod::McErgodic: return "mc";
    case QuadMethod::UniformSeq: return "uniform";
    case QuadMethod::VertexSt: return "vertex";
    }
    return "?";
}

inline QuadMethod parse_quad_method(std::string_view s) {
    if (s == "mc" || s == "MC_ERGODIC") return QuadMethod::McErgodic;
    if (s == "uniform" || s == "UNIFORM_SEQ") return QuadMethod::UniformSeq;
    if (s == "vertex" || s == "VERTEX_ST") return QuadMethod::VertexSt;
    throw DomainError("unknown quadrature method '" + std::string(s) + "' (expected mc, uniform or vertex)");
}

/// budget is the sample count N for MC_ERGODIC and the level m otherwise.
/// The anchor x0 defaults to the fixed point of F_1; it is ignored by VERTEX_ST.
struct QuadSpec {
    QuadMethod method = QuadMethod::UniformSeq;
    std::uint64_t budget = 1;
    std::uint64_t seed = 0;
    std::optional<Point> anchor;

    static QuadSpec uniform(int level) { return {QuadMethod::UniformSeq, static_cast<std::uint64_t>(level), 0, {}}; }
    static QuadSpec vertex(int level) { return {QuadMethod::VertexSt, static_cast<std::uint64_t>(level), 0, {}}; }
    static QuadSpec mc(std::uint64_t samples, std::uint64_t seed) { return {QuadMethod::McErgodic, samples, seed, {}}; }

    friend bool operator==(const QuadSpec&, const QuadSpec&) = default;
};

struct IntegralEstimate {
    double value = 0.0;
    QuadSpec spec;
    std::uint64_t n_evals = 0;
};

/// splitmix64 finalizer; derives the second stream of the product MC rule.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// i.i.d. symbols drawn from Bernoulli weights. The engine is std::mt19937_64
/// (output sequence fixed by the standard); a draw maps the top 53 bits to
/// u in [0, 1) and returns the first symbol whose cumulative weight exceeds u.
class SymbolSampler {
public:
    SymbolSampler(const BernoulliWeights& p, std::uint64_t seed) : engine_(seed) {
        double acc = 0.0;
        for (double x : p.values()) cumulative_.push_back(acc += x);
        cumulative_.back() = 1.0;
    }

    int operator()() {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        int s = 0;
        while (u >= cumulative_[static_cast<std::size_t>(s)]) ++s;
        return s + 1;
    }

private:
    std::mt19937_64 engine_;
    std::vector<double> cumulative_;
};

/// A fixed set of nodes in K with weights. Equal-weight rules store no weights
/// and divide the plain sum by `denominator`, so constants integrate exactly.
struct NodeRule {
    int dimension = 0;
    std::vector<double> points; ///< row-major, count() rows
    std::vector<double> weights; ///< empty for equal-weight rules
    double denominator = 1.0;
    std::uint64_t n_evals = 0;

    std::size_t count() const noexcept { return points.size() / static_cast<std::size_t>(dimension); }
    bool equal_weights() const noexcept { return weights.empty(); }

    std::span<const double> node(std::size_t k) const noexcept {
        return {points.data() + k * static_cast<std::size_t>(dimension), static_cast<std::size_t>(dimension)};
    }

    /// Nodes pushed through x -> ratio * x + offset.
    std::vector<double> mapped(double ratio, std::span<const double> offset) const {
        std::vector<double> out(points.size());
        const auto dim = static_cast<std::size_t>(dimension);
        for (std::size_t k = 0; k < count(); ++k)
            for (std::size_t c = 0; c < dim; ++c) out[k * dim + c] = ratio * points[k * dim + c] + offset[c];
        return out;
    }

    template <class Field>
    double integrate_mapped(const Field& phi, const std::vector<double>& nodes) const {
        const auto dim = static_cast<std::size_t>(dimension);
        CompensatedSum s;
        if (equal_weights()) {
            for (std::size_t k = 0; k < count(); ++k) s += phi(std::span<const double>(nodes.data() + k * dim, dim));
            return s.value() / denominator;
        }
        for (std::size_t k = 0; k < count(); ++k)
            s += weights[k] * phi(std::span<const double>(nodes.data() + k * dim, dim));
        return s.value();
    }
};

namespace detail {

inline Point resolve_anchor(const Ifs& ifs, const QuadSpec& spec) {
    Point x0 = spec.anchor ? *spec.anchor : ifs.fixed_point(1);
    if (static_cast<int>(x0.size()) != ifs.dimension())
        throw DomainError("quadrature anchor has dimension " + std::to_string(x0.size()) + ", IFS has " +
                          std::to_string(ifs.dimension()));
    return x0;
}

inline int level_of(const QuadSpec& spec) {
    if (spec.budget < 1) throw DomainError("quadrature budget must be >= 1");
    if (spec.budget > 64) throw CapacityError("quadrature level " + std::to_string(spec.budget) + " is too deep");
    return static_cast<int>(spec.budget);
}

inline void require_triangle(const Ifs& ifs) {
    if (!is_triangle_system(ifs)) throw DomainError("the vertex rule needs a 3-map planar (ST-type) system");
}

} // namespace detail

/// Nodes F_u(x0), |u| = level, weighted by mu(K_u) (equal weights 1/d^level for uniform p).
inline NodeRule uniform_rule(const Ifs& ifs, int level, std::span<const double> x0,
                             std::uint64_t cap = kDefaultMaxCells) {
    const auto n = checked_power(ifs.size(), level, cap);
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const double scale = ratio_powers(ifs.ratio(), level).back();
    const bool equal = ifs.weights().is_uniform();
    NodeRule rule;
    rule.dimension = ifs.dimension();
    rule.points.reserve(static_cast<std::size_t>(n) * dim);
    rule.denominator = equal ? static_cast<double>(n) : 1.0;
    rule.n_evals = n;
    for_each_cell(ifs, level, [&](std::uint64_t, std::span<const double> off, double mu) {
        for (std::size_t c = 0; c < dim; ++c) rule.points.push_back(scale * x0[c] + off[c]);
        if (!equal) rule.weights.push_back(mu);
    }, cap);
    return rule;
}

/// The three vertices of every level-`level` triangle, each weighted 1/3^(level+1).
inline NodeRule vertex_rule(const Ifs& ifs, int level, std::uint64_t cap = kDefaultMaxCells) {
    detail::require_triangle(ifs);
    const auto n = checked_power(3, level, cap / 3);
    const double scale = ratio_powers(ifs.ratio(), level).back();
    NodeRule rule;
    rule.dimension = 2;
    rule.points.reserve(static_cast<std::size_t>(n) * 6);
    rule.denominator = static_cast<double>(3 * n);
    rule.n_evals = 3 * n;
    for_each_cell(ifs, level, [&](std::uint64_t, std::span<const double> off, double) {
        for (int j = 1; j <= 3; ++j) {
            const auto& v = ifs.fixed_point(j);
            rule.points.push_back(scale * v[0] + off[0]);
            rule.points.push_back(scale * v[1] + off[1]);
        }
    }, cap);
    return rule;
}

/// Points pi(sigma^{i-1} s), i = 1..N, for a string s of 2N symbols drawn from p.
/// Each point truncates the coding map to the remaining 2N - i + 1 >= N + 1 symbols,
/// so its error is at most lambda^N diam(K).
inline NodeRule mc_rule(const Ifs& ifs, std::uint64_t samples, std::uint64_t seed, std::span<const double> x0) {
    if (samples < 1) throw DomainError("MC sample count must be >= 1");
    if (samples > (std::uint64_t{1} << 32)) throw CapacityError("MC sample count too large");
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const auto n = static_cast<std::size_t>(samples);
    SymbolSampler draw(ifs.weights(), seed);
    std::vector<std::uint8_t> s(2 * n);
    for (auto& x : s) x = static_cast<std::uint8_t>(draw());

    NodeRule rule;
    rule.dimension = ifs.dimension();
    rule.points.resize(n * dim);
    rule.denominator = static_cast<double>(n);
    rule.n_evals = samples;
    std::vector<double> y(x0.begin(), x0.end());
    for (std::size_t i = 2 * n; i-- > 0;) {
        const auto& map = ifs.map(s[i]);
        const auto& shift = map.shift();
        for (std::size_t c = 0; c < dim; ++c) y[c] = map.ratio() * y[c] + shift[c];
        if (i < n)
            for (std::size_t c = 0; c < dim; ++c) rule.points[i * dim + c] = y[c];
    }
    return rule;
}

/// Builds the node rule a QuadSpec describes (used for cell means and products).
inline NodeRule make_rule(const Ifs& ifs, const QuadSpec& spec, std::uint64_t cap = kDefaultMaxCells) {
    switch (spec.method) {
    case QuadMethod::McErgodic: return mc_rule(ifs, spec.budget, spec.seed, detail::resolve_anchor(ifs, spec));
    case QuadMethod::UniformSeq:
        return uniform_rule(ifs, detail::level_of(spec), detail::resolve_anchor(ifs, spec), cap);
    case QuadMethod::VertexSt: return vertex_rule(ifs, detail::level_of(spec), cap);
    }
    throw DomainError("unknown quadrature method");
}

/// Ergodic estimate: S_N = (1/N) sum_i phi(pi(sigma^{i-1} s)). Deterministic for a fixed seed.
template <class Field>
IntegralEstimate integrate_mc(const Ifs& ifs, const Field& phi, std::uint64_t samples, std::uint64_t seed,
                              std::optional<Point> anchor = {}) {
    QuadSpec spec{QuadMethod::McErgodic, samples, seed, std::move(anchor)};
    const auto rule = mc_rule(ifs, samples, seed, detail::resolve_anchor(ifs, spec));
    return {rule.integrate_mapped(phi, rule.points), std::move(spec), rule.n_evals};
}

/// Uniform-sequence rule: sum_{|w|=m} mu(K_w) phi(F_w(x0)); for uniform p this is the plain
/// average (1/d^m) sum phi(F_w(x0)). Streams over the cells, O(m) memory.
template <class Field>
IntegralEstimate integrate_uniform(const Ifs& ifs, const Field& phi, int m, std::optional<Point> anchor = {},
                                   std::uint64_t cap = kDefaultMaxCells) {
    if (m < 1) throw DomainError("integrate_uniform needs m >= 1");
    QuadSpec spec{QuadMethod::UniformSeq, static_cast<std::uint64_t>(m), 0, std::move(anchor)};
    const auto x0 = detail::resolve_anchor(ifs, spec);
    const auto n = checked_power(ifs.size(), m, cap);
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const double scale = ratio_powers(ifs.ratio(), m).back();
    const bool equal = ifs.weights().is_uniform();
    Point x(dim);
    CompensatedSum s;
    for_each_cell(ifs, m, [&](std::uint64_t, std::span<const double> off, double mu) {
        for (std::size_t c = 0; c < dim; ++c) x[c] = scale * x0[c] + off[c];
        s += equal ? phi(std::span<const double>(x)) : mu * phi(std::span<const double>(x));
    }, cap);
    return {equal ? s.value() / static_cast<double>(n) : s.value(), std::move(spec), n};
}

/// Vertex rule: (1/3^(m+1)) sum_{|w|=m} sum_j phi(F_w(v_j)). ST-type systems only.
template <class Field>
IntegralEstimate integrate_vertex_st(const Ifs& ifs, const Field& phi, int m, std::uint64_t cap = kDefaultMaxCells) {
    detail::require_triangle(ifs);
    if (m < 1) throw DomainError("integrate_vertex_st needs m >= 1");
    const auto n = checked_power(3, m, cap / 3);
    const double scale = ratio_powers(ifs.ratio(), m).back();
    Point x(2);
    CompensatedSum s;
    for_each_cell(ifs, m, [&](std::uint64_t, std::span<const double> off, double) {
        for (int j = 1; j <= 3; ++j) {
            const auto& v = ifs.fixed_point(j);
            x[0] = scale * v[0] + off[0];
            x[1] = scale * v[1] + off[1];
            s += phi(std::span<const double>(x));
        }
    }, cap);
    return {s.value() / static_cast<double>(3 * n), QuadSpec::vertex(m), 3 * n};
}

template <class Field>
IntegralEstimate integrate(const Ifs& ifs, const Field& phi, const QuadSpec& spec,
                           std::uint64_t cap = kDefaultMaxCells) {
    switch (spec.method) {
    case QuadMethod::McErgodic: return integrate_mc(ifs, phi, spec.budget, spec.seed, spec.anchor);
    case QuadMethod::UniformSeq: return integrate_uniform(ifs, phi, detail::level_of(spec), spec.anchor, cap);
    case QuadMethod::VertexSt: return integrate_vertex_st(ifs, phi, detail::level_of(spec), cap);
    }
    throw DomainError("unknown quadrature method");
}

/// Mean of phi over K_w, computed as the integral of phi o F_w against mu.
template <class Field>
double cell_mean(const Ifs& ifs, const Field& phi, const Word& w, const NodeRule& rule) {
    const auto f = compose_map(ifs, w);
    return rule.integrate_mapped(phi, rule.mapped(f.ratio, f.offset));
}

template <class Field>
double cell_mean(const Ifs& ifs, const Field& phi, const Word& w, const QuadSpec& spec) {
    return cell_mean(ifs, phi, w, make_rule(ifs, spec));
}

/// Mean of W over K_w x K_v given the nodes already mapped into each cell.
/// Tensor rules sum each unordered node pair {k, l} as one term a_kl + a_lk, so a
/// kernel with W(x, y) == W(y, x) bitwise yields entries with W_wv == W_vw bitwise.
/// MC rules pair node i of one stream with node i of the other.
template <class Kernel>
double product_mean_mapped(const Kernel& kernel, const NodeRule& rule, const double* xs, const double* ys,
                           const NodeRule* paired = nullptr) {
    const auto dim = static_cast<std::size_t>(rule.dimension);
    const std::size_t q = rule.count();
    auto at = [dim](const double* base, std::size_t k) { return std::span<const double>(base + k * dim, dim); };
    if (paired != nullptr) {
        CompensatedSum s;
        for (std::size_t k = 0; k < q; ++k) s += kernel(at(xs, k), at(ys, k));
        return s.value() / rule.denominator;
    }
    CompensatedSum s;
    if (rule.equal_weights()) {
        for (std::size_t k = 0; k < q; ++k) {
            double row = kernel(at(xs, k), at(ys, k));
            for (std::size_t l = k + 1; l < q; ++l) row += kernel(at(xs, k), at(ys, l)) + kernel(at(xs, l), at(ys, k));
            s += row;
        }
        return s.value() / (rule.denominator * rule.denominator);
    }
    const auto& wt = rule.weights;
    for (std::size_t k = 0; k < q; ++k) {
        double row = (wt[k] * wt[k]) * kernel(at(xs, k), at(ys, k));
        for (std::size_t l = k + 1; l < q; ++l)
            row += (wt[k] * wt[l]) * kernel(at(xs, k), at(ys, l)) + (wt[l] * wt[k]) * kernel(at(xs, l), at(ys, k));
        s += row;
    }
    return s.value();
}

/// Second node stream for MC product rules (independent string, seed splitmix64(seed)).
inline NodeRule mc_partner_rule(const Ifs& ifs, const QuadSpec& spec) {
    return mc_rule(ifs, spec.budget, splitmix64(spec.seed), detail::resolve_anchor(ifs, spec));
}

/// Mean of W over K_w x K_v through the product system F_ij = (F_i, F_j).
/// UNIFORM_SEQ at level l uses d^(2l) point pairs, VERTEX_ST 3^(2l+2), MC N pairs.
template <class Kernel>
double product_cell_mean(const Ifs& ifs, const Kernel& kernel, const Word& w, const Word& v, const QuadSpec& spec) {
    if (w.length() != v.length()) throw DomainError("product_cell_mean needs |w| == |v|");
    const auto rule = make_rule(ifs, spec);
    const auto fw = compose_map(ifs, w);
    const auto fv = compose_map(ifs, v);
    const auto xs = rule.mapped(fw.ratio, fw.offset);
    if (spec.method == QuadMethod::McErgodic) {
        const auto partner = mc_partner_rule(ifs, spec);
        const auto ys = partner.mapped(fv.ratio, fv.offset);
        return product_mean_mapped(kernel, rule, xs.data(), ys.data(), &partner);
    }
    const auto ys = rule.mapped(fv.ratio, fv.offset);
    return product_mean_mapped(kernel, rule, xs.data(), ys.data());
}

} // namespace selfsim
