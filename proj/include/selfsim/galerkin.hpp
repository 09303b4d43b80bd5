#pragma once

// Piecewise-constant Galerkin discretization on the level-m partition {K_w : |w| = m}:
//   du_w/dt = f(t, u_w) + sum_v W_wv D(u_w, u_v) mu(K_v),   W_wv = mean of W over K_w x K_v.

#include <selfsim/errors.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/model.hpp>
#include <selfsim/parallel.hpp>
#include <selfsim/quadrature.hpp>
#include <selfsim/symbolic.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace selfsim {

/// Upper bound on d^m x d^m kernel entries (3^16 doubles, ~344 MB).
inline constexpr std::uint64_t kDefaultMaxKernelEntries = 43046721ULL;

/// sum_{|w|=m} u_w 1_{K_w}; coefficients indexed by the word encoding.
class PiecewiseConstant {
public:
    PiecewiseConstant(BernoulliWeights weights, int level, std::vector<double> values)
        : weights_(std::move(weights)), level_(level), values_(std::move(values)) {
        measures_ = std::make_shared<const std::vector<double>>(cell_measures(weights_, level_));
        if (values_.size() != measures_->size())
            throw DomainError("expected " + std::to_string(measures_->size()) + " coefficients at level " +
                              std::to_string(level_) + ", got " + std::to_string(values_.size()));
    }

    /// Shares the measure table of `like` (same weights and level).
    PiecewiseConstant(const PiecewiseConstant& like, std::vector<double> values)
        : weights_(like.weights_), level_(like.level_), values_(std::move(values)), measures_(like.measures_) {
        if (values_.size() != measures_->size()) throw DomainError("coefficient count does not match the level");
    }

    static PiecewiseConstant constant(const BernoulliWeights& p, int level, double c) {
        return {p, level, std::vector<double>(static_cast<std::size_t>(checked_power(p.size(), level)), c)};
    }

    int level() const noexcept { return level_; }
    int alphabet_size() const noexcept { return weights_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    const BernoulliWeights& weights() const noexcept { return weights_; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> measures() const noexcept { return *measures_; }
    const std::shared_ptr<const std::vector<double>>& shared_measures() const noexcept { return measures_; }

    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }

    /// sum_w u_w mu(K_w)
    double weighted_mean() const {
        CompensatedSum s;
        for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * (*measures_)[i];
        return s.value();
    }

private:
    BernoulliWeights weights_;
    int level_;
    std::vector<double> values_;
    std::shared_ptr<const std::vector<double>> measures_;
};

/// Dense d^m x d^m matrix of cell-pair kernel means, row-major by word encoding.
struct KernelMatrix {
    int level = 0;
    std::size_t size = 0;
    std::vector<double> entries;
    QuadSpec quad;
    std::uint64_t cost = 0; ///< kernel evaluations spent in assembly

    double operator()(std::size_t w, std::size_t v) const noexcept { return entries[w * size + v]; }
};

/// Each child cell inherits its parent's coefficient; the L^2(K, mu) element is unchanged.
inline PiecewiseConstant refine(const PiecewiseConstant& coarse, int target_level) {
    if (target_level < coarse.level()) throw DomainError("refine: target level is below the source level");
    const auto d = static_cast<std::size_t>(coarse.alphabet_size());
    std::vector<double> values(coarse.values().begin(), coarse.values().end());
    for (int level = coarse.level(); level < target_level; ++level) {
        std::vector<double> next(values.size() * d);
        for (std::size_t k = 0; k < values.size(); ++k)
            for (std::size_t j = 0; j < d; ++j) next[k * d + j] = values[k];
        values = std::move(next);
    }
    return {coarse.weights(), target_level, std::move(values)};
}

/// L^2 projection onto a coarser level: u_w = sum_k p_k u_{wk}.
inline PiecewiseConstant coarsen(const PiecewiseConstant& fine, int target_level) {
    if (target_level > fine.level() || target_level < 0) throw DomainError("coarsen: invalid target level");
    const auto d = static_cast<std::size_t>(fine.alphabet_size());
    const auto p = fine.weights().values();
    std::vector<double> values(fine.values().begin(), fine.values().end());
    for (int level = fine.level(); level > target_level; --level) {
        std::vector<double> next(values.size() / d);
        for (std::size_t k = 0; k < next.size(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += p[j] * values[k * d + j];
            next[k] = s;
        }
        values = std::move(next);
    }
    return {fine.weights(), target_level, std::move(values)};
}

/// Cell means of an arbitrary field at level m: coefficient w is the rule applied to phi o F_w.
template <class Field>
PiecewiseConstant project(const Ifs& ifs, const Field& phi, int m, const QuadSpec& quad,
                          std::uint64_t cap = kDefaultMaxCells) {
    const auto rule = make_rule(ifs, quad, cap);
    const auto n = static_cast<std::size_t>(checked_power(ifs.size(), m, cap));
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const double scale = ratio_powers(ifs.ratio(), m).back();
    const auto offsets = level_offsets(ifs, m, cap);
    std::vector<double> values(n);
    for (std::size_t w = 0; w < n; ++w)
        values[w] = rule.integrate_mapped(phi, rule.mapped(scale, std::span<const double>(offsets.data() + w * dim, dim)));
    return {ifs.weights(), m, std::move(values)};
}

/// Projection of the initial datum; cell-aligned presets are set exactly from word prefixes.
inline PiecewiseConstant project_initial(const Ifs& ifs, const InitialField& g, int m, const QuadSpec& quad,
                                         std::uint64_t cap = kDefaultMaxCells) {
    if (const auto* sign = std::get_if<SignIndicatorIc>(&g)) {
        if (sign->branch > ifs.size()) throw DomainError("sign_indicator_ic branch exceeds the number of maps");
        const auto n = static_cast<std::size_t>(checked_power(ifs.size(), m, cap));
        if (m == 0) {
            const double pb = ifs.weights()(sign->branch);
            return {ifs.weights(), 0, {pb - (1.0 - pb)}};
        }
        const std::size_t block = n / static_cast<std::size_t>(ifs.size());
        std::vector<double> values(n);
        for (std::size_t w = 0; w < n; ++w)
            values[w] = (static_cast<int>(w / block) + 1 == sign->branch) ? 1.0 : -1.0;
        return {ifs.weights(), m, std::move(values)};
    }
    return project(ifs, std::get<ExprInitial>(g), m, quad, cap);
}

/// Assembles W_wv for all |w| = |v| = m. One node set in K is mapped into every
/// cell; entries are computed independently, so the result does not depend on
/// the thread count. Kernels with W(x,y) == W(y,x) bitwise give an exactly
/// symmetric matrix under tensor rules.
template <class Kernel>
KernelMatrix assemble_kernel(const Ifs& ifs, const Kernel& kernel, int m, const QuadSpec& quad, unsigned threads = 0,
                             std::uint64_t cap = kDefaultMaxKernelEntries) {
    const auto n64 = checked_power(ifs.size(), m, kDefaultMaxCells);
    if (n64 > cap / n64)
        throw CapacityError("kernel matrix at level " + std::to_string(m) + " needs " + std::to_string(n64) + "^2 entries");
    const auto n = static_cast<std::size_t>(n64);
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const double scale = ratio_powers(ifs.ratio(), m).back();
    const auto offsets = level_offsets(ifs, m);

    const auto rule = make_rule(ifs, quad);
    const bool paired = quad.method == QuadMethod::McErgodic;
    const NodeRule partner = paired ? mc_partner_rule(ifs, quad) : NodeRule{};
    const std::size_t q = rule.count();

    std::vector<double> xs(n * q * dim);
    std::vector<double> ys(paired ? n * q * dim : 0);
    for (std::size_t w = 0; w < n; ++w) {
        const std::span<const double> off(offsets.data() + w * dim, dim);
        const auto mx = rule.mapped(scale, off);
        std::copy(mx.begin(), mx.end(), xs.begin() + static_cast<std::ptrdiff_t>(w * q * dim));
        if (paired) {
            const auto my = partner.mapped(scale, off);
            std::copy(my.begin(), my.end(), ys.begin() + static_cast<std::ptrdiff_t>(w * q * dim));
        }
    }
    const double* ybase = paired ? ys.data() : xs.data();

    KernelMatrix km;
    km.level = m;
    km.size = n;
    km.quad = quad;
    km.entries.resize(n * n);
    km.cost = static_cast<std::uint64_t>(n) * n * (paired ? q : q * q);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin; w < end; ++w)
            for (std::size_t v = 0; v < n; ++v)
                km.entries[w * n + v] = product_mean_mapped(kernel, rule, xs.data() + w * q * dim,
                                                            ybase + v * q * dim, paired ? &partner : nullptr);
    });
    for (double x : km.entries)
        if (!std::isfinite(x)) throw NumericalError("non-finite kernel entry at level " + std::to_string(m));
    return km;
}

inline KernelMatrix assemble_kernel(const Ifs& ifs, const KernelField& kernel, int m, const QuadSpec& quad,
                                    unsigned threads = 0, std::uint64_t cap = kDefaultMaxKernelEntries) {
    return std::visit([&](const auto& k) { return assemble_kernel(ifs, k, m, quad, threads, cap); }, kernel);
}

/// Each child pair (wi, vj) inherits W_wv.
inline KernelMatrix refine_kernel(const KernelMatrix& coarse, int alphabet_size, int target_level) {
    if (target_level < coarse.level) throw DomainError("refine_kernel: target level is below the source level");
    KernelMatrix km = coarse;
    const auto d = static_cast<std::size_t>(alphabet_size);
    for (int level = coarse.level; level < target_level; ++level) {
        const std::size_t n = km.size * d;
        std::vector<double> next(n * n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) next[r * n + c] = km.entries[(r / d) * km.size + c / d];
        km.entries = std::move(next);
        km.size = n;
        km.level = level + 1;
    }
    return km;
}

/// du_w = f(t, u_w) + sum_v W_wv D(u_w, u_v) mu(K_v), written into `out`.
template <class Coupling, class Forcing>
void rhs_into(std::span<const double> u, double t, const Coupling& coupling, const Forcing& forcing,
              const KernelMatrix& kernel, std::span<const double> measures, std::span<double> out,
              unsigned threads = 1) {
    const std::size_t n = u.size();
    if (kernel.size != n || measures.size() != n || out.size() != n)
        throw DomainError("rhs: kernel level (" + std::to_string(kernel.level) + ") does not match the state");
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin; w < end; ++w) {
            const double uw = u[w];
            const double* row = kernel.entries.data() + w * n;
            double s = 0.0;
            for (std::size_t v = 0; v < n; ++v) s += row[v] * coupling(uw, u[v]) * measures[v];
            const double du = forcing(t, uw) + s;
            if (!std::isfinite(du)) throw NumericalError("non-finite right-hand side in cell " + std::to_string(w));
            out[w] = du;
        }
    });
}

inline void rhs_into(std::span<const double> u, double t, const ModelSpec& model, const KernelMatrix& kernel,
                     std::span<const double> measures, std::span<double> out, unsigned threads = 1) {
    std::visit([&](const auto& c, const auto& f) { rhs_into(u, t, c, f, kernel, measures, out, threads); },
               model.coupling, model.forcing);
}

inline PiecewiseConstant rhs(const PiecewiseConstant& state, double t, const ModelSpec& model,
                             const KernelMatrix& kernel, unsigned threads = 1) {
    if (kernel.level != state.level())
        throw DomainError("rhs: kernel level " + std::to_string(kernel.level) + " != state level " +
                          std::to_string(state.level()));
    std::vector<double> du(state.size());
    rhs_into(state.values(), t, model, kernel, state.measures(), du, threads);
    return {state, std::move(du)};
}

} // namespace selfsim
