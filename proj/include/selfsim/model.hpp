#pragma once

// The quadruple (W, D, f, g) of an initial-value problem
//   du/dt = f(t, u) + int_K W(x, y) D(u(x), u(y)) dmu(y),   u(0) = g,
// each field either a preset or a parsed expression.

#include <selfsim/errors.hpp>
#include <selfsim/expression.hpp>

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace selfsim {

/// W(x, y) = exp(-rate |x - y|^2)
struct GaussianKernel {
    double rate = 2.0;

    double operator()(std::span<const double> x, std::span<const double> y) const noexcept {
        double s = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
        return std::exp(-rate * s);
    }
};

struct ExprKernel {
    Expr expr;
    double operator()(std::span<const double> x, std::span<const double> y) const { return expr(x, y); }
};

/// D(u, v) = v - u: the integrand u(y) - u(x) of nonlocal diffusion.
struct DiffusionCoupling {
    double operator()(double u, double v) const noexcept { return v - u; }
};

struct ExprCoupling {
    Expr expr;
    double operator()(double u, double v) const { return expr.scalar2(u, v); }
};

struct ZeroForcing {
    double operator()(double, double) const noexcept { return 0.0; }
};

struct ExprForcing {
    Expr expr;
    double operator()(double t, double u) const { return expr.scalar2(t, u); }
};

/// +1 on F_branch(K), -1 on the other first-level cells. Cell-aligned, so its
/// projection is read off the first digit of each word.
struct SignIndicatorIc {
    int branch = 2;
};

struct ExprInitial {
    Expr expr;
    double operator()(std::span<const double> x) const { return expr(x); }
};

using KernelField = std::variant<GaussianKernel, ExprKernel>;
using CouplingField = std::variant<DiffusionCoupling, ExprCoupling>;
using ForcingField = std::variant<ZeroForcing, ExprForcing>;
using InitialField = std::variant<SignIndicatorIc, ExprInitial>;

struct ModelSpec {
    KernelField kernel = GaussianKernel{};
    CouplingField coupling = DiffusionCoupling{};
    ForcingField forcing = ZeroForcing{};
    InitialField initial = SignIndicatorIc{};
};

// Preset registry.
inline KernelField gaussian_kernel(double rate) { return GaussianKernel{rate}; }
inline CouplingField diffusion_coupling() { return DiffusionCoupling{}; }
inline ForcingField zero_forcing() { return ZeroForcing{}; }
inline InitialField sign_indicator_ic(int branch) {
    if (branch < 1) throw DomainError("sign_indicator_ic branch must be >= 1");
    return SignIndicatorIc{branch};
}

inline KernelField kernel_expression(std::string_view src) { return ExprKernel{Expr::parse(src, Scope::Kernel)}; }
inline CouplingField coupling_expression(std::string_view src) {
    return ExprCoupling{Expr::parse(src, Scope::Coupling)};
}
inline ForcingField forcing_expression(std::string_view src) { return ExprForcing{Expr::parse(src, Scope::Forcing)}; }
inline InitialField initial_expression(std::string_view src) { return ExprInitial{Expr::parse(src, Scope::Initial)}; }

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"gaussian_kernel", "diffusion_coupling", "zero_forcing",
                                                "sign_indicator_ic"};
    return names;
}

/// Canonical text for a field; used in manifests and cache keys.
inline std::string describe(const KernelField& k) {
    if (const auto* g = std::get_if<GaussianKernel>(&k)) return "preset:gaussian_kernel(rate=" + detail::format_number(g->rate) + ")";
    return std::get<ExprKernel>(k).expr.print();
}
inline std::string describe(const CouplingField& c) {
    if (std::holds_alternative<DiffusionCoupling>(c)) return "preset:diffusion_coupling";
    return std::get<ExprCoupling>(c).expr.print();
}
inline std::string describe(const ForcingField& f) {
    if (std::holds_alternative<ZeroForcing>(f)) return "preset:zero_forcing";
    return std::get<ExprForcing>(f).expr.print();
}
inline std::string describe(const InitialField& g) {
    if (const auto* s = std::get_if<SignIndicatorIc>(&g)) return "preset:sign_indicator_ic(branch=" + std::to_string(s->branch) + ")";
    return std::get<ExprInitial>(g).expr.print();
}

} // namespace selfsim
