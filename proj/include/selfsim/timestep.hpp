#pragma once

// Fixed-step classical Runge-Kutta (RK4) for the Galerkin system.

#include <selfsim/errors.hpp>
#include <selfsim/galerkin.hpp>
#include <selfsim/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace selfsim {

/// Uniform grid t_k = t0 + k dt, k = 0..n_steps.
struct TimeGrid {
    double t0 = 0.0;
    double t_end = 0.0;
    double dt = 0.0;
    std::uint64_t n_steps = 0;

    static TimeGrid make(double t0, double t_end, double dt) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("time step must be positive and finite");
        if (!(t_end >= t0)) throw DomainError("t_end must not precede t0");
        const double ratio = (t_end - t0) / dt;
        const double rounded = std::round(ratio);
        if (std::abs(rounded * dt - (t_end - t0)) > 1e-12)
            throw DomainError("dt does not divide t_end - t0 (ratio " + std::to_string(ratio) + ")");
        return {t0, t_end, dt, static_cast<std::uint64_t>(rounded)};
    }

    double time(std::uint64_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }

    /// Grid index of a snapshot time; throws unless t is a grid point.
    std::uint64_t index_of(double t) const {
        const double r = std::round((t - t0) / dt);
        if (r < 0 || r > static_cast<double>(n_steps) || std::abs(r * dt - (t - t0)) > 1e-12)
            throw DomainError("snapshot time " + std::to_string(t) + " is not on the time grid");
        return static_cast<std::uint64_t>(r);
    }
};

/// du = F(t, u), written into the last argument.
using RhsFn = std::function<void(double, std::span<const double>, std::span<double>)>;

namespace detail {

inline void check_stage(std::span<const double> k, int stage, double t) {
    for (std::size_t i = 0; i < k.size(); ++i)
        if (!std::isfinite(k[i]))
            throw NumericalError("non-finite RK4 stage " + std::to_string(stage) + " at t=" + std::to_string(t) +
                                 " in cell " + std::to_string(i));
}

} // namespace detail

/// Scratch space for rk4_step; reuse across steps to avoid reallocation.
struct Rk4Workspace {
    std::vector<double> k1, k2, k3, k4, tmp;
    void resize(std::size_t n) {
        for (auto* v : {&k1, &k2, &k3, &k4, &tmp}) v->resize(n);
    }
};

/// One classical RK4 step in place.
template <class F>
void rk4_step(std::span<double> u, double t, double dt, const F& f, Rk4Workspace& ws) {
    const std::size_t n = u.size();
    ws.resize(n);
    f(t, std::span<const double>(u), std::span<double>(ws.k1));
    detail::check_stage(ws.k1, 1, t);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = u[i] + 0.5 * dt * ws.k1[i];
    f(t + 0.5 * dt, std::span<const double>(ws.tmp), std::span<double>(ws.k2));
    detail::check_stage(ws.k2, 2, t);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = u[i] + 0.5 * dt * ws.k2[i];
    f(t + 0.5 * dt, std::span<const double>(ws.tmp), std::span<double>(ws.k3));
    detail::check_stage(ws.k3, 3, t);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = u[i] + dt * ws.k3[i];
    f(t + dt, std::span<const double>(ws.tmp), std::span<double>(ws.k4));
    detail::check_stage(ws.k4, 4, t);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] += dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
        if (!std::isfinite(u[i]))
            throw NumericalError("non-finite state after RK4 step at t=" + std::to_string(t) + " in cell " +
                                 std::to_string(i));
    }
}

template <class F>
std::vector<double> rk4_step(std::vector<double> u, double t, double dt, const F& f) {
    Rk4Workspace ws;
    rk4_step(std::span<double>(u), t, dt, f, ws);
    return u;
}

struct Snapshot {
    double t = 0.0;
    std::uint64_t step = 0;
    PiecewiseConstant state;
};

/// Integrates the Galerkin system over the grid, storing states at the requested
/// times (the final time when none are given). Snapshot times are t0 + k dt exactly.
inline std::vector<Snapshot> integrate(const ModelSpec& model, const KernelMatrix& kernel,
                                       const PiecewiseConstant& initial, const TimeGrid& grid,
                                       std::vector<double> snapshot_times = {}, unsigned threads = 1) {
    if (kernel.level != initial.level())
        throw DomainError("integrate: kernel level " + std::to_string(kernel.level) + " != state level " +
                          std::to_string(initial.level()));
    std::vector<std::uint64_t> marks;
    if (snapshot_times.empty()) snapshot_times.push_back(grid.t_end);
    for (double t : snapshot_times) marks.push_back(grid.index_of(t));
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

    const auto measures = initial.measures();
    auto f = [&](double t, std::span<const double> u, std::span<double> du) {
        rhs_into(u, t, model, kernel, measures, du, threads);
    };

    std::vector<double> u(initial.values().begin(), initial.values().end());
    std::vector<Snapshot> out;
    Rk4Workspace ws;
    std::size_t next = 0;
    for (std::uint64_t k = 0;; ++k) {
        if (next < marks.size() && marks[next] == k) {
            out.push_back({grid.time(k), k, PiecewiseConstant(initial, u)});
            ++next;
        }
        if (k == grid.n_steps) break;
        rk4_step(std::span<double>(u), grid.time(k), grid.dt, f, ws);
    }
    return out;
}

} // namespace selfsim
