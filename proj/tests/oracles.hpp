#pragma once

// Reference computations for the test suite. These work on plain vectors of
// digits and points and never call into the library, so a fast path in the
// library and the value it is checked against are computed independently.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

using Pt = std::vector<double>;
using Digits = std::vector<int>;

/// F_{w_1} o ... o F_{w_m} applied to x, innermost map first.
inline Pt apply_word(const std::vector<Pt>& v, double lambda, const Digits& w, Pt x) {
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
        const Pt& vi = v[static_cast<std::size_t>(*it - 1)];
        for (std::size_t c = 0; c < x.size(); ++c) x[c] = lambda * x[c] + (1.0 - lambda) * vi[c];
    }
    return x;
}

inline double measure(const std::vector<double>& p, const Digits& w) {
    double mu = 1.0;
    for (int s : w) mu *= p[static_cast<std::size_t>(s - 1)];
    return mu;
}

/// All words of length m, lexicographic, built by recursion on the first digit.
inline std::vector<Digits> all_words(int d, int m) {
    if (m == 0) return {Digits{}};
    const auto tails = all_words(d, m - 1);
    std::vector<Digits> out;
    for (int s = 1; s <= d; ++s)
        for (const auto& tail : tails) {
            Digits w{s};
            w.insert(w.end(), tail.begin(), tail.end());
            out.push_back(std::move(w));
        }
    return out;
}

inline std::uint64_t encode(int d, const Digits& w) {
    std::uint64_t x = 0;
    for (int s : w) x = x * static_cast<std::uint64_t>(d) + static_cast<std::uint64_t>(s - 1);
    return x;
}

/// Barycenter of mu: c = sum_i p_i v_i, the fixed point of x -> sum_i p_i F_i(x).
inline Pt centroid(const std::vector<Pt>& v, const std::vector<double>& p) {
    Pt c(v.front().size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t k = 0; k < c.size(); ++k) c[k] += p[i] * v[i][k];
    return c;
}

/// E|X - c|^2 for X ~ mu. X = lambda Y + (1 - lambda) v_I with Y ~ mu, I ~ p
/// independent, so V = lambda^2 V + (1 - lambda)^2 M, M = sum_i p_i |v_i - c|^2.
inline double second_moment(const std::vector<Pt>& v, const std::vector<double>& p, double lambda) {
    const Pt c = centroid(v, p);
    double M = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) s += (v[i][k] - c[k]) * (v[i][k] - c[k]);
        M += p[i] * s;
    }
    return (1.0 - lambda) * (1.0 - lambda) * M / (1.0 - lambda * lambda);
}

/// RK4 amplification factor for u' = -u: the degree-4 Taylor polynomial of e^{-h}.
inline double rk4_decay_factor(double h) { return 1.0 - h + h * h / 2.0 - h * h * h / 6.0 + h * h * h * h / 24.0; }

using Field = std::function<double(const Pt&)>;
using Kernel = std::function<double(const Pt&, const Pt&)>;

/// Equal-weight mean of phi over the points F_w F_u(x0), |u| = sub (uniform weights).
inline double cell_mean(const std::vector<Pt>& v, double lambda, const Digits& w, int sub, const Pt& x0,
                        const Field& phi) {
    const int d = static_cast<int>(v.size());
    double s = 0.0;
    const auto us = all_words(d, sub);
    for (const auto& u : us) {
        Digits wu = w;
        wu.insert(wu.end(), u.begin(), u.end());
        s += phi(apply_word(v, lambda, wu, x0));
    }
    return s / static_cast<double>(us.size());
}

/// Plain double sum over all node pairs of the tensor uniform rule.
inline double product_mean(const std::vector<Pt>& v, double lambda, const Digits& w, const Digits& z, int sub,
                           const Pt& x0, const Kernel& k) {
    const int d = static_cast<int>(v.size());
    const auto us = all_words(d, sub);
    std::vector<Pt> xs, ys;
    for (const auto& u : us) {
        Digits a = w, b = z;
        a.insert(a.end(), u.begin(), u.end());
        b.insert(b.end(), u.begin(), u.end());
        xs.push_back(apply_word(v, lambda, a, x0));
        ys.push_back(apply_word(v, lambda, b, x0));
    }
    double s = 0.0;
    for (const auto& x : xs)
        for (const auto& y : ys) s += k(x, y);
    return s / static_cast<double>(xs.size() * ys.size());
}

/// Modulus by direct enumeration of every word wi at each level l and every
/// sampling word u: max over l, i != j of (sum_{w,u} p-mass |phi(F_wju x0) - phi(F_wiu x0)|^p)^(1/p),
/// uniform weights.
inline double modulus(const std::vector<Pt>& v, double lambda, const Field& phi, int m, double p, int depth,
                      const Pt& x0) {
    const int d = static_cast<int>(v.size());
    double best = 0.0;
    for (int l = m; l <= depth; ++l)
        for (int i = 1; i <= d; ++i)
            for (int j = 1; j <= d; ++j) {
                if (i == j) continue;
                double total = 0.0;
                const auto ws = all_words(d, l);
                const auto us = all_words(d, depth - l);
                for (const auto& w : ws)
                    for (const auto& u : us) {
                        Digits a = w, b = w;
                        a.push_back(i);
                        b.push_back(j);
                        a.insert(a.end(), u.begin(), u.end());
                        b.insert(b.end(), u.begin(), u.end());
                        const double diff = phi(apply_word(v, lambda, b, x0)) - phi(apply_word(v, lambda, a, x0));
                        total += std::pow(std::abs(diff), p) / std::pow(static_cast<double>(d), l + 1 + (depth - l));
                    }
                best = std::max(best, std::pow(total, 1.0 / p));
            }
    return best;
}

} // namespace oracle
