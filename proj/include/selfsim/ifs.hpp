#pragma once

// Equal-ratio affine iterated function systems F_i(x) = lambda x + (1 - lambda) v_i,
// their compositions F_w, and the builtin catalog (Sierpinski triangle / carpet,
// unit cube).

#include <selfsim/errors.hpp>
#include <selfsim/symbolic.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace selfsim {

using Point = std::vector<double>;

/// x -> lambda x + (1 - lambda) v, a similarity with fixed point v.
class AffineMap {
public:
    AffineMap(double ratio, Point fixed_point) : ratio_(ratio), fixed_point_(std::move(fixed_point)) {
        if (!(ratio_ > 0.0 && ratio_ < 1.0)) throw DomainError("contraction ratio must lie in (0, 1)");
        if (fixed_point_.empty()) throw DomainError("fixed point must have dimension >= 1");
        shift_.resize(fixed_point_.size());
        for (std::size_t k = 0; k < shift_.size(); ++k) shift_[k] = (1.0 - ratio_) * fixed_point_[k];
    }

    double ratio() const noexcept { return ratio_; }
    int dimension() const noexcept { return static_cast<int>(fixed_point_.size()); }
    const Point& fixed_point() const noexcept { return fixed_point_; }

    /// The translation part (1 - lambda) v.
    const Point& shift() const noexcept { return shift_; }

    Point operator()(std::span<const double> x) const {
        Point y(x.size());
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = ratio_ * x[k] + shift_[k];
        return y;
    }

private:
    double ratio_;
    Point fixed_point_;
    Point shift_;
};

/// x -> ratio * x + offset; the form every composite F_w takes.
struct Similarity {
    double ratio = 1.0;
    Point offset;

    Point operator()(std::span<const double> x) const {
        Point y(offset.size());
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = ratio * x[k] + offset[k];
        return y;
    }
};

class Ifs {
public:
    Ifs(std::string name, std::vector<Point> fixed_points, double ratio, BernoulliWeights weights)
        : name_(std::move(name)), weights_(std::move(weights)) {
        if (fixed_points.size() < 2) throw DomainError("an IFS needs at least two maps");
        if (static_cast<int>(fixed_points.size()) != weights_.size())
            throw DomainError("number of maps (" + std::to_string(fixed_points.size()) +
                              ") does not match the number of weights (" + std::to_string(weights_.size()) + ")");
        const auto dim = fixed_points.front().size();
        for (const auto& v : fixed_points) {
            if (v.size() != dim) throw DomainError("all fixed points must share one dimension");
            for (double c : v)
                if (!std::isfinite(c)) throw DomainError("fixed points must be finite");
        }
        maps_.reserve(fixed_points.size());
        for (auto& v : fixed_points) maps_.emplace_back(ratio, std::move(v));
        for (std::size_t a = 0; a < maps_.size(); ++a)
            for (std::size_t b = a + 1; b < maps_.size(); ++b)
                diameter_ = std::max(diameter_, distance(maps_[a].fixed_point(), maps_[b].fixed_point()));
    }

    const std::string& name() const noexcept { return name_; }
    int size() const noexcept { return static_cast<int>(maps_.size()); }
    int dimension() const noexcept { return maps_.front().dimension(); }
    double ratio() const noexcept { return maps_.front().ratio(); }
    const BernoulliWeights& weights() const noexcept { return weights_; }

    /// F_i for a 1-based symbol.
    const AffineMap& map(int symbol) const {
        if (symbol < 1 || symbol > size()) throw DomainError("map symbol out of range");
        return maps_[static_cast<std::size_t>(symbol - 1)];
    }

    const Point& fixed_point(int symbol) const { return map(symbol).fixed_point(); }

    /// diam(K). K lies in the convex hull of the fixed points, which all belong to K.
    double diameter() const noexcept { return diameter_; }

    static double distance(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    }

private:
    std::string name_;
    std::vector<AffineMap> maps_;
    BernoulliWeights weights_;
    double diameter_ = 0.0;
};

enum class BuiltinIfs { SierpinskiTriangle, SierpinskiCarpet, UnitCube };

/// ST: unit-side equilateral triangle with v1 = (0,0), v2 = (1,0).
/// SC: the eight boundary points of {0, 1/2, 1}^2, counter-clockwise from the origin.
/// UC(dim): vertices {0,1}^dim in binary order (symbol i <-> bits of i - 1, first coordinate most significant).
inline Ifs builtin_ifs(BuiltinIfs kind, int dim = 2) {
    switch (kind) {
    case BuiltinIfs::SierpinskiTriangle:
        return Ifs("ST", {{0.0, 0.0}, {1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}}, 0.5, BernoulliWeights::uniform(3));
    case BuiltinIfs::SierpinskiCarpet:
        return Ifs("SC",
                   {{0.0, 0.0}, {0.5, 0.0}, {1.0, 0.0}, {1.0, 0.5}, {1.0, 1.0}, {0.5, 1.0}, {0.0, 1.0}, {0.0, 0.5}},
                   1.0 / 3.0, BernoulliWeights::uniform(8));
    case BuiltinIfs::UnitCube: {
        if (dim < 1 || dim > 7) throw DomainError("UC dimension must be in [1, 7]");
        const int n = 1 << dim;
        std::vector<Point> vertices;
        for (int i = 0; i < n; ++i) {
            Point v(static_cast<std::size_t>(dim));
            for (int k = 0; k < dim; ++k) v[static_cast<std::size_t>(k)] = (i >> (dim - 1 - k)) & 1;
            vertices.push_back(std::move(v));
        }
        return Ifs("UC" + std::to_string(dim), std::move(vertices), 0.5, BernoulliWeights::uniform(n));
    }
    }
    throw DomainError("unknown builtin IFS");
}

/// Accepts "ST", "SC", "UC" (dimension from `dim`), "UC3" or "UC(3)"; case-insensitive.
inline Ifs builtin_ifs(std::string_view name, int dim = 2) {
    std::string s;
    for (char c : name)
        if (c != '(' && c != ')' && c != ' ') s += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (s == "ST") return builtin_ifs(BuiltinIfs::SierpinskiTriangle);
    if (s == "SC") return builtin_ifs(BuiltinIfs::SierpinskiCarpet);
    if (s.rfind("UC", 0) == 0) {
        if (s.size() == 2) return builtin_ifs(BuiltinIfs::UnitCube, dim);
        const auto digits = s.substr(2);
        if (digits.size() == 1 && std::isdigit(static_cast<unsigned char>(digits[0])))
            return builtin_ifs(BuiltinIfs::UnitCube, digits[0] - '0');
    }
    throw DomainError("unknown builtin IFS '" + std::string(name) + "' (expected ST, SC or UC(dim))");
}

/// lambda^k for k = 0..m, computed by repeated multiplication so every code path
/// that composes maps uses identical scale factors.
inline std::vector<double> ratio_powers(double ratio, int m) {
    std::vector<double> r(static_cast<std::size_t>(m) + 1);
    r[0] = 1.0;
    for (int k = 1; k <= m; ++k) r[static_cast<std::size_t>(k)] = r[static_cast<std::size_t>(k - 1)] * ratio;
    return r;
}

/// F_w = F_{w_1} o ... o F_{w_m} = lambda^m x + sum_k lambda^(k-1) (1 - lambda) v_{w_k}.
inline Similarity compose_map(const Ifs& ifs, const Word& w) {
    if (w.alphabet_size() != ifs.size()) throw DomainError("compose_map: word alphabet does not match the IFS");
    const auto powers = ratio_powers(ifs.ratio(), w.length());
    Similarity f{powers.back(), Point(static_cast<std::size_t>(ifs.dimension()), 0.0)};
    int k = 0;
    for (auto s : w.digits()) {
        const auto& shift = ifs.map(s).shift();
        const double scale = powers[static_cast<std::size_t>(k++)];
        for (std::size_t c = 0; c < f.offset.size(); ++c) f.offset[c] += scale * shift[c];
    }
    return f;
}

/// F_w(x0); lies in K_w whenever x0 lies in K.
inline Point cell_point(const Ifs& ifs, const Word& w, std::span<const double> x0) {
    if (static_cast<int>(x0.size()) != ifs.dimension()) throw DomainError("cell_point: dimension mismatch");
    return compose_map(ifs, w)(x0);
}

struct TruncatedPoint {
    Point point;
    double error_bound; ///< |point - pi(w v)| <= error_bound for every infinite continuation v
};

/// pi(w ...) approximated by F_w(v_1), v_1 the fixed point of F_1.
inline TruncatedPoint pi_truncated(const Ifs& ifs, const Word& w) {
    if (w.empty()) throw DomainError("pi_truncated needs |w| >= 1");
    const auto f = compose_map(ifs, w);
    return {f(ifs.fixed_point(1)), f.ratio * ifs.diameter()};
}

/// tau_ij = (1 - lambda)(v_j - v_i), so that F_i(x) + tau_ij = F_j(x).
inline Point translation_vector(const Ifs& ifs, int i, int j) {
    if (i == j) throw DomainError("translation_vector needs i != j");
    const auto& a = ifs.map(i).shift();
    const auto& b = ifs.map(j).shift();
    Point t(a.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = b[k] - a[k];
    return t;
}

inline bool is_triangle_system(const Ifs& ifs) noexcept { return ifs.size() == 3 && ifs.dimension() == 2; }

/// Vertices q_i^w = F_w(v_i) of the cell triangle T_w.
inline std::array<Point, 3> cell_vertices_st(const Ifs& ifs, const Word& w) {
    if (!is_triangle_system(ifs)) throw DomainError("cell_vertices_st needs a 3-map planar system");
    const auto f = compose_map(ifs, w);
    return {f(ifs.fixed_point(1)), f(ifs.fixed_point(2)), f(ifs.fixed_point(3))};
}

/// Offsets b_w of F_w(x) = lambda^m x + b_w for all |w| = m, flattened row-major
/// (d^m rows of `dimension` values, indexed by the word encoding).
inline std::vector<double> level_offsets(const Ifs& ifs, int m, std::uint64_t cap = kDefaultMaxCells) {
    const int d = ifs.size();
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    const auto n = checked_power(d, m, cap);
    const auto powers = ratio_powers(ifs.ratio(), m);
    std::vector<double> off(static_cast<std::size_t>(n) * dim, 0.0);
    std::size_t count = 1;
    for (int level = 0; level < m; ++level) {
        const double scale = powers[static_cast<std::size_t>(level)];
        for (std::size_t k = count; k-- > 0;) {
            for (int j = d; j >= 1; --j) {
                const auto& shift = ifs.map(j).shift();
                const std::size_t child = k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j - 1);
                for (std::size_t c = 0; c < dim; ++c) off[child * dim + c] = off[k * dim + c] + scale * shift[c];
            }
        }
        count *= static_cast<std::size_t>(d);
    }
    return off;
}

/// Depth-first walk over all |w| = m in lexicographic order without materializing
/// the level. `visit(index, offset, measure)` receives the word encoding, b_w and mu(K_w).
template <class Visitor>
void for_each_cell(const Ifs& ifs, int m, Visitor&& visit, std::uint64_t cap = kDefaultMaxCells) {
    const int d = ifs.size();
    const auto dim = static_cast<std::size_t>(ifs.dimension());
    checked_power(d, m, cap);
    const auto powers = ratio_powers(ifs.ratio(), m);
    const auto& p = ifs.weights();

    // offsets[k] / measure[k] belong to the prefix of length k
    std::vector<double> offsets((static_cast<std::size_t>(m) + 1) * dim, 0.0);
    std::vector<double> measure(static_cast<std::size_t>(m) + 1, 1.0);
    std::vector<int> digit(static_cast<std::size_t>(m) + 1, 0);
    std::vector<std::uint64_t> index(static_cast<std::size_t>(m) + 1, 0);

    if (m == 0) {
        visit(std::uint64_t{0}, std::span<const double>(offsets.data(), dim), 1.0);
        return;
    }
    int depth = 0;
    digit[0] = 0;
    while (depth >= 0) {
        const auto sd = static_cast<std::size_t>(depth);
        if (++digit[sd] > d) {
            --depth;
            continue;
        }
        const int s = digit[sd];
        const auto& shift = ifs.map(s).shift();
        const double scale = powers[sd];
        for (std::size_t c = 0; c < dim; ++c) offsets[(sd + 1) * dim + c] = offsets[sd * dim + c] + scale * shift[c];
        measure[sd + 1] = measure[sd] * p(s);
        index[sd + 1] = index[sd] * static_cast<std::uint64_t>(d) + static_cast<std::uint64_t>(s - 1);
        if (depth + 1 == m) {
            visit(index[sd + 1], std::span<const double>(offsets.data() + (sd + 1) * dim, dim), measure[sd + 1]);
        } else {
            ++depth;
            digit[sd + 1] = 0;
        }
    }
}

} // namespace selfsim
