#include <selfsim/analysis.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace selfsim;

namespace {

const Ifs st = builtin_ifs(BuiltinIfs::SierpinskiTriangle);
const Ifs st_weighted("ST-weighted", {{0.0, 0.0}, {1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}}, 0.5,
                      BernoulliWeights({0.5, 0.3, 0.2}));

std::vector<oracle::Pt> vertices(const Ifs& ifs) {
    std::vector<oracle::Pt> v;
    for (int i = 1; i <= ifs.size(); ++i) v.push_back(ifs.fixed_point(i));
    return v;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = U(rng);
    return v;
}

auto x1 = [](std::span<const double> x) { return x[0]; };
auto cusp = [](std::span<const double> x) { return std::pow(x[0] * x[0] + x[1] * x[1], 0.25); };

} // namespace

TEST(LpNorm, Examples) {
    for (double p : {1.0, 2.0, 3.0, 7.5}) {
        EXPECT_NEAR(lp_norm(PiecewiseConstant::constant(st_weighted.weights(), 3, -2.5), p), 2.5, 1e-14);
        EXPECT_NEAR(lp_norm(PiecewiseConstant(st.weights(), 1, {1.0, 0.0, 0.0}), p), std::pow(1.0 / 3.0, 1.0 / p),
                    1e-15);
    }
    const auto ic = project_initial(st, sign_indicator_ic(2), 4, QuadSpec::uniform(1));
    EXPECT_NEAR(lp_norm(ic, 2.0), 1.0, 1e-15);
    EXPECT_THROW(lp_norm(ic, 0.5), DomainError);
}

TEST(LpNorm, InvariantUnderRefinement) {
    const PiecewiseConstant u(st_weighted.weights(), 2, random_values(9, 1));
    for (int k = 1; k <= 3; ++k)
        for (double p : {1.0, 2.0, 4.0}) EXPECT_NEAR(lp_norm(refine(u, 2 + k), p), lp_norm(u, p), 1e-14);
}

TEST(LevelDiff, Examples) {
    const auto c = PiecewiseConstant::constant(st.weights(), 2, 0.7);
    EXPECT_EQ(level_diff(c, refine(c, 3)), 0.0);

    const PiecewiseConstant u(st.weights(), 3, random_values(27, 2));
    EXPECT_NEAR(level_diff(PiecewiseConstant::constant(st.weights(), 2, 0.0), u), lp_norm(u, 2.0), 1e-15);

    const PiecewiseConstant s(st.weights(), 1, {1.0, -1.0, 1.0});
    EXPECT_EQ(level_diff(s, refine(s, 2)), 0.0);
    EXPECT_EQ(level_diff(refine(s, 2), s), 0.0);
    EXPECT_THROW(level_diff(s, refine(s, 3)), DomainError);
    EXPECT_THROW(level_diff(s, s), DomainError);
}

TEST(RateAlpha, Examples) {
    const std::vector<double> halving{0.1, 0.05}, quartering{0.1, 0.025};
    EXPECT_NEAR(rate_alpha(halving, 0.5)[0], 1.0, 1e-15);
    EXPECT_NEAR(rate_alpha(quartering, 0.5)[0], 2.0, 1e-15);
    const std::vector<double> bad{0.1, 0.0};
    EXPECT_THROW(rate_alpha(bad, 0.5), DomainError);
    EXPECT_THROW(rate_alpha(halving, 1.0), DomainError);
}

TEST(RateAlpha, RecoversSyntheticGeometricSequences) {
    for (double lambda : {0.5, 1.0 / 3.0, 0.9})
        for (double alpha : {0.5, 1.0, 2.7})
            for (double c : {1e-3, 1.0, 42.0}) {
                std::vector<double> diffs;
                for (int l = 0; l < 6; ++l) diffs.push_back(c * std::pow(lambda, alpha * l));
                const auto a = rate_alpha(diffs, lambda);
                ASSERT_EQ(a.size(), 5u);
                for (double x : a) EXPECT_NEAR(x, alpha, 1e-12);
            }
}

TEST(RateReport, ShapeAndJson) {
    std::vector<PiecewiseConstant> sols;
    // u^m differs from its parent by 2^-m on one child per cell
    PiecewiseConstant u = PiecewiseConstant::constant(st.weights(), 1, 0.0);
    sols.push_back(u);
    for (int m = 2; m <= 4; ++m) {
        u = refine(u, m);
        for (std::size_t k = 0; k < u.size(); k += 3) u[k] += std::pow(0.5, m);
        sols.push_back(u);
    }
    const auto r = rate_report(sols, 0.5);
    EXPECT_EQ(r.levels, (std::vector<int>{1, 2, 3, 4}));
    ASSERT_EQ(r.diffs.size(), 3u);
    ASSERT_EQ(r.alphas.size(), 2u);
    for (double a : r.alphas) EXPECT_NEAR(a, 1.0, 1e-12);
    const auto j = to_json(r);
    EXPECT_EQ(j["alphas"].size(), 2u);
    EXPECT_EQ(j["lambda"].get<double>(), 0.5);
    EXPECT_THROW(rate_report({sols[0], sols[1]}, 0.5), DomainError);
}

TEST(Fits, LinesAndExponents) {
    const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
    const auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.r2, 1.0, 1e-14);
    const std::vector<int> levels{2, 3, 4, 5};
    std::vector<double> errs;
    for (int m : levels) errs.push_back(3.0 * std::pow(0.5, 1.5 * m));
    EXPECT_NEAR(fit_decay_exponent(levels, errs, 0.5), 1.5, 1e-12);
    const std::vector<double> one{1.0};
    EXPECT_THROW(fit_line(one, one), DomainError);
}

TEST(Modulus, ConstantFieldIsZero) {
    auto c = [](std::span<const double>) { return 3.0; };
    for (int m = 0; m <= 3; ++m) EXPECT_EQ(modulus_lp(st, c, m, 2.0, 4), 0.0);
}

TEST(Modulus, AffineFieldClosedForm) {
    // phi(F_wj z) - phi(F_wi z) = a . lambda^l tau_ij with tau_ij = (1 - lambda)(v_j - v_i),
    // constant on a domain of mass p_i; the maximum is attained at l = m.
    const std::array<double, 2> a{0.7, -1.3};
    auto phi = [&](std::span<const double> x) { return a[0] * x[0] + a[1] * x[1]; };
    for (const auto& ifs : {st, st_weighted})
        for (double p : {1.0, 2.0, 3.0})
            for (int m = 0; m <= 3; ++m) {
                double want = 0.0;
                for (int i = 1; i <= 3; ++i)
                    for (int j = 1; j <= 3; ++j) {
                        if (i == j) continue;
                        const auto& vi = ifs.fixed_point(i);
                        const auto& vj = ifs.fixed_point(j);
                        const double shift = std::pow(0.5, m) * 0.5 * (a[0] * (vj[0] - vi[0]) + a[1] * (vj[1] - vi[1]));
                        want = std::max(want, std::abs(shift) * std::pow(ifs.weights()(i), 1.0 / p));
                    }
                EXPECT_NEAR(modulus_lp(ifs, phi, m, p, m + 2), want, 1e-14) << "m=" << m << " p=" << p;
            }
}

TEST(Modulus, MatchesBruteForceSummation) {
    const auto v = vertices(st);
    auto phi = [](std::span<const double> x) { return std::sin(4.0 * x[0]) + x[1] * x[1]; };
    auto phi_o = [&](const oracle::Pt& x) { return phi(x); };
    for (int m = 0; m <= 3; ++m)
        for (double p : {1.0, 2.0})
            EXPECT_NEAR(modulus_lp(st, phi, m, p, 4), oracle::modulus(v, 0.5, phi_o, m, p, 4, v[0]), 1e-13);
}

TEST(Modulus, IndicatorOfTheFirstCell) {
    // 1_{F_1(K)}; F_1(K) is the part of K left of the line x1 + x2/sqrt3 = 1/2. The anchor,
    // the fixed point of F_1 F_2, keeps every node off that line.
    const auto v = vertices(st);
    const Point anchor{1.0 / 3.0, 0.0};
    auto ind = [](std::span<const double> x) { return x[0] + x[1] / std::sqrt(3.0) < 0.5 ? 1.0 : 0.0; };
    auto ind_o = [&](const oracle::Pt& x) { return ind(x); };
    for (int m = 0; m <= 2; ++m)
        EXPECT_NEAR(modulus_lp(st, ind, m, 2.0, 4, {anchor, 1}), oracle::modulus(v, 0.5, ind_o, m, 2.0, 4, anchor),
                    1e-14);
    // sibling translations below the first level never leave F_1(K) or its complement
    EXPECT_EQ(modulus_lp(st, ind, 2, 2.0, 4, {anchor, 1}), 0.0);
    EXPECT_EQ(modulus_lp(st, ind, 1, 2.0, 4, {anchor, 1}), 0.0);
    // at the top level the difference is 1 on a cell of mass 1/3
    EXPECT_NEAR(modulus_lp(st, ind, 0, 2.0, 4, {anchor, 1}), std::sqrt(1.0 / 3.0), 1e-14);
}

TEST(Modulus, NonincreasingInTheLevel) {
    for (const auto& phi : {std::function<double(std::span<const double>)>(x1),
                            std::function<double(std::span<const double>)>(cusp)}) {
        double prev = INFINITY;
        for (int m = 0; m <= 5; ++m) {
            const double w = modulus_lp(st, phi, m, 2.0, 6, {std::nullopt, 2});
            EXPECT_LE(w, prev) << "m=" << m;
            prev = w;
        }
    }
}

TEST(Modulus, ThreadCountDoesNotChangeTheResult) {
    EXPECT_EQ(modulus_lp(st, cusp, 1, 2.0, 6, {std::nullopt, 1}), modulus_lp(st, cusp, 1, 2.0, 6, {std::nullopt, 4}));
}

TEST(Modulus, InvalidArguments) {
    EXPECT_THROW(modulus_lp(st, x1, 3, 2.0, 2), DomainError);
    EXPECT_THROW(modulus_lp(st, x1, 0, 0.5, 2), DomainError);
    EXPECT_THROW(modulus_lp(st, x1, 0, 2.0, 2, {Point{0.0}, 1}), DomainError);
}

TEST(ProjectionStudy, LipschitzFieldOnTheTriangle) {
    ProjectionOptions opt;
    opt.reference_level = 10;
    const auto r = projection_rate_study(st, x1, 2.0, {2, 3, 4, 5, 6, 7, 8}, opt);
    EXPECT_NEAR(r.fitted_exponent, 1.0, 0.1);
    EXPECT_EQ(r.reference_level, 10);
    EXPECT_TRUE(r.bounds.empty());
}

TEST(ProjectionStudy, FractalBoundHoldsWithEstimatedSeminorm) {
    const double lip = lip_norm_estimate(st, x1, 2.0, 1.0, 5, 7);
    ProjectionOptions opt;
    opt.lip_norm = lip;
    const auto r = projection_rate_study(st, x1, 2.0, {1, 2, 3, 4, 5}, opt);
    ASSERT_EQ(r.bounds.size(), 5u);
    EXPECT_TRUE(r.bound_holds);
    for (std::size_t k = 0; k < r.errors.size(); ++k) EXPECT_LE(r.errors[k], r.bounds[k]);
}

TEST(ProjectionStudy, UnitIntervalClosedForm) {
    // phi(x) = x, mu = Lebesgue on [0,1]: the error on each dyadic cell of width h
    // is that of a uniform variable, h / (2 sqrt 3).
    const auto uc1 = builtin_ifs(BuiltinIfs::UnitCube, 1);
    ProjectionOptions opt;
    opt.reference_level = 22;
    opt.quad = QuadSpec{QuadMethod::UniformSeq, 2, 0, Point{0.5}};
    opt.lip_norm = 1.0;
    opt.bound = BoundKind::Dyadic;
    const auto r = projection_rate_study(uc1, x1, 2.0, {1, 2, 3, 4, 5, 6, 7, 8}, opt);
    for (std::size_t k = 0; k < r.levels.size(); ++k)
        EXPECT_NEAR(r.errors[k], std::pow(2.0, -r.levels[k]) / (2.0 * std::sqrt(3.0)), 1e-10) << "m=" << r.levels[k];
    EXPECT_NEAR(r.fitted_exponent, 1.0, 1e-6);
    EXPECT_TRUE(r.bound_holds);
}

TEST(ProjectionStudy, HolderCuspDecaysAtTheL2Rate) {
    // Independent check at small levels: phi^m from direct cell means, errors against level 8.
    const auto v = vertices(st);
    auto cusp_o = [](const oracle::Pt& x) { return std::pow(x[0] * x[0] + x[1] * x[1], 0.25); };
    const int M = 8;
    const auto fine_words = oracle::all_words(3, M);
    std::vector<double> fine;
    for (const auto& w : fine_words) fine.push_back(oracle::cell_mean(v, 0.5, w, 2, v[0], cusp_o));
    ProjectionOptions opt;
    opt.reference_level = M;
    const auto r = projection_rate_study(st, cusp, 2.0, {2, 3, 4, 5}, opt);
    for (std::size_t k = 0; k < r.levels.size(); ++k) {
        const int m = r.levels[k];
        std::vector<double> coarse;
        for (const auto& w : oracle::all_words(3, m)) coarse.push_back(oracle::cell_mean(v, 0.5, w, M - m + 2, v[0], cusp_o));
        const std::size_t block = fine.size() / coarse.size();
        double s = 0.0;
        for (std::size_t f = 0; f < fine.size(); ++f) {
            const double e = coarse[f / block] - fine[f];
            s += e * e / static_cast<double>(fine.size());
        }
        EXPECT_NEAR(r.errors[k], std::sqrt(s), 1e-12 * std::sqrt(s) + 1e-15) << "m=" << m;
    }

    // The pointwise Holder exponent 1/2 bounds the rate from below; in L^2 the cusp
    // is Lipschitz, so the measured exponent is 1.
    opt.reference_level = 10;
    const auto deep = projection_rate_study(st, cusp, 2.0, {2, 3, 4, 5, 6, 7, 8}, opt);
    EXPECT_GE(deep.fitted_exponent, 0.5 - 0.15);
    EXPECT_NEAR(deep.fitted_exponent, 1.0, 0.1);
}

TEST(ProjectionStudy, BoundConstants) {
    EXPECT_NEAR(projection_bound_constant(st, 2.0, 1.0, BoundKind::Fractal), std::sqrt(3.0) / 0.5, 1e-14);
    EXPECT_NEAR(projection_bound_constant(builtin_ifs(BuiltinIfs::UnitCube, 1), 2.0, 1.0, BoundKind::Dyadic), 2.0,
                1e-14);
    EXPECT_NEAR(projection_bound_constant(builtin_ifs(BuiltinIfs::UnitCube, 2), 2.0, 1.0, BoundKind::Dyadic),
                std::sqrt(3.0) * 2.0 * std::sqrt(2.0), 1e-14);
}

TEST(ProjectionStudy, InvalidLevels) {
    EXPECT_THROW(projection_rate_study(st, x1, 2.0, {3}), DomainError);
    EXPECT_THROW(projection_rate_study(st, x1, 2.0, {3, 2}), DomainError);
    ProjectionOptions opt;
    opt.reference_level = 4;
    EXPECT_THROW(projection_rate_study(st, x1, 2.0, {3, 4}, opt), DomainError);
}

TEST(ProjectionStudy, JsonCarriesBoundsOnlyWhenChecked) {
    const auto r = projection_rate_study(st, x1, 2.0, {1, 2, 3});
    const auto j = to_json(r);
    EXPECT_FALSE(j.contains("bounds"));
    EXPECT_EQ(j["reference_level"].get<int>(), 5);
}
