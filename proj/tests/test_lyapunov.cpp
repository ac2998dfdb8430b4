#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "xdiff/errors.hpp"
#include "xdiff/functionals.hpp"
#include "xdiff/lyapunov.hpp"

using namespace xdiff;

namespace {

ModelSpec reference(double eps, Kernel K = Kernel::quadratic(1)) {
    auto m = ModelSpec::example(2, 2, 3, 3, 4, eps, K);
    calibrate_model(m);
    return m;
}

double first_moment_of(const Field& f, const Grid1D& g) {
    double s = 0;
    for (int i = 0; i < g.n; ++i) s += f[i] * g.x(i) * g.dx();
    return s;
}

}  // namespace

TEST_CASE("decomposition vanishes at the steady state") {
    for (double eps : {0.0, 0.1}) {
        const auto m = reference(eps);
        Grid1D g(default_half_width(m), 512);
        const auto s = solve_steady_general(m, g);
        const auto r = lyapunov_decomposition(s.pair, m, s);
        CHECK(std::abs(r.L_gap) <= 1e-14);
        CHECK(std::abs(r.I_F) <= 1e-14);
        CHECK(std::abs(r.I_K) <= 1e-14);
        CHECK(std::abs(r.K_fun) <= 1e-14);
        CHECK(r.identity_residual <= 1e-14);
        CHECK(r.dist2 <= 1e-20);
        CHECK(r.slope_lhs <= 1e-14);
        CHECK(r.slope_rhs <= 1e-12);
        CHECK(ck_check(s.pair, s, m).ratio == 0.0);
        CHECK_FALSE(n_vs_l_check(s.pair, m, s).violation);
    }
}

TEST_CASE("three-term representation of the L-gap") {
    std::mt19937_64 rng(101);
    for (auto K : {Kernel::quadratic(1), Kernel::regularized(1, 0.5)}) {
        for (double eps : {0.0, 0.05, 0.1}) {
            const auto m = reference(eps, K);
            Grid1D g(default_half_width(m), 512);
            const auto s = solve_steady_general(m, g);
            for (int k = 0; k < 10; ++k) {
                const auto p = recenter(testing::random_pair(g, rng, 0.3));
                const auto r = lyapunov_decomposition(p, m, s);
                CHECK(r.identity_residual <= 1e-8 * (1 + std::abs(r.L_gap)));
                CHECK(r.I_F >= 0);
                CHECK(r.I_K >= 0);
                CHECK(r.min_integrand >= -1e-15);
                CHECK(r.K_fun >= -0.5 * m.K.bound_second() * r.dist2);
                CHECK(r.L_gap >= 0.5 * lambda_eps(m, s) * r.dist2 - 1e-6);
                CHECK(r.E_gap == doctest::Approx(r.L_gap + eps * r.N_gap).epsilon(1e-10));
                if (K.type() == Kernel::Type::quadratic) {
                    // masses of the differences vanish, leaving the cross moment
                    const double a = first_moment_of(p.rho1, g) - first_moment_of(s.pair.rho1, g);
                    const double b = first_moment_of(p.rho2, g) - first_moment_of(s.pair.rho2, g);
                    CHECK(r.K_fun == doctest::Approx(-a * b).scale(1e-3).epsilon(1e-10));
                }
            }
        }
    }
}

TEST_CASE("gap ratios") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    const auto s = solve_steady_general(m, g);
    // perturbation of the steady state quadratic in delta on both sides
    std::vector<double> ratios;
    for (double delta : {1e-2, 1e-3}) {
        Field r1 = s.pair.rho1, r2 = s.pair.rho2;
        for (int i = 0; i < g.n; ++i) {
            const double w = std::sin(2.0 * g.x(i));
            r1[i] *= 1 + delta * w;
            r2[i] *= 1 - delta * w;
        }
        const auto c = ck_check(DensityPair(g, r1, r2), s, m);
        CHECK_FALSE(c.violation);
        CHECK(c.ratio > 0);
        ratios.push_back(c.ratio);
    }
    CHECK(ratios[1] == doctest::Approx(ratios[0]).epsilon(0.02));

    // measured against a pair that is not the minimizer the gap turns negative
    SteadyState fake = s;
    fake.pair = DensityPair(g, testing::uniform(g, -1, 1), testing::uniform(g, -1, 1));
    const auto v = ck_check(s.pair, fake, m);
    CHECK(v.violation);
    Grid1D h(default_half_width(m), 256);
    CHECK_THROWS_AS(ck_check(DensityPair(h, Field(256, 0.1), Field(256, 0.1)), s, m), ConfigError);
}

TEST_CASE("geodesic probe: translates and closed form") {
    const Grid1D g(4.0, 512);
    const auto m = reference(0.0);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    const auto same = geodesic_convexity_probe(p, p, m, 11, 256);
    for (double v : same.slack) CHECK(std::abs(v) <= 1e-14);

    const double c = 0.25;  // sixteen cells
    DensityPair q(g, testing::uniform(g, -0.5 + c, 0.5 + c), testing::uniform(g, -0.5 - c, 0.5 - c));
    const auto pr = geodesic_convexity_probe(p, q, m, 11, 256);
    CHECK(pr.dist2 == doctest::Approx(2 * c * c).epsilon(1e-10));
    for (std::size_t k = 0; k < pr.s.size(); ++k) {
        const double t = pr.s[k];
        CHECK(std::abs(pr.slack[k] - t * (1 - t) * c * c) <= 1e-8);
    }

    std::mt19937_64 rng(5);
    Grid1D G(4.6, 512);
    for (int k = 0; k < 10; ++k) {
        const auto a = testing::random_pair(G, rng, 0.3), b = testing::random_pair(G, rng, 0.3);
        const auto A = to_quantiles(a, 512), B = to_quantiles(b, 512);
        double e1 = 0, e2 = 0;
        for (int i = 0; i < 512; ++i) {
            e1 += (B.X1[i] - A.X1[i]) / 512;
            e2 += (B.X2[i] - A.X2[i]) / 512;
        }
        const auto r = geodesic_convexity_probe(a, b, m, 6, 512);
        for (std::size_t j = 0; j < r.s.size(); ++j) {
            const double t = r.s[j];
            CHECK(r.slack[j] == doctest::Approx(-t * (1 - t) * e1 * e2).scale(1.0).epsilon(1e-10));
        }
        const auto r0 = geodesic_convexity_probe(recenter(a), recenter(b), m, 6, 512);
        CHECK(r0.min_slack >= -1e-6);
    }
}

TEST_CASE("geodesic probe with the regularized kernel") {
    std::mt19937_64 rng(9);
    const auto m = reference(0.0, Kernel::regularized(1, 0.5));
    Grid1D g(default_half_width(m), 256);
    for (int k = 0; k < 5; ++k) {
        const auto a = recenter(testing::random_pair(g, rng, 0.3)), b = recenter(testing::random_pair(g, rng, 0.3));
        CHECK(geodesic_convexity_probe(a, b, m, 6, 256).min_slack >= -1e-6);
    }
    CHECK_THROWS_AS(geodesic_convexity_probe(testing::random_pair(g, rng, 0.3), testing::random_pair(g, rng, 0.3), m, 1), ConfigError);
}

TEST_CASE("slope domination as eps shrinks") {
    std::mt19937_64 rng(77);
    const auto m1 = reference(0.01), m2 = reference(0.001);
    Grid1D g(default_half_width(m1), 512);
    const auto s1 = solve_steady_general(m1, g), s2 = solve_steady_general(m2, g);
    const auto p = recenter(testing::random_pair(g, rng, 0.3));
    const auto a = slope_domination_probe(p, m1, s1), b = slope_domination_probe(p, m2, s2);
    CHECK(std::isfinite(a.lhs));
    CHECK(a.lhs > 0);
    CHECK(b.lhs == doctest::Approx(a.lhs).epsilon(0.05));
    CHECK(a.ratio() < 1);
}

TEST_CASE("decay fit") {
    FlowTrace tr;
    tr.E_steady = 1.0;
    for (int k = 0; k <= 100; ++k) {
        const double t = 0.1 * k;
        tr.times.push_back(t);
        tr.E_eps.push_back(1.0 + std::exp(-2 * t));
        tr.L1_err_1.push_back(0.5 * std::exp(-t));
        tr.L1_err_2.push_back(0.5 * std::exp(-t));
    }
    const auto f = decay_fit(tr, 1, 5);
    CHECK(f.rate_E == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(f.rate_L1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(f.r2_E == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f.points_E == 41);

    // window reaching into the rounding floor stops at the first tiny gap
    FlowTrace fl = tr;
    for (std::size_t k = 0; k < fl.size(); ++k)
        if (fl.times[k] > 3.05) fl.E_eps[k] = 1.0;
    const auto g = decay_fit(fl, 1, 10);
    CHECK(g.rate_E == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(g.t_end_E == doctest::Approx(3.0));
    CHECK_THROWS_AS(decay_fit(tr, 5, 1), ConfigError);
    CHECK_THROWS_AS(decay_fit(tr, 20, 30), ConfigError);
}

TEST_CASE("probe constants are seed stable") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 256);
    const auto s = solve_steady_general(m, g);
    const auto a = estimate_probe_constants(m, s, 1, 60), b = estimate_probe_constants(m, s, 2, 60);
    const auto a2 = estimate_probe_constants(m, s, 1, 60);
    CHECK(a.C_CK == a2.C_CK);
    CHECK(a.C_hat == a2.C_hat);
    CHECK(b.C_CK == doctest::Approx(a.C_CK).epsilon(0.05));
    CHECK(b.C_N == doctest::Approx(a.C_N).epsilon(0.05));
    CHECK(b.C_hat == doctest::Approx(a.C_hat).epsilon(0.05));
    CHECK(a.C_CK > 0);
    CHECK(a.C_N > 0);
    CHECK(a.C_hat > 0);
}
