#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "xdiff/errors.hpp"
#include "xdiff/functionals.hpp"
#include "xdiff/jko.hpp"

using namespace xdiff;

namespace {

ModelSpec reference(double eps, Kernel K = Kernel::quadratic(1)) {
    auto m = ModelSpec::example(2, 2, 3, 3, 4, eps, K);
    calibrate_model(m);
    return m;
}

// Exact quantiles of the uniform law on [a, b] at levels (k + 1/2) / m.
Field uniform_quantiles(double a, double b, int m) {
    Field X(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) X[k] = a + (b - a) * (k + 0.5) / m;
    return X;
}

double fd_derivative(const JkoEnergy& E, QuantilePair X, int j, std::size_t k, double h) {
    auto Xp = X, Xm = X;
    Xp.X(j)[k] += h;
    Xm.X(j)[k] -= h;
    return (E.value(Xp) - E.value(Xm)) / (2 * h);
}

}  // namespace

TEST_CASE("Lagrangian energy of uniform quantiles") {
    const Grid1D g(4.0, 512);
    const auto m = reference(0.0);
    for (int M : {32, 256}) {
        QuantilePair X{uniform_quantiles(-0.5, 0.5, M), uniform_quantiles(-0.5, 0.5, M)};
        const auto e = JkoEnergy(m, g).parts(X);
        CHECK(e.internal == doctest::Approx(1.0).epsilon(1e-13));
        // discrete variance of the midpoints (k + 1/2) / M
        CHECK(e.interaction == doctest::Approx((1.0 - 1.0 / (M * M)) / 12).epsilon(1e-12));
        CHECK(lagrangian_entropy(X.X1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
    QuantilePair Y{uniform_quantiles(-1, 1, 64), uniform_quantiles(-1, 1, 64)};
    CHECK(lagrangian_entropy(Y.X1) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("Lagrangian and Eulerian energies agree on smooth data") {
    std::mt19937_64 rng(17);
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    for (int k = 0; k < 5; ++k) {
        const auto p = testing::random_pair(g, rng, 0.3);
        const auto X = to_quantiles(p, 512);
        CHECK(lagrangian_energy(X, m, g) == doctest::Approx(energy(p, m)).epsilon(2e-3));
    }
}

TEST_CASE("energy gradient against central differences") {
    std::mt19937_64 rng(23);
    for (auto K : {Kernel::quadratic(1), Kernel::regularized(1, 0.5)}) {
        const auto m = reference(0.05, K);
        Grid1D g(default_half_width(m), 512);
        const auto X = to_quantiles(testing::random_pair(g, rng, 0.3), 128);
        const JkoEnergy E(m, g);
        const auto G = E.gradient(X);
        double scale = 0;
        for (double v : G.X1) scale = std::max(scale, std::abs(v));
        for (int j = 1; j <= 2; ++j)
            for (std::size_t k : {0ul, 1ul, 7ul, 64ul, 100ul, 126ul, 127ul})
                CHECK(std::abs(G.X(j)[k] - fd_derivative(E, X, j, k, 1e-7)) <= 1e-6 * scale + 1e-8);
    }
}

TEST_CASE("energy barrier") {
    const Grid1D g(4.0, 256);
    const JkoEnergy E(reference(0.05), g);
    QuantilePair X{uniform_quantiles(-0.5, 0.5, 32), uniform_quantiles(-0.5, 0.5, 32)};
    auto bad = X;
    bad.X1[5] = bad.X1[4];
    CHECK(std::isinf(E.value(bad)));
    auto wide = X;
    wide.X2.back() = 3.999;
    CHECK(std::isinf(E.value(wide)));
    CHECK(std::isfinite(E.value(X)));
}

TEST_CASE("isotonic projection") {
    CHECK(isotonic_projection({3, 1, 2}) == Field{2, 2, 2});
    CHECK(isotonic_projection({1, 3, 2, 4}) == Field{1, 2.5, 2.5, 4});
    CHECK(isotonic_projection({0, 1, 2}) == Field{0, 1, 2});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    for (int t = 0; t < 50; ++t) {
        Field y(40);
        for (double& v : y) v = N(rng);
        const Field p = isotonic_projection(y);
        double sy = 0, sp = 0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            sy += y[k];
            sp += p[k];
            if (k) CHECK(p[k] >= p[k - 1]);
        }
        CHECK(sp == doctest::Approx(sy).epsilon(1e-12));
        CHECK(isotonic_projection(p) == p);
        // optimality: residual is orthogonal to the projection and to constants
        double ip = 0;
        for (std::size_t k = 0; k < y.size(); ++k) ip += (y[k] - p[k]) * p[k];
        CHECK(std::abs(ip) <= 1e-10);
    }
}

TEST_CASE("quantile distance") {
    QuantilePair A{{0, 1}, {0, 1}}, B{{1, 2}, {0, 3}};
    CHECK(quantile_distance2(A, B) == doctest::Approx(1.0 + 2.0));
    CHECK(quantile_distance2(A, A) == 0.0);
}

TEST_CASE("minimizing movement step satisfies the step inequality") {
    std::mt19937_64 rng(31);
    for (double eps : {0.0, 0.05, 0.1}) {
        const auto m = reference(eps);
        Grid1D g(default_half_width(m), 512);
        for (int t = 0; t < 4; ++t) {
            const auto X = to_quantiles(testing::random_pair(g, rng, 0.3), 128);
            JkoConfig cfg;
            cfg.tau = t % 2 ? 1e-2 : 1e-3;
            JkoStepReport r;
            const auto Y = jko_step(X, m, cfg, g, &r);
            CHECK(r.step_slack >= -1e-12);
            CHECK(r.E_next <= r.E_prev);
            CHECK(r.grad_norm <= 1e-4);
            CHECK(r.E_next == doctest::Approx(lagrangian_energy(Y, m, g)).epsilon(1e-14));
            CHECK(r.dist2 == doctest::Approx(quantile_distance2(X, Y)).epsilon(1e-14));
            const double objY = jko_objective(Y, X, m, cfg.tau, g);
            CHECK(objY <= jko_objective(X, X, m, cfg.tau, g));
            // optimality against perturbations
            auto Z = Y;
            for (std::size_t k = 0; k < Z.X1.size(); ++k) Z.X1[k] += 1e-4 * std::sin(0.3 * k);
            CHECK(jko_objective(Z, X, m, cfg.tau, g) >= objY - 1e-12);
        }
    }
}

TEST_CASE("steady state is nearly stationary") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    const auto s = solve_steady_general(m, g);
    const auto X = to_quantiles(s.pair, 256);
    JkoStepReport r;
    const auto Y = jko_step(X, m, JkoConfig{}, g, &r);
    CHECK(std::sqrt(quantile_distance2(X, Y)) <= 1e-3);
}

TEST_CASE("test functions") {
    const TestFunction z{0.1, 0.4, 2};
    const double h = 1e-5;
    for (double x : {-1.0, -0.3, 0.0, 0.2, 0.9}) {
        CHECK(z.d1(x) == doctest::Approx((z.value(x + h) - z.value(x - h)) / (2 * h)).epsilon(1e-7));
        CHECK(z.d2(x) == doctest::Approx((z.d1(x + h) - z.d1(x - h)) / (2 * h)).epsilon(1e-7));
    }
    const TestFunction flat{0.0, 1.0, 0};
    CHECK(flat.value(0) == 1.0);
    // sup |zeta''| of a unit Gaussian is 1 at the centre
    CHECK(flat.c2_norm() == doctest::Approx(1.0).epsilon(1e-9));
    const auto zs = default_test_functions(0.6);
    CHECK(zs.size() == 6);
}

TEST_CASE("weak residual stays under the energy bound") {
    std::mt19937_64 rng(37);
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    auto X = to_quantiles(testing::random_pair(g, rng, 0.3), 256);
    const JkoConfig cfg;
    const auto zs = default_test_functions(0.6);
    for (int k = 0; k < 5; ++k) {
        const auto Y = jko_step(X, m, cfg, g);
        for (const auto& z : zs) {
            const auto w = weak_residual(X, Y, m, cfg.tau, g, z);
            CHECK(w.energy_drop >= 0);
            CHECK(std::max(w.R1, w.R2) <= w.bound);
        }
        X = Y;
    }
}

TEST_CASE("Eulerian weak residual of a steady state and of constants") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    const auto s = solve_steady_general(m, g);
    auto one = [](double) { return 1.0; };
    auto zero = [](double) { return 0.0; };
    std::mt19937_64 rng(41);
    const auto p = testing::random_pair(g, rng, 0.3);
    const auto w = weak_residual(p, p, m, 1e-3, one, zero, 1.0);
    CHECK(w.R1 == 0.0);
    CHECK(w.R2 == 0.0);
    const TestFunction z{0.0, 0.5, 1};
    const auto ws = weak_residual(s.pair, s.pair, m, 1e-3, [&](double x) { return z.value(x); },
                                  [&](double x) { return z.d1(x); }, z.c2_norm());
    CHECK(ws.R1 <= 1e-6);
    CHECK(ws.R2 <= 1e-6);
}

TEST_CASE("H1 regularity along a trajectory") {
    std::mt19937_64 rng(43);
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    auto X = to_quantiles(testing::random_pair(g, rng, 0.3), 256);
    const JkoConfig cfg;
    for (int k = 0; k < 5; ++k) {
        const auto Y = jko_step(X, m, cfg, g);
        const auto h = h1_diagnostics(X, Y, m, cfg.tau, 1.0, g);
        CHECK(h.A == 1.0);
        CHECK(h.grad_cut <= h.grad_full + 1e-12);
        CHECK(h.ratio <= 1.0);
        CHECK(h.full_ratio <= 1.0);
        CHECK(h.B > 12.0);
        X = Y;
    }
}

TEST_CASE("trajectory: monotone energy and quasi-continuity") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 512);
    const auto s = solve_steady_general(m, g);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.2, 1.2));
    JkoConfig cfg;
    cfg.m = 128;
    const auto r = jko_run(p, m, cfg, 40, s, 10);
    CHECK(r.energy_monotone);
    CHECK(r.quasi_continuity);
    CHECK(r.iterates.size() == 41);
    CHECK(r.trace.size() == 5);
    CHECK(r.trace.times.back() == doctest::Approx(0.04));
    CHECK(r.trace.W2_to_steady.back() < r.trace.W2_to_steady.front());
}

TEST_CASE("minimizing movement errors") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 256);
    QuantilePair X{uniform_quantiles(-0.5, 0.5, 32), uniform_quantiles(-0.5, 0.5, 32)};
    JkoConfig cfg;
    cfg.tau = 0;
    CHECK_THROWS_AS(jko_step(X, m, cfg, g), ConfigError);
    auto bad = X;
    std::swap(bad.X1[3], bad.X1[4]);
    CHECK_THROWS_AS(jko_step(bad, m, JkoConfig{}, g), DomainError);
    cfg = JkoConfig{};
    cfg.m = 8;
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    CHECK_THROWS_AS(jko_run(p, m, cfg, 1, solve_steady_general(m, g)), ConfigError);
}
