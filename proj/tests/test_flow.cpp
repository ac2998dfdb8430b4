#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "xdiff/errors.hpp"
#include "xdiff/flow.hpp"
#include "xdiff/functionals.hpp"

using namespace xdiff;

namespace {

ModelSpec reference(double eps) {
    auto m = ModelSpec::example(2, 2, 3, 3, 4, eps, Kernel::quadratic(1));
    calibrate_model(m);
    return m;
}

}  // namespace

TEST_CASE("energy of the uniform pair") {
    // cells of width 1/64 tile [-1/2, 1/2] exactly
    const Grid1D g(4.0, 512);
    const auto m = reference(0.0);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    const double dx = g.dx();
    const auto e = energy_parts(p, m);
    CHECK(e.internal == doctest::Approx(1.0).epsilon(1e-13));
    // midpoint variance of 64 equal cells is (1 - dx^2) / 12
    CHECK(e.interaction == doctest::Approx((1 - dx * dx) / 12).epsilon(1e-12));
    CHECK(e.coupling == 0.0);
    CHECK(entropy(p) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    DensityPair q(g, testing::uniform(g, -1, 1), testing::uniform(g, -0.25, 0.25));
    CHECK(entropy(q) == doctest::Approx(-std::log(2.0) + std::log(2.0)).scale(1.0).epsilon(1e-12));
    CHECK(entropy(DensityPair(g, q.rho1, q.rho1)) == doctest::Approx(-2 * std::log(2.0)).epsilon(1e-12));
    CHECK(l1_norm_diff(p.rho1, p.rho1, g) == 0.0);
    CHECK(l1_norm_diff(p.rho1, q.rho1, g) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("coupling integral matches closed form on a constant state") {
    const Grid1D g(4.0, 512);
    const auto m = reference(0.1);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    CHECK(coupling_integral(p.rho1, p.rho2, m, g) == doctest::Approx(oracle::h_closed(3, 3, 4, 1, 1)).epsilon(1e-13));
    CHECK(energy(p, m) == doctest::Approx(energy_parts(p, m).total(0.1)).epsilon(1e-15));
}

TEST_CASE("L + eps N recovers the energy") {
    std::mt19937_64 rng(11);
    for (double eps : {0.0, 0.05, 0.1}) {
        const auto m = reference(eps);
        Grid1D g(default_half_width(m), 256);
        const auto s = solve_steady_general(m, g);
        for (int k = 0; k < 10; ++k) {
            const auto p = testing::random_pair(g, rng, 0.3);
            const double E = energy(p, m);
            CHECK(lyapunov_L(p, m, s) + eps * lyapunov_N(p, m, s) == doctest::Approx(E).epsilon(1e-12));
        }
    }
}

TEST_CASE("functionals reject mismatched grids") {
    const auto m = reference(0.05);
    Grid1D g(default_half_width(m), 256), h(default_half_width(m), 128);
    const auto s = solve_steady_general(m, g);
    DensityPair p(h, testing::uniform(h, -0.5, 0.5), testing::uniform(h, -0.5, 0.5));
    CHECK_THROWS_AS(lyapunov_L(p, m, s), ConfigError);
    CHECK_THROWS_AS(lyapunov_N(p, m, s), ConfigError);
}

TEST_CASE("potentials and face velocities") {
    const Grid1D g(4.0, 256);
    const auto m = reference(0.0);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    const auto phi = potentials(p, m, Convolver(m.K, g));
    // inside the support Phi = rho + K * rho = 1 + (x^2 + 1/12) / 2 up to quadrature
    for (int i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        if (std::abs(x) < 0.45) CHECK(phi.phi1[i] == doctest::Approx(1 + 0.5 * (x * x + 1.0 / 12)).epsilon(1e-3));
    }
    const auto v = velocity_fields(phi, g);
    CHECK(v.v1.size() == static_cast<std::size_t>(g.n + 1));
    CHECK(v.v1.front() == 0.0);
    CHECK(v.v1.back() == 0.0);
    for (std::size_t f = 1; f < v.v1.size() - 1; ++f) {
        const double xf = -g.L + f * g.dx();
        if (std::abs(xf) < 0.45) CHECK(v.v1[f] == doctest::Approx(-xf).scale(1.0).epsilon(1e-9));
    }
}

TEST_CASE("time step limits") {
    const Grid1D g(4.0, 256);
    const auto m = reference(0.0);
    DensityPair empty(g, Field(256, 0.0), Field(256, 0.0));
    CHECK(cfl_dt(empty, m, 0.4, 0.01) == 0.01);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    const double dt = cfl_dt(p, m, 0.4, 1.0);
    CHECK(dt > 0);
    CHECK(dt < 1.0);
    // D = rho F'' = 1 on the plateau
    CHECK(diffusive_dt(p, m, 0.4) == doctest::Approx(0.4 * g.dx() * g.dx() / 2).epsilon(1e-12));
    CHECK_THROWS_AS(cfl_dt(p, m, 0.0, 1.0), ConfigError);
}

TEST_CASE("upwind step conserves mass and positivity") {
    std::mt19937_64 rng(3);
    for (double eps : {0.0, 0.1}) {
        const auto m = reference(eps);
        Grid1D g(default_half_width(m), 256);
        auto p = testing::random_pair(g, rng, 0.3);
        for (int k = 0; k < 50; ++k) {
            const double dt = std::min(cfl_dt(p, m, 0.4, 1e-2), diffusive_dt(p, m, 0.4));
            auto q = fv_step(p, m, dt);
            for (int j = 1; j <= 2; ++j) {
                CHECK(std::abs(mass(q.rho(j), g) - mass(p.rho(j), g)) <= 1e-13);
                for (double r : q.rho(j)) CHECK(r >= 0);
            }
            p = q;
        }
    }
}

TEST_CASE("oversized step is rejected") {
    const auto m = reference(0.0);
    Grid1D g(default_half_width(m), 256);
    DensityPair p(g, testing::uniform(g, -0.3, 0.3), testing::uniform(g, -0.3, 0.3));
    CHECK_THROWS_AS(fv_step(p, m, 1.0), DomainError);
}

TEST_CASE("flow relaxes to the Barenblatt profile") {
    const auto m = reference(0.0);
    Grid1D g(default_half_width(m), 256);
    const auto s = solve_steady_quadratic(m, g);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.8, 0.8));
    FlowConfig cfg;
    cfg.T = 3.0;
    cfg.record_dt = 0.5;
    const auto r = run_flow(p, m, s, cfg);
    CHECK(r.trace.size() == 7);
    CHECK(r.trace.times.back() == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(r.diag.max_mass_drift_step <= 1e-12);
    CHECK(r.diag.max_energy_increase <= 1e-12);
    CHECK(r.diag.max_com_drift <= 1e-12);
    for (std::size_t k = 1; k < r.trace.size(); ++k) {
        CHECK(r.trace.E_eps[k] <= r.trace.E_eps[k - 1]);
        CHECK(r.trace.W2_to_steady[k] < r.trace.W2_to_steady[k - 1]);
    }
    CHECK(r.trace.W2_to_steady.back() < 1e-3);
    CHECK(r.trace.E_eps.back() - r.trace.E_steady < 1e-5);
}

TEST_CASE("coupled flow keeps the energy monotone") {
    const auto m = reference(0.1);
    Grid1D g(default_half_width(m), 256);
    const auto s = solve_steady_general(m, g);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.2, 1.2));
    FlowConfig cfg;
    cfg.T = 1.0;
    const auto r = run_flow(p, m, s, cfg);
    CHECK(r.diag.max_energy_increase <= 1e-9);
    CHECK(r.diag.max_com_drift <= 10 * g.dx());
    CHECK(r.trace.L_eps.back() < r.trace.L_eps.front());
}

TEST_CASE("flow configuration errors") {
    const auto m = reference(0.0);
    Grid1D g(default_half_width(m), 128);
    const auto s = solve_steady_quadratic(m, g);
    DensityPair p(g, testing::uniform(g, -0.5, 0.5), testing::uniform(g, -0.5, 0.5));
    FlowConfig cfg;
    cfg.T = -1;
    CHECK_THROWS_AS(run_flow(p, m, s, cfg), ConfigError);
    cfg.T = 1;
    cfg.cfl_safety = 1.5;
    CHECK_THROWS_AS(run_flow(p, m, s, cfg), ConfigError);
    Grid1D h(default_half_width(m), 256);
    DensityPair q(h, testing::uniform(h, -0.5, 0.5), testing::uniform(h, -0.5, 0.5));
    CHECK_THROWS_AS(run_flow(q, m, s, FlowConfig{}), ConfigError);
}

TEST_CASE("trace csv layout") {
    const auto m = reference(0.0);
    Grid1D g(default_half_width(m), 128);
    const auto s = solve_steady_quadratic(m, g);
    FlowTrace tr;
    tr.record(0.0, s.pair, m, s, 64);
    tr.record(0.5, s.pair, m, s, 64);
    CHECK(tr.W2_to_steady[0] == 0.0);
    CHECK(tr.E_steady == tr.E_eps[0]);
    std::ostringstream os;
    write_trace_csv(os, tr, {{"rate", 2.0}});
    const std::string out = os.str();
    CHECK(out.rfind("t,E_eps,L_eps,N_eps,H_c,mass1,mass2,m1_comb,W2,L1err1,L1err2\n", 0) == 0);
    CHECK(out.find("# rate=2\n") != std::string::npos);
    int lines = 0;
    for (char c : out) lines += c == '\n';
    CHECK(lines == 4);
}
