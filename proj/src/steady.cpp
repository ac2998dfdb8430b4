#include "xdiff/steady.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "xdiff/errors.hpp"

namespace xdiff {

namespace {

constexpr double kMassTol = 1e-13;

// Cellwise solution of Gamma(u) = ((C1 + base1)_+, (C2 + base2)_+) and the
// resulting component masses.
struct ProfileMap {
    const ModelSpec& m;
    const Grid1D& g;
    const Field& base1;
    const Field& base2;

    void profile(double C1, double C2, Field& r1, Field& r2) const {
        const auto n = static_cast<std::size_t>(g.n);
        r1.assign(n, 0.0);
        r2.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double t1 = std::max(0.0, C1 + base1[i]);
            const double t2 = std::max(0.0, C2 + base2[i]);
            if (t1 == 0.0 && t2 == 0.0) continue;
            const Vec2 u = gamma_inverse(m, t1, t2);
            r1[i] = m.F1.d1_inverse(u.v1);
            r2[i] = m.F2.d1_inverse(u.v2);
        }
    }

    std::array<double, 2> masses(double C1, double C2) const {
        Field r1, r2;
        profile(C1, C2, r1, r2);
        return {mass(r1, g), mass(r2, g)};
    }
};

// Mass of ((C + base)_+)^{1/(a-1)}, the eps = 0 profile of one component.
double decoupled_mass(const PowerNonlinearity& F, const Field& base, const Grid1D& g, double C) {
    double s = 0.0;
    for (double b : base) s += F.d1_inverse(std::max(0.0, C + b));
    return s * g.dx();
}

// Monotone bisection for f(C) = target on C >= lo, expanding the upper end.
template <class Fn>
double bisect_increasing(Fn f, double lo, double target) {
    double hi = lo + 1.0;
    int expand = 0;
    while (f(hi) < target) {
        hi = lo + 2.0 * (hi - lo);
        if (++expand > 200) throw NumericError("mass constraint: bracket expansion failed", hi);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double max_of(const Field& f) { return *std::max_element(f.begin(), f.end()); }

// Finds (C1, C2) with unit masses: 2D Newton on a finite-difference Jacobian,
// falling back to alternating bisection.
std::array<double, 2> solve_constants(const ProfileMap& pm, std::array<double, 2> guess,
                                     double mass_tol = kMassTol) {
    const double lo1 = -max_of(pm.base1), lo2 = -max_of(pm.base2);
    auto defect = [&](const std::array<double, 2>& C) {
        const auto M = pm.masses(C[0], C[1]);
        return std::array<double, 2>{M[0] - 1.0, M[1] - 1.0};
    };
    auto norm = [](const std::array<double, 2>& d) { return std::max(std::abs(d[0]), std::abs(d[1])); };

    std::array<double, 2> C = {std::max(guess[0], lo1 + 1e-8), std::max(guess[1], lo2 + 1e-8)};
    auto d = defect(C);
    for (int it = 0; it < 60 && norm(d) > mass_tol; ++it) {
        std::array<std::array<double, 2>, 2> J{};
        for (int k = 0; k < 2; ++k) {
            auto Cp = C;
            const double h = 1e-7 * (1.0 + std::abs(C[k]));
            Cp[k] += h;
            const auto dp = defect(Cp);
            J[0][k] = (dp[0] - d[0]) / h;
            J[1][k] = (dp[1] - d[1]) / h;
        }
        const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
        const double s0 = (J[1][1] * d[0] - J[0][1] * d[1]) / det;
        const double s1 = (-J[1][0] * d[0] + J[0][0] * d[1]) / det;
        bool accepted = false;
        double a = 1.0;
        for (int ls = 0; ls < 30; ++ls, a *= 0.5) {
            std::array<double, 2> Cn = {std::max(C[0] - a * s0, lo1), std::max(C[1] - a * s1, lo2)};
            const auto dn = defect(Cn);
            if (norm(dn) < norm(d)) {
                C = Cn;
                d = dn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (norm(d) <= mass_tol) return C;

    for (int sweep = 0; sweep < 500 && norm(d) > mass_tol; ++sweep) {
        C[0] = bisect_increasing([&](double c) { return pm.masses(c, C[1])[0]; }, lo1, 1.0);
        C[1] = bisect_increasing([&](double c) { return pm.masses(C[0], c)[1]; }, lo2, 1.0);
        d = defect(C);
    }
    if (norm(d) > 1e-11) throw NumericError("mass constraint not met", norm(d));
    return C;
}

std::array<double, 2> decoupled_guess(const ModelSpec& m, const Grid1D& g, const Field& b1,
                                      const Field& b2) {
    return {bisect_increasing([&](double c) { return decoupled_mass(m.F1, b1, g, c); }, -max_of(b1), 1.0),
            bisect_increasing([&](double c) { return decoupled_mass(m.F2, b2, g, c); }, -max_of(b2), 1.0)};
}

double l1_distance(const Field& a, const Field& b, const Grid1D& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s * g.dx();
}

// Radius of {C + base > 0} on the positive and negative half-lines, located
// by linear interpolation of the zero crossing between cell centres.
double support_radius(const Field& level, const Grid1D& g) {
    const int n = g.n;
    auto lin = [&](int in, int out) {
        const double a = level[static_cast<std::size_t>(in)], b = level[static_cast<std::size_t>(out)];
        const double t = a / (a - b);
        return g.x(in) + t * (g.x(out) - g.x(in));
    };
    int right = -1, left = n;
    for (int i = 0; i < n; ++i)
        if (level[static_cast<std::size_t>(i)] > 0.0) {
            right = std::max(right, i);
            left = std::min(left, i);
        }
    if (right < 0) return 0.0;
    const double xr = right + 1 < n ? lin(right, right + 1) : g.L;
    const double xl = left > 0 ? lin(left, left - 1) : -g.L;
    return 0.5 * (xr - xl);
}

}  // namespace

double barenblatt_radius(const PowerNonlinearity& F, double lambda) {
    const double p = 1.0 / (F.a - 1.0);
    const double B = std::sqrt(M_PI) * std::tgamma(p + 1.0) / std::tgamma(p + 1.5);
    const double C = std::pow(std::sqrt(0.5 * lambda) / B, 1.0 / (p + 0.5));
    return std::sqrt(2.0 * C / lambda);
}

double default_half_width(const ModelSpec& m) {
    const double lam = m.K.lambda();
    return 4.0 * std::max(barenblatt_radius(m.F1, lam), barenblatt_radius(m.F2, lam));
}

double lambda_eps(const ModelSpec& m, const SteadyState& s) {
    return m.K.lambda() - m.eps * s.K0_estimate;
}

void attach_steady(ModelSpec& m, const SteadyState& s) { m.lambda_eps = lambda_eps(m, s); }

ElResidual el_residual(const SteadyState& s, const ModelSpec& m) {
    const auto& p = s.pair;
    const Convolver conv(m.K, p.grid);
    const Field U1 = conv.apply(p.rho1), U2 = conv.apply(p.rho2);
    ElResidual r;
    for (std::size_t i = 0; i < p.rho1.size(); ++i) {
        const double r1 = p.rho1[i], r2 = p.rho2[i];
        const bool coupled = r1 > 0.0 && r2 > 0.0 && m.eps != 0.0;
        const double phi1 = m.F1.d1(r1) + (coupled ? m.eps * m.h.first(1, r1, r2) : 0.0) + U2[i];
        const double phi2 = m.F2.d1(r2) + (coupled ? m.eps * m.h.first(2, r1, r2) : 0.0) + U1[i];
        const double d1 = r1 > kSupportThreshold ? std::abs(phi1 - s.C1) : std::max(0.0, s.C1 - phi1);
        const double d2 = r2 > kSupportThreshold ? std::abs(phi2 - s.C2) : std::max(0.0, s.C2 - phi2);
        r.r1 = std::max(r.r1, d1);
        r.r2 = std::max(r.r2, d2);
    }
    return r;
}

void finalize_steady(SteadyState& s, const ModelSpec& m) {
    const auto& p = s.pair;
    const auto& g = p.grid;
    const auto n = static_cast<std::size_t>(g.n);
    s.V1.assign(n, 0.0);
    s.V2.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double r1 = p.rho1[i], r2 = p.rho2[i];
        if (r1 > 0.0 && r2 > 0.0) {
            s.V1[i] = m.h.first(1, r1, r2);
            s.V2[i] = m.h.first(2, r1, r2);
        }
    }
    double k0 = 0.0;
    const double dx2 = g.dx() * g.dx();
    for (const Field* V : {&s.V1, &s.V2})
        for (std::size_t i = 1; i + 1 < n; ++i)
            k0 = std::max(k0, std::abs((*V)[i + 1] - 2.0 * (*V)[i] + (*V)[i - 1]) / dx2);
    s.K0_estimate = k0;

    const Convolver conv(m.K, g);
    const Field U1 = conv.apply(p.rho1), U2 = conv.apply(p.rho2);
    Field lev1(n), lev2(n);
    for (std::size_t i = 0; i < n; ++i) {
        lev1[i] = s.C1 - U2[i];
        lev2[i] = s.C2 - U1[i];
    }
    s.support1 = support_radius(lev1, g);
    s.support2 = support_radius(lev2, g);
    s.residual = el_residual(s, m).max();
}

double inverse_curvature_integral(const SteadyState& s, const ModelSpec& m, int j) {
    double acc = 0.0;
    for (double r : s.pair.rho(j))
        if (r > kSupportThreshold) acc += 1.0 / m.F(j).d2(r);
    return acc * s.pair.grid.dx();
}

SteadyState solve_steady_quadratic(const ModelSpec& m, const Grid1D& g, double tol) {
    if (m.K.type() != Kernel::Type::quadratic)
        throw ConfigError("solve_steady_quadratic: kernel must be quadratic");
    const auto n = static_cast<std::size_t>(g.n);
    const double lam = m.K.lambda();
    Field base(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.x(static_cast<int>(i));
        base[i] = -0.5 * lam * x * x;
    }
    const ProfileMap pm{m, g, base, base};
    const auto C = solve_constants(pm, decoupled_guess(m, g, base, base), std::min(kMassTol, tol));

    SteadyState s;
    Field r1, r2;
    pm.profile(C[0], C[1], r1, r2);
    s.pair = DensityPair(g, std::move(r1), std::move(r2));
    s.Ct1 = C[0];
    s.Ct2 = C[1];
    s.C1 = C[0] + 0.5 * lam * second_moment(s.pair.rho2, g);
    s.C2 = C[1] + 0.5 * lam * second_moment(s.pair.rho1, g);
    finalize_steady(s, m);
    // the radius of {C~_j - lambda x^2 / 2 > 0} is known exactly
    s.support1 = std::sqrt(2.0 * s.Ct1 / lam);
    s.support2 = std::sqrt(2.0 * s.Ct2 / lam);
    return s;
}

SteadyState solve_steady_general(const ModelSpec& m, const Grid1D& g, const SteadyOptions& opt,
                                 const DensityPair* init) {
    if (!(opt.damping > 0.0 && opt.damping <= 1.0))
        throw ConfigError("solve_steady_general: damping must lie in (0, 1]");
    const auto n = static_cast<std::size_t>(g.n);
    const Convolver conv(m.K, g);

    DensityPair cur;
    if (init) {
        if (!(init->grid == g)) throw ConfigError("solve_steady_general: initial pair on another grid");
        cur = recenter(*init);
    } else {
        ModelSpec m0 = m;
        m0.eps = 0.0;
        m0.K = Kernel::quadratic(m.K.lambda());
        cur = solve_steady_quadratic(m0, g).pair;
    }
    Field U1 = conv.apply(cur.rho1), U2 = conv.apply(cur.rho2);

    Field b1(n), b2(n);
    auto update_bases = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            b1[i] = -U2[i];
            b2[i] = -U1[i];
        }
    };
    update_bases();
    std::array<double, 2> C = decoupled_guess(m, g, b1, b2);

    double change = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opt.max_outer; ++it) {
        const ProfileMap pm{m, g, b1, b2};
        C = solve_constants(pm, C);
        Field r1, r2;
        pm.profile(C[0], C[1], r1, r2);
        DensityPair next = recenter(DensityPair(g, std::move(r1), std::move(r2)));
        change = l1_distance(next.rho1, cur.rho1, g) + l1_distance(next.rho2, cur.rho2, g);
        cur = std::move(next);
        const Field N1 = conv.apply(cur.rho1), N2 = conv.apply(cur.rho2);
        for (std::size_t i = 0; i < n; ++i) {
            U1[i] = (1.0 - opt.damping) * U1[i] + opt.damping * N1[i];
            U2[i] = (1.0 - opt.damping) * U2[i] + opt.damping * N2[i];
        }
        update_bases();
        if (change <= opt.tol) break;
    }
    if (!(change <= opt.tol))
        throw NumericError("solve_steady_general: outer iteration did not converge", change);

    // final solve against the undamped potentials of the converged pair
    U1 = conv.apply(cur.rho1);
    U2 = conv.apply(cur.rho2);
    update_bases();
    const ProfileMap pm{m, g, b1, b2};
    C = solve_constants(pm, C);
    Field r1, r2;
    pm.profile(C[0], C[1], r1, r2);

    SteadyState s;
    s.pair = DensityPair(g, std::move(r1), std::move(r2));
    s.C1 = C[0];
    s.C2 = C[1];
    s.iterations = it + 1;
    s.last_change = change;
    finalize_steady(s, m);
    return s;
}

}  // namespace xdiff
