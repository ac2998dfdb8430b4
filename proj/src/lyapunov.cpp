#include "xdiff/lyapunov.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <limits>

#include "xdiff/errors.hpp"
#include "xdiff/functionals.hpp"

namespace xdiff {

namespace {

void require_same_grid(const DensityPair& p, const SteadyState& s) {
    if (!(p.grid == s.pair.grid)) throw ConfigError("lyapunov: pair and steady state live on different grids");
}

GapRatio gap_ratio(double num, double den) {
    GapRatio r;
    if (num == 0.0) return r;
    if (!(den > 0.0)) {
        r.violation = true;
        r.ratio = std::numeric_limits<double>::infinity();
        return r;
    }
    r.ratio = num / den;
    return r;
}

double interaction_lagrangian(const Field& X1, const Field& X2, const Kernel& K) {
    const double w = 1.0 / static_cast<double>(X1.size());
    double s = 0.0;
    for (double a : X1)
        for (double b : X2) s += K.value(a - b);
    return s * w * w;
}

}  // namespace

LyapunovReport lyapunov_decomposition(const DensityPair& p, const ModelSpec& m, const SteadyState& s,
                                      int quantiles) {
    require_same_grid(p, s);
    const Grid1D& g = p.grid;
    const double dx = g.dx();
    const Convolver conv(m.K, g);
    LyapunovReport r;

    r.E_eps = energy(p, m);
    r.L_eps = lyapunov_L(p, m, s);
    r.N_eps = lyapunov_N(p, m, s);
    r.E_gap = r.E_eps - energy(s.pair, m);
    r.L_gap = r.L_eps - lyapunov_L(s.pair, m, s);
    r.N_gap = r.N_eps - lyapunov_N(s.pair, m, s);

    const Field Ub1 = conv.apply(s.pair.rho1), Ub2 = conv.apply(s.pair.rho2);
    double min_cell = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.rho1.size(); ++i) {
        const double b1 = bregman(m.F1, p.rho1[i], s.pair.rho1[i]);
        const double b2 = bregman(m.F2, p.rho2[i], s.pair.rho2[i]);
        const double k1 = std::max(0.0, Ub2[i] - s.C1) * p.rho1[i];
        const double k2 = std::max(0.0, Ub1[i] - s.C2) * p.rho2[i];
        r.I_F += (b1 + b2) * dx;
        r.I_K += (k1 + k2) * dx;
        min_cell = std::min({min_cell, b1, b2, k1, k2});
    }
    r.min_integrand = min_cell;

    Field d1(p.rho1.size()), d2(p.rho2.size());
    for (std::size_t i = 0; i < d1.size(); ++i) {
        d1[i] = p.rho1[i] - s.pair.rho1[i];
        d2[i] = p.rho2[i] - s.pair.rho2[i];
    }
    const Field Kd2 = conv.apply(d2);
    for (std::size_t i = 0; i < d1.size(); ++i) r.K_fun += d1[i] * Kd2[i] * dx;

    r.identity_residual = std::abs(r.L_gap - (r.I_F + r.I_K + r.K_fun));
    const double d = pair_distance(p, s.pair, quantiles);
    r.dist2 = d * d;
    r.ck_ratio = ck_check(p, s, m).ratio;
    const SlopeProbe sp = slope_domination_probe(p, m, s);
    r.slope_lhs = sp.lhs;
    r.slope_rhs = sp.rhs;
    return r;
}

GapRatio ck_check(const DensityPair& p, const SteadyState& s, const ModelSpec& m) {
    require_same_grid(p, s);
    const double a = l1_norm_diff(p.rho1, s.pair.rho1, p.grid);
    const double b = l1_norm_diff(p.rho2, s.pair.rho2, p.grid);
    return gap_ratio(a * a + b * b, lyapunov_L(p, m, s) - lyapunov_L(s.pair, m, s));
}

GapRatio n_vs_l_check(const DensityPair& p, const ModelSpec& m, const SteadyState& s) {
    require_same_grid(p, s);
    return gap_ratio(std::abs(lyapunov_N(p, m, s) - lyapunov_N(s.pair, m, s)),
                     lyapunov_L(p, m, s) - lyapunov_L(s.pair, m, s));
}

GeodesicProbe geodesic_convexity_probe(const DensityPair& p, const DensityPair& q, const ModelSpec& m,
                                       int s_samples, int quantiles) {
    if (s_samples < 2) throw ConfigError("geodesic probe: need at least two samples");
    const QuantilePair A = to_quantiles(p, quantiles), B = to_quantiles(q, quantiles);
    const double lam = m.K.lambda();
    const double da = w2_quantiles(A.X1, B.X1), db = w2_quantiles(A.X2, B.X2);
    GeodesicProbe out;
    out.dist2 = da * da + db * db;
    const double I0 = interaction_lagrangian(A.X1, A.X2, m.K);
    const double I1 = interaction_lagrangian(B.X1, B.X2, m.K);
    out.min_slack = std::numeric_limits<double>::infinity();
    const std::size_t M = A.X1.size();
    Field X1(M), X2(M);
    for (int k = 0; k < s_samples; ++k) {
        const double t = static_cast<double>(k) / (s_samples - 1);
        for (std::size_t i = 0; i < M; ++i) {
            X1[i] = (1 - t) * A.X1[i] + t * B.X1[i];
            X2[i] = (1 - t) * A.X2[i] + t * B.X2[i];
        }
        const double It = k == 0 ? I0 : k == s_samples - 1 ? I1 : interaction_lagrangian(X1, X2, m.K);
        const double sl = (1 - t) * I0 + t * I1 - 0.5 * lam * t * (1 - t) * out.dist2 - It;
        out.s.push_back(t);
        out.slack.push_back(sl);
        out.min_slack = std::min(out.min_slack, sl);
    }
    return out;
}

SlopeProbe slope_domination_probe(const DensityPair& p, const ModelSpec& m, const SteadyState& s) {
    require_same_grid(p, s);
    const Grid1D& g = p.grid;
    const double dx = g.dx();
    const Convolver conv(m.K, g);
    const Field U1 = conv.apply(p.rho1), U2 = conv.apply(p.rho2);
    SlopeProbe out;
    const std::size_t n = p.rho1.size();
    for (int j = 1; j <= 2; ++j) {
        const Field& rho = p.rho(j);
        const Field& V = s.V(j);
        const Field& U = j == 1 ? U2 : U1;
        Field a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double r1 = p.rho1[i], r2 = p.rho2[i];
            const double dh = (r1 > 0.0 && r2 > 0.0) ? m.h.first(j, r1, r2) : 0.0;
            a[i] = dh - V[i];
            b[i] = m.F(j).d1(rho[i]) + m.eps * V[i] + U[i];
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!(rho[i] > 0.0 && rho[i + 1] > 0.0)) continue;
            const double w = 0.5 * (rho[i] + rho[i + 1]) * dx;
            const double ga = (a[i + 1] - a[i]) / dx, gb = (b[i + 1] - b[i]) / dx;
            out.lhs += ga * ga * w;
            out.rhs += gb * gb * w;
        }
    }
    return out;
}

namespace {

struct LineFit {
    double slope = 0.0, r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

}  // namespace

DecayFit decay_fit(const FlowTrace& tr, double t0, double t1) {
    if (!(t1 > t0)) throw ConfigError("decay_fit: empty window");
    std::vector<double> tE, yE, tL, yL;
    bool stopE = false, stopL = false;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double t = tr.times[k];
        if (t < t0 - 1e-12 || t > t1 + 1e-12) continue;
        const double gE = tr.E_eps[k] - tr.E_steady;
        const double gL = tr.L1_err_1[k] + tr.L1_err_2[k];
        stopE = stopE || !(gE >= 1e-13);
        stopL = stopL || !(gL >= 1e-13);
        if (!stopE) {
            tE.push_back(t);
            yE.push_back(std::log(gE));
        }
        if (!stopL) {
            tL.push_back(t);
            yL.push_back(std::log(gL));
        }
    }
    if (tE.size() < 2 || tL.size() < 2) throw ConfigError("decay_fit: fewer than two usable points in the window");
    DecayFit out;
    const LineFit fe = fit_line(tE, yE), fl = fit_line(tL, yL);
    out.rate_E = -fe.slope;
    out.r2_E = fe.r2;
    out.rate_L1 = -fl.slope;
    out.r2_L1 = fl.r2;
    out.points_E = static_cast<int>(tE.size());
    out.points_L1 = static_cast<int>(tL.size());
    out.t_end_E = tE.back();
    return out;
}

DensityPair biweight_pair(const Grid1D& g, double c1, double c2, double w1, double w2) {
    if (!(w1 > 0.0 && w2 > 0.0)) throw ConfigError("biweight_pair: widths must be positive");
    auto bump = [&](double c, double w) {
        Field f(static_cast<std::size_t>(g.n), 0.0);
        for (int i = 0; i < g.n; ++i) {
            const double z = (g.x(i) - c) / w;
            if (std::abs(z) < 1.0) f[static_cast<std::size_t>(i)] = (1 - z * z) * (1 - z * z);
        }
        const double M = mass(f, g);
        if (!(M > 0.0)) throw ConfigError("biweight_pair: bump narrower than a cell");
        for (double& v : f) v /= M;
        return f;
    };
    return recenter(DensityPair(g, bump(c1, w1), bump(c2, w2)));
}

ProbeConstants estimate_probe_constants(const ModelSpec& m, const SteadyState& s, std::uint64_t seed,
                                        int samples) {
    if (samples < 3) throw ConfigError("estimate_probe_constants: need at least three samples");
    using Point = std::array<double, 4>;
    const Point lo{-0.5, -0.5, 0.1, 0.1}, hi{0.5, 0.5, 0.8, 0.8};
    const Grid1D& g = s.pair.grid;
    ProbeConstants out;
    auto make = [&](const Point& q) { return biweight_pair(g, q[0], q[1], q[2], q[3]); };
    const std::array<std::function<double(const DensityPair&)>, 3> ratio{
        [&](const DensityPair& p) { return ck_check(p, s, m).ratio; },
        [&](const DensityPair& p) { return n_vs_l_check(p, m, s).ratio; },
        [&](const DensityPair& p) { return slope_domination_probe(p, m, s).ratio(); }};

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<Point> pts(static_cast<std::size_t>(samples));
    for (auto& q : pts)
        for (int d = 0; d < 4; ++d) q[d] = lo[d] + (hi[d] - lo[d]) * U(rng);

    std::array<double, 3> best{};
    for (int r = 0; r < 3; ++r) {
        std::vector<std::pair<double, Point>> v;
        for (const auto& q : pts) {
            const DensityPair p = make(q);
            v.emplace_back(ratio[r](p), q);
            ++out.evaluations;
        }
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (int t = 0; t < 3; ++t) {
            Point q = v[t].second;
            double fq = v[t].first;
            for (double h = 0.05; h > 1e-3; h *= 0.5) {
                bool moved = true;
                while (moved) {
                    moved = false;
                    for (int d = 0; d < 4; ++d)
                        for (int sg : {-1, 1}) {
                            Point c = q;
                            c[d] = std::clamp(c[d] + sg * h, lo[d], hi[d]);
                            const double fc = ratio[r](make(c));
                            ++out.evaluations;
                            if (fc > fq) {
                                fq = fc;
                                q = c;
                                moved = true;
                            }
                        }
                }
            }
            best[r] = std::max(best[r], fq);
        }
    }
    out.C_CK = best[0];
    out.C_N = best[1];
    out.C_hat = best[2];
    return out;
}

}  // namespace xdiff
