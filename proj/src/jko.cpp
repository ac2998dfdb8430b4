#include "xdiff/jko.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xdiff/flow.hpp"
#include "xdiff/functionals.hpp"

namespace xdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Weight of gap k among m - 1 gaps: the two end gaps also carry the half
// cells beyond the extreme quantiles.
double gap_weight(std::size_t k, std::size_t gaps) {
    if (gaps == 1) return 2.0;
    double w = 1.0;
    if (k == 0) w += 0.5;
    if (k + 1 == gaps) w += 0.5;
    return w;
}

bool strictly_increasing(const Field& X) {
    for (std::size_t k = 0; k + 1 < X.size(); ++k)
        if (!(X[k + 1] > X[k])) return false;
    return true;
}

void require_monotone(const QuantilePair& X) {
    for (int j = 1; j <= 2; ++j) {
        const Field& x = X.X(j);
        if (x.size() < 2) throw ConfigError("quantile arrays need at least two entries");
        for (std::size_t k = 0; k + 1 < x.size(); ++k)
            if (x[k + 1] < x[k] || !std::isfinite(x[k])) throw DomainError("quantiles must be nondecreasing");
    }
    if (X.X1.size() != X.X2.size()) throw ConfigError("quantile arrays differ in length");
}

double internal_energy(const Field& X, const PowerNonlinearity& F) {
    const std::size_t gaps = X.size() - 1;
    const double dm = 1.0 / static_cast<double>(X.size());
    double s = 0.0;
    for (std::size_t k = 0; k < gaps; ++k) {
        const double g = X[k + 1] - X[k];
        if (!(g > 0.0)) return kInf;
        s += gap_weight(k, gaps) * g * F.value(dm / g);
    }
    return s;
}

// A piece of a Lagrangian density: `mass` spread uniformly over [a, b].
struct Segment {
    double a, b, mass;
};

// Segments whose shape depends on X[k].
int segments_touching(const Field& X, std::size_t k, Segment* out) {
    const std::size_t m = X.size();
    const double dm = 1.0 / static_cast<double>(m);
    int c = 0;
    if (k <= 1) out[c++] = {X[0] - 0.5 * (X[1] - X[0]), X[0], 0.5 * dm};
    if (k >= 1) out[c++] = {X[k - 1], X[k], dm};
    if (k + 1 < m) out[c++] = {X[k], X[k + 1], dm};
    if (k + 2 >= m) out[c++] = {X[m - 1], X[m - 1] + 0.5 * (X[m - 1] - X[m - 2]), 0.5 * dm};
    return c;
}

// Adds sign * segment to `acc` on the grid, recording touched cells.
void deposit_local(const Segment& s, double sign, const Grid1D& g, Field& acc,
                   std::vector<char>& mark, std::vector<int>& touched) {
    const double dx = g.dx();
    const int n = g.n;
    auto cell_of = [&](double x) {
        return std::clamp(static_cast<int>(std::floor((x + g.L) / dx)), 0, n - 1);
    };
    auto add = [&](int i, double v) {
        const auto u = static_cast<std::size_t>(i);
        if (!mark[u]) {
            mark[u] = 1;
            touched.push_back(i);
        }
        acc[u] += v;
    };
    if (!(s.b - s.a > 1e-14 * dx)) {
        add(cell_of(0.5 * (s.a + s.b)), sign * s.mass / dx);
        return;
    }
    const double dens = s.mass / (s.b - s.a);
    for (int i = cell_of(s.a); i <= cell_of(s.b); ++i) {
        const double lo = std::max(s.a, -g.L + i * dx);
        const double hi = std::min(s.b, -g.L + (i + 1) * dx);
        if (hi > lo) add(i, sign * dens * (hi - lo) / dx);
    }
}

void solve_tridiag(const Field& diag, const Field& off, const Field& rhs, Field& x) {
    const std::size_t n = diag.size();
    Field c(n), d(n);
    double b = diag[0];
    c[0] = n > 1 ? off[0] / b : 0.0;
    d[0] = rhs[0] / b;
    for (std::size_t i = 1; i < n; ++i) {
        b = diag[i] - off[i - 1] * c[i - 1];
        c[i] = i + 1 < n ? off[i] / b : 0.0;
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / b;
    }
    x.resize(n);
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
}

}  // namespace

// ---------------------------------------------------------------------------

double JkoEnergy::coupling(const QuantilePair& X) const {
    try {
        const Field r1 = from_quantiles(X.X1, g_);
        const Field r2 = from_quantiles(X.X2, g_);
        return coupling_integral(r1, r2, m_, g_);
    } catch (const DomainError&) {
        return kInf;
    }
}

LagrangianEnergy JkoEnergy::parts(const QuantilePair& X) const {
    LagrangianEnergy e;
    e.internal = internal_energy(X.X1, m_.F1) + internal_energy(X.X2, m_.F2);
    if (!std::isfinite(e.internal)) {
        e.internal = kInf;
        return e;
    }
    const std::size_t m = X.X1.size();
    const double dm = 1.0 / static_cast<double>(m);
    if (m_.K.type() == Kernel::Type::quadratic) {
        double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
        for (std::size_t k = 0; k < m; ++k) {
            s1 += X.X1[k];
            s2 += X.X2[k];
            q1 += X.X1[k] * X.X1[k];
            q2 += X.X2[k] * X.X2[k];
        }
        e.interaction = 0.5 * m_.K.lambda() * dm * dm *
                        (static_cast<double>(m) * (q1 + q2) - 2.0 * s1 * s2);
    } else {
        double s = 0.0;
        for (double a : X.X1)
            for (double b : X.X2) s += m_.K.value(a - b);
        e.interaction = s * dm * dm;
    }
    if (m_.eps != 0.0) e.coupling = coupling(X);
    return e;
}

double JkoEnergy::value(const QuantilePair& X) const { return parts(X).total(m_.eps); }

QuantilePair JkoEnergy::gradient(const QuantilePair& X) const {
    const std::size_t m = X.X1.size();
    const double dm = 1.0 / static_cast<double>(m);
    QuantilePair G{Field(m, 0.0), Field(m, 0.0)};

    for (int j = 1; j <= 2; ++j) {
        const Field& x = X.X(j);
        Field& gr = G.X(j);
        const auto& F = m_.F(j);
        const std::size_t gaps = m - 1;
        for (std::size_t k = 0; k < gaps; ++k) {
            const double rho = dm / (x[k + 1] - x[k]);
            const double q = gap_weight(k, gaps) * (F.value(rho) - rho * F.d1(rho));
            gr[k + 1] += q;
            gr[k] -= q;
        }
    }

    if (m_.K.type() == Kernel::Type::quadratic) {
        double s1 = 0, s2 = 0;
        for (std::size_t k = 0; k < m; ++k) {
            s1 += X.X1[k];
            s2 += X.X2[k];
        }
        const double lam = m_.K.lambda();
        for (std::size_t k = 0; k < m; ++k) {
            G.X1[k] += lam * dm * dm * (static_cast<double>(m) * X.X1[k] - s2);
            G.X2[k] += lam * dm * dm * (static_cast<double>(m) * X.X2[k] - s1);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < m; ++k) {
                const double f = m_.K.d1(X.X1[i] - X.X2[k]) * dm * dm;
                G.X1[i] += f;
                G.X2[k] -= f;
            }
    }

    if (m_.eps != 0.0) {
        Field r1, r2;
        try {
            r1 = from_quantiles(X.X1, g_);
            r2 = from_quantiles(X.X2, g_);
        } catch (const DomainError&) {
            return G;
        }
        const double dx = g_.dx();
        const double delta = 1e-6 * dx;
        Field acc(static_cast<std::size_t>(g_.n), 0.0);
        std::vector<char> mark(static_cast<std::size_t>(g_.n), 0);
        std::vector<int> touched;
        Segment old_seg[4], new_seg[4];
        for (int j = 1; j <= 2; ++j) {
            Field x = X.X(j);
            const Field& base = j == 1 ? r1 : r2;
            const Field& other = j == 1 ? r2 : r1;
            auto h_at = [&](double mine, double oth) {
                if (!(mine > 0.0) || !(oth > 0.0)) return 0.0;
                return j == 1 ? m_.h.eval(CouplingPart::h, mine, oth) : m_.h.eval(CouplingPart::h, oth, mine);
            };
            for (std::size_t k = 0; k < m; ++k) {
                const double xk = x[k];
                double dH[2];
                for (int side = 0; side < 2; ++side) {
                    const int no = segments_touching(x, k, old_seg);
                    x[k] = xk + (side == 0 ? delta : -delta);
                    const int nn = segments_touching(x, k, new_seg);
                    x[k] = xk;
                    touched.clear();
                    for (int s = 0; s < no; ++s) deposit_local(old_seg[s], -1.0, g_, acc, mark, touched);
                    for (int s = 0; s < nn; ++s) deposit_local(new_seg[s], 1.0, g_, acc, mark, touched);
                    double d = 0.0;
                    for (int i : touched) {
                        const auto ui = static_cast<std::size_t>(i);
                        const double nr = std::max(0.0, base[ui] + acc[ui]);
                        d += h_at(nr, other[ui]) - h_at(base[ui], other[ui]);
                        acc[ui] = 0.0;
                        mark[ui] = 0;
                    }
                    dH[side] = d * dx;
                }
                G.X(j)[k] += m_.eps * (dH[0] - dH[1]) / (2.0 * delta);
            }
        }
    }
    return G;
}

void JkoEnergy::hessian_tridiag(const QuantilePair& X, int j, Field& diag, Field& off) const {
    const Field& x = X.X(j);
    const std::size_t m = x.size();
    const double dm = 1.0 / static_cast<double>(m);
    const auto& F = m_.F(j);
    diag.assign(m, dm * m_.K.lambda());
    off.assign(m - 1, 0.0);
    const std::size_t gaps = m - 1;
    for (std::size_t k = 0; k < gaps; ++k) {
        const double g = x[k + 1] - x[k];
        const double rho = dm / g;
        const double s = gap_weight(k, gaps) * rho * rho * F.d2(rho) / g;
        diag[k] += s;
        diag[k + 1] += s;
        off[k] = -s;
    }
}

double lagrangian_energy(const QuantilePair& X, const ModelSpec& m, const Grid1D& g) {
    require_monotone(X);
    return JkoEnergy(m, g).value(X);
}

double lagrangian_entropy(const Field& X) {
    const std::size_t gaps = X.size() - 1;
    const double dm = 1.0 / static_cast<double>(X.size());
    double s = 0.0;
    for (std::size_t k = 0; k < gaps; ++k) {
        const double g = X[k + 1] - X[k];
        if (!(g > 0.0)) return kInf;
        s += gap_weight(k, gaps) * dm * std::log(dm / g);
    }
    return s;
}

double quantile_distance2(const QuantilePair& X, const QuantilePair& Xhat) {
    const double a = w2_quantiles(X.X1, Xhat.X1), b = w2_quantiles(X.X2, Xhat.X2);
    return a * a + b * b;
}

double jko_objective(const QuantilePair& X, const QuantilePair& Xhat, const ModelSpec& m,
                     double tau, const Grid1D& g) {
    require_monotone(X);
    require_monotone(Xhat);
    if (!(tau > 0.0)) throw ConfigError("jko_objective: tau must be positive");
    return quantile_distance2(X, Xhat) / (2.0 * tau) + JkoEnergy(m, g).value(X);
}

Field isotonic_projection(const Field& y) {
    // blocks of (sum, count), merged while their means decrease
    std::vector<double> sum;
    std::vector<std::size_t> cnt;
    for (double v : y) {
        sum.push_back(v);
        cnt.push_back(1);
        while (sum.size() > 1 &&
               sum[sum.size() - 2] / static_cast<double>(cnt[cnt.size() - 2]) >
                   sum.back() / static_cast<double>(cnt.back())) {
            sum[sum.size() - 2] += sum.back();
            cnt[cnt.size() - 2] += cnt.back();
            sum.pop_back();
            cnt.pop_back();
        }
    }
    Field out;
    out.reserve(y.size());
    for (std::size_t b = 0; b < sum.size(); ++b)
        out.insert(out.end(), cnt[b], sum[b] / static_cast<double>(cnt[b]));
    return out;
}

QuantilePair jko_step(const QuantilePair& Xhat, const ModelSpec& m, const JkoConfig& cfg,
                      const Grid1D& g, JkoStepReport* report) {
    require_monotone(Xhat);
    if (!(cfg.tau > 0.0)) throw ConfigError("jko_step: tau must be positive");
    const JkoEnergy E(m, g);
    const double tau = cfg.tau;
    const std::size_t M = Xhat.X1.size();
    const double dm = 1.0 / static_cast<double>(M);

    auto objective = [&](const QuantilePair& X) {
        const double e = E.value(X);
        if (!std::isfinite(e)) return kInf;
        return e + quantile_distance2(X, Xhat) / (2.0 * tau);
    };
    auto full_gradient = [&](const QuantilePair& X) {
        QuantilePair G = E.gradient(X);
        for (int j = 1; j <= 2; ++j)
            for (std::size_t k = 0; k < M; ++k) G.X(j)[k] += dm * (X.X(j)[k] - Xhat.X(j)[k]) / tau;
        return G;
    };
    auto vnorm = [&](const QuantilePair& G) {
        double s = 0.0;
        for (int j = 1; j <= 2; ++j)
            for (double v : G.X(j)) s += v * v;
        return std::sqrt(s / dm);
    };

    JkoStepReport rep;
    rep.E_prev = E.value(Xhat);
    if (!std::isfinite(rep.E_prev)) throw DomainError("jko_step: previous iterate has infinite energy");

    QuantilePair X = Xhat;
    double f = rep.E_prev;
    QuantilePair G = full_gradient(X);
    double gn = vnorm(G);
    int it = 0, flat = 0;
    const double round = 8.0 * std::numeric_limits<double>::epsilon();
    for (; it < cfg.opt.max_iters && gn > cfg.opt.tol; ++it) {
        // preconditioned direction, species by species
        QuantilePair D;
        for (int j = 1; j <= 2; ++j) {
            Field diag, off;
            E.hessian_tridiag(X, j, diag, off);
            for (double& d : diag) d += dm / tau;
            solve_tridiag(diag, off, G.X(j), D.X(j));
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            if (attempt == 1)
                for (int j = 1; j <= 2; ++j)
                    for (std::size_t k = 0; k < M; ++k) D.X(j)[k] = G.X(j)[k] * tau / dm;
            double a = cfg.opt.step_size;
            for (int ls = 0; ls < cfg.opt.max_backtracks; ++ls, a *= cfg.opt.backtrack) {
                QuantilePair T;
                for (int j = 1; j <= 2; ++j) {
                    Field y(M);
                    for (std::size_t k = 0; k < M; ++k) y[k] = X.X(j)[k] - a * D.X(j)[k];
                    T.X(j) = isotonic_projection(y);
                }
                if (!strictly_increasing(T.X1) || !strictly_increasing(T.X2)) continue;
                const double ft = objective(T);
                if (!std::isfinite(ft)) continue;
                double pred = 0.0;
                for (int j = 1; j <= 2; ++j)
                    for (std::size_t k = 0; k < M; ++k) pred += G.X(j)[k] * (X.X(j)[k] - T.X(j)[k]);
                bool ok = ft <= f - 1e-4 * pred;
                QuantilePair GT;
                if (!ok && ft <= f + round * std::abs(f)) {
                    // decrease below rounding: accept if stationarity improves
                    GT = full_gradient(T);
                    ok = vnorm(GT) < gn && ft <= f;
                }
                if (ok) {
                    flat = f - ft <= round * std::abs(f) ? flat + 1 : 0;
                    X = std::move(T);
                    f = ft;
                    G = GT.X1.empty() ? full_gradient(X) : std::move(GT);
                    gn = vnorm(G);
                    accepted = true;
                    break;
                }
            }
        }
        // no line search success, or the objective stopped moving above rounding
        if (!accepted || flat >= 3) {
            rep.stalled = true;
            break;
        }
    }
    rep.iterations = it;
    rep.grad_norm = gn;
    rep.converged = gn <= cfg.opt.tol;
    rep.E_next = E.value(X);
    rep.dist2 = quantile_distance2(X, Xhat);
    rep.step_slack = rep.E_prev - rep.E_next - rep.dist2 / (2.0 * tau);
    if (rep.stalled && gn > 1e-4)
        throw OptimizerStall("jko_step: line search exhausted away from stationarity", gn);
    if (report) *report = rep;
    return X;
}

// ---------------------------------------------------------------------------

double TestFunction::value(double x) const {
    const double z = x - center;
    return std::pow(x, power) * std::exp(-0.5 * z * z / (width * width));
}

double TestFunction::d1(double x) const {
    const double z = x - center, w2 = width * width;
    const double G = std::exp(-0.5 * z * z / w2);
    const double G1 = -z / w2 * G;
    double v = std::pow(x, power) * G1;
    if (power >= 1) v += power * std::pow(x, power - 1) * G;
    return v;
}

double TestFunction::d2(double x) const {
    const double z = x - center, w2 = width * width;
    const double G = std::exp(-0.5 * z * z / w2);
    const double G1 = -z / w2 * G;
    const double G2 = (z * z / (w2 * w2) - 1.0 / w2) * G;
    double v = std::pow(x, power) * G2;
    if (power >= 1) v += 2.0 * power * std::pow(x, power - 1) * G1;
    if (power >= 2) v += power * (power - 1) * std::pow(x, power - 2) * G;
    return v;
}

double TestFunction::c2_norm() const {
    const double lo = center - 12.0 * width - 2.0, hi = center + 12.0 * width + 2.0;
    const int N = 40000;
    double s = 0.0;
    for (int k = 0; k <= N; ++k) {
        const double x = lo + (hi - lo) * k / N;
        s = std::max({s, std::abs(value(x)), std::abs(d1(x)), std::abs(d2(x))});
    }
    return s;
}

std::vector<TestFunction> default_test_functions(double R) {
    std::vector<TestFunction> out;
    for (double w : {0.5 * R, R})
        for (int p = 0; p <= 2; ++p) out.push_back(TestFunction{0.0, w, p});
    return out;
}

WeakResidual weak_residual(const QuantilePair& prev, const QuantilePair& next, const ModelSpec& m,
                           double tau, const Grid1D& g, const TestFunction& zeta) {
    require_monotone(prev);
    require_monotone(next);
    const JkoEnergy E(m, g);
    const QuantilePair G = E.gradient(next);
    const std::size_t M = next.X1.size();
    const double dm = 1.0 / static_cast<double>(M);
    WeakResidual r;
    for (int j = 1; j <= 2; ++j) {
        double dt_term = 0.0, flux = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
            dt_term += dm * (zeta.value(next.X(j)[k]) - zeta.value(prev.X(j)[k]));
            flux += G.X(j)[k] * zeta.d1(next.X(j)[k]);
        }
        (j == 1 ? r.R1 : r.R2) = std::abs(dt_term / tau + flux);
    }
    r.zeta_norm = zeta.c2_norm();
    r.energy_drop = E.value(prev) - E.value(next);
    r.bound = r.energy_drop * r.zeta_norm;
    return r;
}

WeakResidual weak_residual(const DensityPair& prev, const DensityPair& next, const ModelSpec& m,
                           double tau, const std::function<double(double)>& zeta,
                           const std::function<double(double)>& dzeta, double zeta_norm) {
    if (!(prev.grid == next.grid)) throw ConfigError("weak_residual: grids differ");
    const Grid1D& g = next.grid;
    const double dx = g.dx();
    const Potentials phi = potentials(next, m, Convolver(m.K, g));
    WeakResidual r;
    for (int j = 1; j <= 2; ++j) {
        const Field& rp = prev.rho(j);
        const Field& rn = next.rho(j);
        const Field& P = j == 1 ? phi.phi1 : phi.phi2;
        double dt_term = 0.0, flux = 0.0;
        for (int i = 0; i < g.n; ++i) dt_term += (rn[i] - rp[i]) * zeta(g.x(i)) * dx;
        for (int i = 0; i + 1 < g.n; ++i) {
            const double face = 0.5 * (rn[i] + rn[i + 1]);
            if (face == 0.0) continue;
            // the potential jump across the support edge carries no mass
            if (rn[i] == 0.0 || rn[i + 1] == 0.0) continue;
            flux += face * (P[i + 1] - P[i]) / dx * dzeta(g.x(i) + 0.5 * dx) * dx;
        }
        (j == 1 ? r.R1 : r.R2) = std::abs(dt_term / tau + flux);
    }
    r.zeta_norm = zeta_norm;
    r.energy_drop = energy(prev, m) - energy(next, m);
    r.bound = r.energy_drop * zeta_norm;
    return r;
}

// ---------------------------------------------------------------------------

namespace {

// sum over neighbouring gaps of (u_{k+1} - u_k)^2 / (c_{k+1} - c_k), with u
// evaluated on gap densities and c the gap midpoints.
template <class U>
double dirichlet_lagrangian(const Field& X, U u) {
    const std::size_t gaps = X.size() - 1;
    const double dm = 1.0 / static_cast<double>(X.size());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < gaps; ++k) {
        const double r0 = dm / (X[k + 1] - X[k]), r1 = dm / (X[k + 2] - X[k + 1]);
        const double c0 = 0.5 * (X[k] + X[k + 1]), c1 = 0.5 * (X[k + 1] + X[k + 2]);
        const double du = u(r1) - u(r0);
        s += du * du / (c1 - c0);
    }
    return s;
}

}  // namespace

H1Report h1_diagnostics(const QuantilePair& prev, const QuantilePair& next, const ModelSpec& m,
                        double tau, double alpha, const Grid1D& g) {
    require_monotone(prev);
    require_monotone(next);
    if (!(alpha > 0.0)) throw ConfigError("h1_diagnostics: alpha must be positive");
    H1Report r;
    r.alpha = alpha;
    r.A = std::max(m.F1.d2(alpha), m.F2.d2(alpha));
    for (int j = 1; j <= 2; ++j) {
        const auto& F = m.F(j);
        r.grad_cut += dirichlet_lagrangian(next.X(j), [&](double rho) { return F.d1(std::min(rho, alpha)); });
        r.grad_full += dirichlet_lagrangian(next.X(j), [&](double rho) { return F.d1(rho); });
    }
    const double dH = lagrangian_entropy(prev.X1) + lagrangian_entropy(prev.X2) -
                      lagrangian_entropy(next.X1) - lagrangian_entropy(next.X2);
    const double CK = m.K.bound_second();
    r.lhs = r.grad_cut / (2.0 * r.A);
    r.rhs = dH / tau + 2.0 * 1.0 * CK;
    r.ratio = r.lhs / r.rhs;

    const JkoEnergy E(m, g);
    const double E_prev = E.value(prev), E_next = E.value(next);
    const auto& k = m.kappa;
    const double k1 = std::max(k[0][0], k[0][1]), k2 = std::max(k[1][0], k[1][1]);
    const double kappa2 = k1 * k1 + k2 * k2;
    r.B = 12.0 / (1.0 - 3.0 * kappa2 * m.eps * m.eps);
    r.C = std::max(r.B / alpha, 2.0 * r.A);
    r.full_bound = r.C * ((E_prev - E_next) / tau + 2.0 * CK * CK / m.K.lambda() * E_prev + dH / tau +
                          2.0 * CK);
    r.full_ratio = r.grad_full / r.full_bound;
    return r;
}

// ---------------------------------------------------------------------------

JkoRunResult jko_run(const DensityPair& init, const ModelSpec& m, const JkoConfig& cfg, int nsteps,
                     const SteadyState& steady, int record_every) {
    if (cfg.m < 32) throw ConfigError("jko_run: need at least 32 quantiles");
    if (nsteps < 0) throw ConfigError("jko_run: nsteps must be nonnegative");
    const Grid1D& g = init.grid;
    const JkoEnergy E(m, g);
    JkoRunResult res;
    QuantilePair X = to_quantiles(init, cfg.m);
    res.iterates.push_back(X);
    res.energies.push_back(E.value(X));
    res.trace.record(0.0, from_quantiles(X, g), m, steady, cfg.m);
    for (int k = 1; k <= nsteps; ++k) {
        JkoStepReport rep;
        X = jko_step(X, m, cfg, g, &rep);
        res.steps.push_back(rep);
        res.iterates.push_back(X);
        res.energies.push_back(rep.E_next);
        if (k % std::max(1, record_every) == 0 || k == nsteps)
            res.trace.record(k * cfg.tau, from_quantiles(X, g), m, steady, cfg.m);
    }

    res.energy_monotone = true;
    for (std::size_t k = 1; k < res.energies.size(); ++k)
        if (res.energies[k] > res.energies[k - 1] + 1e-12) res.energy_monotone = false;

    const double E0 = res.energies.front();
    double slack = kInf;
    for (std::size_t a = 0; a < res.iterates.size(); ++a)
        for (std::size_t b = a + 1; b < res.iterates.size(); ++b) {
            const double d2 = quantile_distance2(res.iterates[a], res.iterates[b]);
            const double rhs = 2.0 * E0 * (static_cast<double>(b - a) * cfg.tau + cfg.tau);
            slack = std::min(slack, rhs - d2);
        }
    res.quasi_continuity_slack = res.iterates.size() > 1 ? slack : 0.0;
    res.quasi_continuity = res.quasi_continuity_slack >= 0.0;
    return res;
}

}  // namespace xdiff
