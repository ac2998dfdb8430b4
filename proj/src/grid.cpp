#include "xdiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "xdiff/errors.hpp"

namespace xdiff {

Grid1D::Grid1D(double half_width, int cells) : L(half_width), n(cells) {
    if (!(L > 0.0) || !std::isfinite(L)) throw ConfigError("grid: L must be positive");
    if (n < 8) throw ConfigError("grid: need at least 8 cells");
}

Field Grid1D::centers() const {
    Field x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = this->x(i);
    return x;
}

DensityPair::DensityPair(Grid1D g, Field r1, Field r2)
    : grid(g), rho1(std::move(r1)), rho2(std::move(r2)) {
    const auto n = static_cast<std::size_t>(grid.n);
    if (rho1.size() != n || rho2.size() != n)
        throw ConfigError("density pair: field size does not match the grid");
    for (const Field* f : {&rho1, &rho2})
        for (double v : *f)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw DomainError("density pair: densities must be finite and nonnegative");
}

double integrate(const Field& f, const Grid1D& g) {
    double s = 0.0;
    for (double v : f) s += v;
    return s * g.dx();
}

double mass(const Field& rho, const Grid1D& g) { return integrate(rho, g); }

double first_moment(const Field& rho, const Grid1D& g) {
    double s = 0.0;
    for (int i = 0; i < g.n; ++i) s += g.x(i) * rho[static_cast<std::size_t>(i)];
    return s * g.dx();
}

double second_moment(const Field& rho, const Grid1D& g) {
    double s = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const double x = g.x(i);
        s += x * x * rho[static_cast<std::size_t>(i)];
    }
    return s * g.dx();
}

Moments moments(const DensityPair& p) {
    const auto& g = p.grid;
    return {mass(p.rho1, g),         mass(p.rho2, g),         first_moment(p.rho1, g),
            first_moment(p.rho2, g), second_moment(p.rho1, g), second_moment(p.rho2, g)};
}

Field shift_density(const Field& rho, const Grid1D& g, double v) {
    if (std::abs(v) > 0.5 * g.L)
        throw DomainError("shift of " + std::to_string(v) + " exceeds half the domain");
    const double m0 = mass(rho, g);
    if (v == 0.0) return rho;
    const double dx = g.dx();
    const int n = g.n;
    auto at = [&](int k) { return k < 0 || k >= n ? 0.0 : rho[static_cast<std::size_t>(k)]; };
    Field out(rho.size());
    for (int i = 0; i < n; ++i) {
        // value at x_i - v, linear between cell centres
        const double s = (g.x(i) - v + g.L) / dx - 0.5;
        const double fl = std::floor(s);
        const int k = static_cast<int>(fl);
        const double f = s - fl;
        out[static_cast<std::size_t>(i)] = (1.0 - f) * at(k) + f * at(k + 1);
    }
    const double m1 = mass(out, g);
    if (m1 > 0.0)
        for (double& r : out) r *= m0 / m1;
    return out;
}

DensityPair recenter(const DensityPair& p) {
    const auto& g = p.grid;
    const double v = -0.5 * (first_moment(p.rho1, g) + first_moment(p.rho2, g));
    DensityPair out = p;
    out.rho1 = shift_density(p.rho1, g, v);
    out.rho2 = shift_density(p.rho2, g, v);
    return out;
}

// ---------------------------------------------------------------------------

Convolver::Convolver(const Kernel& K, const Grid1D& g) : K_(K), grid_(g) {
    samples_.resize(static_cast<std::size_t>(g.n));
    for (int d = 0; d < g.n; ++d) samples_[static_cast<std::size_t>(d)] = K.value(d * g.dx());
}

Field Convolver::apply(const Field& rho) const {
    const int n = grid_.n;
    const double dx = grid_.dx();
    Field out(static_cast<std::size_t>(n), 0.0);
    if (K_.type() == Kernel::Type::quadratic) {
        double M0 = 0, M1 = 0, M2 = 0;
        for (int k = 0; k < n; ++k) {
            const double x = grid_.x(k), r = rho[static_cast<std::size_t>(k)];
            M0 += r;
            M1 += x * r;
            M2 += x * x * r;
        }
        const double lam = K_.lambda();
        for (int i = 0; i < n; ++i) {
            const double x = grid_.x(i);
            out[static_cast<std::size_t>(i)] = 0.5 * lam * (x * x * M0 - 2.0 * x * M1 + M2) * dx;
        }
        return out;
    }
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < n; ++k)
            s += samples_[static_cast<std::size_t>(std::abs(i - k))] * rho[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i)] = s * dx;
    }
    return out;
}

Field convolve(const Kernel& K, const Field& rho, const Grid1D& g) {
    return Convolver(K, g).apply(rho);
}

double interaction_energy(const Kernel& K, const Field& rho1, const Field& rho2, const Grid1D& g) {
    const Field c = convolve(K, rho2, g);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += rho1[i] * c[i];
    return s * g.dx();
}

// ---------------------------------------------------------------------------

Field to_quantiles(const Field& rho, const Grid1D& g, int m) {
    if (m < 1) throw ConfigError("to_quantiles: need m >= 1");
    const double dx = g.dx();
    Field cdf(rho.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        acc += rho[i] * dx;
        cdf[i] = acc;
    }
    if (!(acc > 0.0)) throw DomainError("to_quantiles: density has zero mass");
    Field X(static_cast<std::size_t>(m));
    std::size_t i = 0;
    for (int k = 0; k < m; ++k) {
        const double t = (k + 0.5) / m * acc;
        while (i + 1 < cdf.size() && cdf[i] < t) ++i;
        const double below = i == 0 ? 0.0 : cdf[i - 1];
        const double left = -g.L + static_cast<double>(i) * dx;
        const double cell = rho[i] * dx;
        const double frac = cell > 0.0 ? std::clamp((t - below) / cell, 0.0, 1.0) : 0.0;
        X[static_cast<std::size_t>(k)] = left + frac * dx;
    }
    return X;
}

namespace {

// Adds `mass` spread uniformly over [a, b] to the cell averages of `out`.
void deposit(Field& out, const Grid1D& g, double a, double b, double mass) {
    const double dx = g.dx();
    if (a < -g.L - 1e-12 * g.L || b > g.L + 1e-12 * g.L)
        throw DomainError("from_quantiles: support leaves the computational domain");
    const int n = g.n;
    auto cell_of = [&](double x) {
        return std::clamp(static_cast<int>(std::floor((x + g.L) / dx)), 0, n - 1);
    };
    if (!(b - a > 1e-14 * dx)) {
        out[static_cast<std::size_t>(cell_of(0.5 * (a + b)))] += mass / dx;
        return;
    }
    const double dens = mass / (b - a);
    const int i0 = cell_of(a), i1 = cell_of(b);
    for (int i = i0; i <= i1; ++i) {
        const double lo = std::max(a, -g.L + i * dx);
        const double hi = std::min(b, -g.L + (i + 1) * dx);
        if (hi > lo) out[static_cast<std::size_t>(i)] += dens * (hi - lo) / dx;
    }
}

}  // namespace

Field from_quantiles(const Field& X, const Grid1D& g) {
    const std::size_t m = X.size();
    if (m < 2) throw ConfigError("from_quantiles: need at least two quantiles");
    for (std::size_t k = 0; k + 1 < m; ++k)
        if (X[k + 1] < X[k]) throw DomainError("from_quantiles: quantiles must be nondecreasing");
    const double dm = 1.0 / static_cast<double>(m);
    Field out(static_cast<std::size_t>(g.n), 0.0);
    const double g0 = X[1] - X[0], gl = X[m - 1] - X[m - 2];
    deposit(out, g, X[0] - 0.5 * g0, X[0], 0.5 * dm);
    for (std::size_t k = 0; k + 1 < m; ++k) deposit(out, g, X[k], X[k + 1], dm);
    deposit(out, g, X[m - 1], X[m - 1] + 0.5 * gl, 0.5 * dm);
    return out;
}

QuantilePair to_quantiles(const DensityPair& p, int m) {
    return {to_quantiles(p.rho1, p.grid, m), to_quantiles(p.rho2, p.grid, m)};
}

DensityPair from_quantiles(const QuantilePair& q, const Grid1D& g) {
    return DensityPair(g, from_quantiles(q.X1, g), from_quantiles(q.X2, g));
}

double w2_quantiles(const Field& X, const Field& Y) {
    if (X.size() != Y.size() || X.empty()) throw ConfigError("w2: quantile sizes differ");
    double s = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k) s += (X[k] - Y[k]) * (X[k] - Y[k]);
    return std::sqrt(s / static_cast<double>(X.size()));
}

double w2_distance(const Field& p, const Field& q, const Grid1D& g, int m) {
    return w2_quantiles(to_quantiles(p, g, m), to_quantiles(q, g, m));
}

double pair_distance(const QuantilePair& p, const QuantilePair& q) {
    const double a = w2_quantiles(p.X1, q.X1), b = w2_quantiles(p.X2, q.X2);
    return std::sqrt(a * a + b * b);
}

double pair_distance(const DensityPair& p, const DensityPair& q, int m) {
    return pair_distance(to_quantiles(p, m), to_quantiles(q, m));
}

void write_density_csv(std::ostream& os, const DensityPair& p, const std::string& meta) {
    os << "# L=" << p.grid.L << " n=" << p.grid.n << " dx=" << p.grid.dx();
    if (!meta.empty()) os << ' ' << meta;
    os << "\nx,rho1,rho2\n";
    os.precision(17);
    for (int i = 0; i < p.grid.n; ++i)
        os << p.grid.x(i) << ',' << p.rho1[static_cast<std::size_t>(i)] << ','
           << p.rho2[static_cast<std::size_t>(i)] << '\n';
}

void write_density_csv(const std::string& path, const DensityPair& p, const std::string& meta) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open " + path + " for writing");
    write_density_csv(f, p, meta);
}

}  // namespace xdiff
