#include "xdiff/functionals.hpp"

#include <cmath>

#include "xdiff/errors.hpp"

namespace xdiff {

double coupling_integral(const Field& rho1, const Field& rho2, const ModelSpec& m, const Grid1D& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < rho1.size(); ++i)
        if (rho1[i] > 0.0 && rho2[i] > 0.0) s += m.h.eval(CouplingPart::h, rho1[i], rho2[i]);
    return s * g.dx();
}

EnergyParts energy_parts(const DensityPair& p, const ModelSpec& m, const Field& K_rho2) {
    const auto& g = p.grid;
    EnergyParts e;
    double fi = 0.0, in = 0.0;
    for (std::size_t i = 0; i < p.rho1.size(); ++i) {
        fi += m.F1.value(p.rho1[i]) + m.F2.value(p.rho2[i]);
        in += p.rho1[i] * K_rho2[i];
    }
    e.internal = fi * g.dx();
    e.interaction = in * g.dx();
    e.coupling = m.eps != 0.0 ? coupling_integral(p.rho1, p.rho2, m, g) : 0.0;
    return e;
}

EnergyParts energy_parts(const DensityPair& p, const ModelSpec& m) {
    return energy_parts(p, m, convolve(m.K, p.rho2, p.grid));
}

double energy(const DensityPair& p, const ModelSpec& m) { return energy_parts(p, m).total(m.eps); }

namespace {

double potential_term(const DensityPair& p, const SteadyState& s) {
    if (!(p.grid == s.pair.grid)) throw ConfigError("state and steady state live on different grids");
    double v = 0.0;
    for (std::size_t i = 0; i < p.rho1.size(); ++i) v += p.rho1[i] * s.V1[i] + p.rho2[i] * s.V2[i];
    return v * p.grid.dx();
}

}  // namespace

double lyapunov_L(const DensityPair& p, const ModelSpec& m, const SteadyState& s) {
    const auto e = energy_parts(p, m);
    return e.internal + e.interaction + m.eps * potential_term(p, s);
}

double lyapunov_N(const DensityPair& p, const ModelSpec& m, const SteadyState& s) {
    return coupling_integral(p.rho1, p.rho2, m, p.grid) - potential_term(p, s);
}

double entropy(const DensityPair& p) {
    double s = 0.0;
    for (const Field* f : {&p.rho1, &p.rho2})
        for (double r : *f)
            if (r > 0.0) s += r * std::log(r);
    return s * p.grid.dx();
}

double l1_norm_diff(const Field& a, const Field& b, const Grid1D& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s * g.dx();
}

}  // namespace xdiff
