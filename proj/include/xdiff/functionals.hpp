#pragma once

// Energy-type functionals on density pairs, all by midpoint quadrature.

#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"
#include "xdiff/steady.hpp"

namespace xdiff {

struct EnergyParts {
    double internal = 0.0;     // int F1(rho1) + F2(rho2)
    double coupling = 0.0;     // int h(rho1, rho2), without the eps factor
    double interaction = 0.0;  // int rho1 K * rho2
    double total(double eps) const { return internal + eps * coupling + interaction; }
};

EnergyParts energy_parts(const DensityPair& p, const ModelSpec& m);
EnergyParts energy_parts(const DensityPair& p, const ModelSpec& m, const Field& K_rho2);

/// E_eps.
double energy(const DensityPair& p, const ModelSpec& m);

/// int h(rho1, rho2) dx.
double coupling_integral(const Field& rho1, const Field& rho2, const ModelSpec& m, const Grid1D& g);

/// L_eps = int F1 + F2 + rho1 K * rho2 + eps (rho1 V1 + rho2 V2).
double lyapunov_L(const DensityPair& p, const ModelSpec& m, const SteadyState& s);

/// N_eps = int h - (rho1 V1 + rho2 V2).
double lyapunov_N(const DensityPair& p, const ModelSpec& m, const SteadyState& s);

/// H_c = int rho1 log rho1 + rho2 log rho2, with 0 log 0 = 0.
double entropy(const DensityPair& p);

double l1_norm_diff(const Field& a, const Field& b, const Grid1D& g);

}  // namespace xdiff
