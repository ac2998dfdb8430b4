#pragma once

// Stationary Euler-Lagrange system
//   F_j'(rho_j) + eps d_j h(rho) = (C_j - K * rho_j')_+ ,
// solved cell by cell through the inverse of Gamma_eps with the constants C_j
// fixed by the unit-mass constraints.

#include <limits>

#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"

namespace xdiff {

struct SteadyState {
    DensityPair pair;
    double C1 = 0.0, C2 = 0.0;
    /// Constants of the reduced quadratic-kernel problem; NaN for the general solver.
    double Ct1 = std::numeric_limits<double>::quiet_NaN();
    double Ct2 = std::numeric_limits<double>::quiet_NaN();
    double support1 = 0.0, support2 = 0.0;
    double residual = 0.0;
    Field V1, V2;
    double K0_estimate = 0.0;
    int iterations = 0;
    /// Last successive L1 change of the outer iteration (general solver).
    double last_change = 0.0;

    double C(int j) const { return j == 1 ? C1 : C2; }
    const Field& V(int j) const { return j == 1 ? V1 : V2; }
};

struct SteadyOptions {
    double tol = 1e-10;
    double damping = 0.5;
    int max_outer = 500;
};

/// Density threshold separating support from vacuum in residual evaluations.
inline constexpr double kSupportThreshold = 1e-12;

SteadyState solve_steady_quadratic(const ModelSpec& m, const Grid1D& g, double tol = 1e-10);

/// Damped fixed point on U_j = K * rho_j. `init` (optional) seeds the
/// potentials; by default the eps = 0 quadratic profile is used.
SteadyState solve_steady_general(const ModelSpec& m, const Grid1D& g,
                                 const SteadyOptions& opt = {},
                                 const DensityPair* init = nullptr);

struct ElResidual {
    double r1 = 0.0, r2 = 0.0;
    double max() const { return r1 > r2 ? r1 : r2; }
};

ElResidual el_residual(const SteadyState& s, const ModelSpec& m);

/// Fills V_j, K0, support radii and the residual of a state whose pair and
/// constants are already set.
void finalize_steady(SteadyState& s, const ModelSpec& m);

/// lambda - eps K0.
double lambda_eps(const ModelSpec& m, const SteadyState& s);

/// Stores lambda_eps into the model.
void attach_steady(ModelSpec& m, const SteadyState& s);

/// int_{rho_j > 0} 1 / F_j''(rho_j) dx.
double inverse_curvature_integral(const SteadyState& s, const ModelSpec& m, int j);

/// Support radius of the eps = 0 profile for the convexity modulus of K.
double barenblatt_radius(const PowerNonlinearity& F, double lambda);

/// Default domain half-width: four times the largest support radius estimate.
double default_half_width(const ModelSpec& m);

}  // namespace xdiff
