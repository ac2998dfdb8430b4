#pragma once

// Minimizing-movement (JKO) scheme in Lagrangian coordinates: each species is
// an array of m quantile positions carrying mass 1/m, so that the Wasserstein
// term of the penalized functional is an exact quadratic.

#include <functional>
#include <vector>

#include "xdiff/errors.hpp"
#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"
#include "xdiff/steady.hpp"
#include "xdiff/trace.hpp"

namespace xdiff {

struct JkoOptimizerOptions {
    int max_iters = 400;
    double step_size = 1.0;
    double backtrack = 0.5;
    int max_backtracks = 50;
    /// Stop when sqrt(sum_k g_k^2 / dm) <= tol (an L^2(rho) velocity norm).
    double tol = 1e-8;
};

struct JkoConfig {
    double tau = 1e-3;
    int m = 256;
    JkoOptimizerOptions opt{};
};

/// Parts of the Lagrangian energy of a quantile pair.
struct LagrangianEnergy {
    double internal = 0.0;
    double coupling = 0.0;  // int h of the rasterized pair, without eps
    double interaction = 0.0;
    double total(double eps) const { return internal + eps * coupling + interaction; }
};

/// Raised by jko_step when backtracking cannot decrease the objective far
/// from stationarity.
class OptimizerStall : public NumericError {
public:
    using NumericError::NumericError;
};

/// E_eps(rho(X)) and its gradient in X; +infinity for collapsed gaps or a
/// support that leaves the grid.
class JkoEnergy {
public:
    JkoEnergy(const ModelSpec& m, const Grid1D& g) : m_(m), g_(g) {}

    LagrangianEnergy parts(const QuantilePair& X) const;
    double value(const QuantilePair& X) const;
    /// dE/dX; interaction and internal parts analytic, coupling part by
    /// central differences with step 1e-6 dx.
    QuantilePair gradient(const QuantilePair& X) const;
    /// Diagonal and off-diagonal of a tridiagonal approximation of the
    /// Hessian of species j (internal part plus the interaction diagonal).
    void hessian_tridiag(const QuantilePair& X, int j, Field& diag, Field& off) const;

    const ModelSpec& model() const { return m_; }
    const Grid1D& grid() const { return g_; }

private:
    double coupling(const QuantilePair& X) const;
    ModelSpec m_;
    Grid1D g_;
};

double lagrangian_energy(const QuantilePair& X, const ModelSpec& m, const Grid1D& g);

/// Lagrangian entropy sum_k w_k dm log rho_k of one species.
double lagrangian_entropy(const Field& X);

/// d(X, Xhat)^2 = sum_j sum_k (X_j[k] - Xhat_j[k])^2 / m.
double quantile_distance2(const QuantilePair& X, const QuantilePair& Xhat);

double jko_objective(const QuantilePair& X, const QuantilePair& Xhat, const ModelSpec& m,
                     double tau, const Grid1D& g);

/// Euclidean projection onto nondecreasing sequences (pool adjacent violators).
Field isotonic_projection(const Field& y);

struct JkoStepReport {
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    bool stalled = false;
    double E_prev = 0.0, E_next = 0.0;
    double dist2 = 0.0;
    /// E_prev - E_next - dist2 / (2 tau); >= 0 when the step inequality holds.
    double step_slack = 0.0;
};

QuantilePair jko_step(const QuantilePair& Xhat, const ModelSpec& m, const JkoConfig& cfg,
                      const Grid1D& g, JkoStepReport* report = nullptr);

// ---------------------------------------------------------------------------

/// zeta(x) = x^p exp(-(x - c)^2 / (2 w^2)).
struct TestFunction {
    double center = 0.0;
    double width = 1.0;
    int power = 0;

    double value(double x) const;
    double d1(double x) const;
    double d2(double x) const;
    /// max(sup|zeta|, sup|zeta'|, sup|zeta''|), sampled densely.
    double c2_norm() const;
};

/// Gaussians times {1, x, x^2} at two widths.
std::vector<TestFunction> default_test_functions(double support_radius);

struct WeakResidual {
    double R1 = 0.0, R2 = 0.0;
    double bound = 0.0;
    double zeta_norm = 0.0;
    double energy_drop = 0.0;
};

/// Lagrangian form: int rho zeta = sum dm zeta(X_k) and int rho grad Phi . grad zeta
/// = sum_k dE/dX_k zeta'(X_k).
WeakResidual weak_residual(const QuantilePair& prev, const QuantilePair& next, const ModelSpec& m,
                           double tau, const Grid1D& g, const TestFunction& zeta);

/// Eulerian form with face differences of the composite potentials.
WeakResidual weak_residual(const DensityPair& prev, const DensityPair& next, const ModelSpec& m,
                           double tau, const std::function<double(double)>& zeta,
                           const std::function<double(double)>& dzeta, double zeta_norm);

struct H1Report {
    double alpha = 0.0;
    double A = 0.0;
    double grad_cut = 0.0;  // sum_j int |grad F_j'([rho_j]_alpha)|^2
    double lhs = 0.0;       // grad_cut / (2 A)
    double rhs = 0.0;       // (H(prev) - H(next)) / tau + 2 d C_K
    double ratio = 0.0;     // lhs / rhs
    double grad_full = 0.0; // sum_j int |grad F_j'(rho_j)|^2
    double C = 0.0, B = 0.0;
    double full_bound = 0.0;
    double full_ratio = 0.0;
};

H1Report h1_diagnostics(const QuantilePair& prev, const QuantilePair& next, const ModelSpec& m,
                        double tau, double alpha, const Grid1D& g);

struct JkoRunResult {
    FlowTrace trace;
    std::vector<QuantilePair> iterates;
    std::vector<double> energies;  // Lagrangian E_eps per iterate
    std::vector<JkoStepReport> steps;
    /// min over index pairs of 2 E(rho^0)(|s - t| + tau) - d^2.
    double quasi_continuity_slack = 0.0;
    bool quasi_continuity = false;
    bool energy_monotone = false;
};

JkoRunResult jko_run(const DensityPair& init, const ModelSpec& m, const JkoConfig& cfg, int nsteps,
                     const SteadyState& steady, int record_every = 1);

}  // namespace xdiff
