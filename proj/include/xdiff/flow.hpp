#pragma once

// First-order upwind finite volumes with explicit Euler for
//   d_t rho_j = d_x (rho_j d_x Phi_j),  Phi_j = F_j'(rho_j) + eps d_j h(rho) + K * rho_j'.

#include <vector>

#include "xdiff/errors.hpp"
#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"
#include "xdiff/steady.hpp"
#include "xdiff/trace.hpp"

namespace xdiff {

struct FlowConfig {
    double T = 1.0;
    double cfl_safety = 0.4;
    /// Record every this many steps when record_dt <= 0.
    int snapshot_every = 100;
    /// Record at multiples of record_dt; time steps are clipped to land on them.
    double record_dt = 0.0;
    double dt_max = 1e-2;
    /// Quantile count for the W2 column of the trace.
    int quantiles = 256;
    bool keep_snapshots = false;
};

/// Face velocities; entry f sits between cells f - 1 and f, so v[0] and v[n]
/// are the no-flux boundary faces.
struct FaceVelocities {
    Field v1, v2;
    const Field& v(int j) const { return j == 1 ? v1 : v2; }
};

/// Composite potentials Phi_j at cell centres.
struct Potentials {
    Field phi1, phi2;
    Field U1, U2;  // K * rho_1, K * rho_2
};

Potentials potentials(const DensityPair& p, const ModelSpec& m, const Convolver& conv);
FaceVelocities velocity_fields(const DensityPair& p, const ModelSpec& m);
FaceVelocities velocity_fields(const Potentials& phi, const Grid1D& g);

/// cfl_safety dx / max|v| over faces that carry flux (upwind density > 0),
/// capped at dt_max.
double cfl_dt(const DensityPair& p, const FaceVelocities& v, double cfl_safety, double dt_max);
double cfl_dt(const DensityPair& p, const ModelSpec& m, double cfl_safety, double dt_max);

/// Explicit limit cfl_safety dx^2 / (2 max D) for the degenerate diffusion,
/// D = rho_j (F_j'' + eps (|d_jj h| + |d_ij h|)).
double diffusive_dt(const DensityPair& p, const ModelSpec& m, double cfl_safety);

DensityPair fv_step(const DensityPair& p, const FaceVelocities& v, double dt);
DensityPair fv_step(const DensityPair& p, const ModelSpec& m, double dt);

/// Raised when a step produces a negative or non-finite density. Carries the
/// last valid state.
class FlowAbort : public NumericError {
public:
    FlowAbort(const std::string& what, double t, DensityPair last)
        : NumericError(what, t), time(t), state(std::move(last)) {}
    double time;
    DensityPair state;
};

struct FlowDiagnostics {
    long steps = 0;
    double min_dt = 0.0, max_dt = 0.0;
    double max_mass_drift_step = 0.0;  // per component and step
    double max_com_drift = 0.0;        // |m1_comb(t) - m1_comb(0)|
    double max_energy_increase = 0.0;  // max_k E_{k+1} - E_k (<= 0 if monotone)
};

struct FlowResult {
    FlowTrace trace;
    FlowDiagnostics diag;
    DensityPair final_state;
    std::vector<DensityPair> snapshots;
};

FlowResult run_flow(const DensityPair& init, const ModelSpec& m, const SteadyState& steady,
                    const FlowConfig& cfg);

}  // namespace xdiff
