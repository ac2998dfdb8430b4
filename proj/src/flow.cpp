#include "xdiff/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xdiff/functionals.hpp"

namespace xdiff {

Potentials potentials(const DensityPair& p, const ModelSpec& m, const Convolver& conv) {
    Potentials out;
    out.U1 = conv.apply(p.rho1);
    out.U2 = conv.apply(p.rho2);
    const auto n = p.rho1.size();
    out.phi1.resize(n);
    out.phi2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r1 = p.rho1[i], r2 = p.rho2[i];
        double c1 = 0.0, c2 = 0.0;
        if (m.eps != 0.0 && r1 > 0.0 && r2 > 0.0) {
            c1 = m.eps * m.h.first(1, r1, r2);
            c2 = m.eps * m.h.first(2, r1, r2);
        }
        out.phi1[i] = m.F1.d1(r1) + c1 + out.U2[i];
        out.phi2[i] = m.F2.d1(r2) + c2 + out.U1[i];
    }
    return out;
}

FaceVelocities velocity_fields(const Potentials& phi, const Grid1D& g) {
    const auto n = static_cast<std::size_t>(g.n);
    const double dx = g.dx();
    FaceVelocities v;
    v.v1.assign(n + 1, 0.0);
    v.v2.assign(n + 1, 0.0);
    for (std::size_t f = 1; f < n; ++f) {
        v.v1[f] = -(phi.phi1[f] - phi.phi1[f - 1]) / dx;
        v.v2[f] = -(phi.phi2[f] - phi.phi2[f - 1]) / dx;
    }
    return v;
}

FaceVelocities velocity_fields(const DensityPair& p, const ModelSpec& m) {
    return velocity_fields(potentials(p, m, Convolver(m.K, p.grid)), p.grid);
}

namespace {

double upwind(const Field& rho, const Field& v, std::size_t f) {
    return v[f] > 0.0 ? rho[f - 1] : rho[f];
}

}  // namespace

double cfl_dt(const DensityPair& p, const FaceVelocities& v, double cfl_safety, double dt_max) {
    if (!(cfl_safety > 0.0)) throw ConfigError("cfl_dt: cfl_safety must be positive");
    double vmax = 0.0;
    const std::size_t n = p.rho1.size();
    for (std::size_t f = 1; f < n; ++f) {
        if (upwind(p.rho1, v.v1, f) > 0.0) vmax = std::max(vmax, std::abs(v.v1[f]));
        if (upwind(p.rho2, v.v2, f) > 0.0) vmax = std::max(vmax, std::abs(v.v2[f]));
    }
    if (vmax == 0.0) return dt_max;
    return std::min(dt_max, cfl_safety * p.grid.dx() / vmax);
}

double cfl_dt(const DensityPair& p, const ModelSpec& m, double cfl_safety, double dt_max) {
    return cfl_dt(p, velocity_fields(p, m), cfl_safety, dt_max);
}

double diffusive_dt(const DensityPair& p, const ModelSpec& m, double cfl_safety) {
    double D = 0.0;
    for (std::size_t i = 0; i < p.rho1.size(); ++i) {
        const double r1 = p.rho1[i], r2 = p.rho2[i];
        double d1 = r1 * m.F1.d2(r1), d2 = r2 * m.F2.d2(r2);
        if (m.eps != 0.0 && r1 > 0.0 && r2 > 0.0) {
            const double h11 = std::abs(m.h.second(1, 1, r1, r2));
            const double h12 = std::abs(m.h.second(1, 2, r1, r2));
            const double h22 = std::abs(m.h.second(2, 2, r1, r2));
            d1 += m.eps * r1 * (h11 + h12);
            d2 += m.eps * r2 * (h22 + h12);
        }
        D = std::max({D, d1, d2});
    }
    if (D == 0.0) return std::numeric_limits<double>::infinity();
    const double dx = p.grid.dx();
    return cfl_safety * dx * dx / (2.0 * D);
}

DensityPair fv_step(const DensityPair& p, const FaceVelocities& v, double dt) {
    const std::size_t n = p.rho1.size();
    const double c = dt / p.grid.dx();
    DensityPair out = p;
    for (int j = 1; j <= 2; ++j) {
        const Field& rho = p.rho(j);
        const Field& vel = v.v(j);
        Field& nxt = out.rho(j);
        Field flux(n + 1, 0.0);
        for (std::size_t f = 1; f < n; ++f) flux[f] = upwind(rho, vel, f) * vel[f];
        for (std::size_t i = 0; i < n; ++i) {
            const double r = rho[i] - c * (flux[i + 1] - flux[i]);
            if (!std::isfinite(r)) throw NumericError("fv_step: non-finite density", r);
            if (r < 0.0) {
                // rounding of an exactly emptied cell
                if (r >= -1e-14 * (rho[i] + c * (std::abs(flux[i]) + std::abs(flux[i + 1])))) {
                    nxt[i] = 0.0;
                    continue;
                }
                throw DomainError("fv_step: negative density, CFL condition violated");
            }
            nxt[i] = r;
        }
    }
    return out;
}

DensityPair fv_step(const DensityPair& p, const ModelSpec& m, double dt) {
    return fv_step(p, velocity_fields(p, m), dt);
}

FlowResult run_flow(const DensityPair& init, const ModelSpec& m, const SteadyState& steady,
                    const FlowConfig& cfg) {
    if (!(cfg.T > 0.0)) throw ConfigError("run_flow: T must be positive");
    if (!(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 0.9))
        throw ConfigError("run_flow: cfl_safety must lie in (0, 0.9]");
    if (!(cfg.dt_max > 0.0)) throw ConfigError("run_flow: dt_max must be positive");
    if (!(init.grid == steady.pair.grid)) throw ConfigError("run_flow: grids differ");

    const Grid1D& g = init.grid;
    const Convolver conv(m.K, g);
    FlowResult res;
    FlowDiagnostics& dg = res.diag;
    dg.min_dt = std::numeric_limits<double>::infinity();
    dg.max_energy_increase = -std::numeric_limits<double>::infinity();

    DensityPair p = init;
    double t = 0.0;
    const double com0 = moments(p).combined_m1();
    res.trace.record(0.0, p, m, steady, cfg.quantiles);
    if (cfg.keep_snapshots) res.snapshots.push_back(p);

    double next_record = cfg.record_dt > 0.0 ? cfg.record_dt : std::numeric_limits<double>::infinity();
    double E_prev = std::numeric_limits<double>::quiet_NaN();
    long since_record = 0;

    while (t < cfg.T * (1.0 - 1e-14)) {
        const Potentials phi = potentials(p, m, conv);
        const double E_now = energy_parts(p, m, phi.U2).total(m.eps);
        if (std::isfinite(E_prev)) dg.max_energy_increase = std::max(dg.max_energy_increase, E_now - E_prev);
        if (!std::isfinite(E_now)) throw FlowAbort("run_flow: non-finite energy", t, p);
        E_prev = E_now;

        const FaceVelocities v = velocity_fields(phi, g);
        double dt = std::min(cfl_dt(p, v, cfg.cfl_safety, cfg.dt_max), diffusive_dt(p, m, cfg.cfl_safety));
        bool hit_record = false;
        if (t + dt >= next_record) {
            dt = next_record - t;
            hit_record = true;
        }
        if (t + dt >= cfg.T) {
            dt = cfg.T - t;
            hit_record = true;
        }

        DensityPair nxt;
        try {
            nxt = fv_step(p, v, dt);
        } catch (const Error& e) {
            throw FlowAbort(std::string("run_flow: ") + e.what(), t, p);
        }
        for (int j = 1; j <= 2; ++j)
            dg.max_mass_drift_step =
                std::max(dg.max_mass_drift_step, std::abs(mass(nxt.rho(j), g) - mass(p.rho(j), g)));
        p = std::move(nxt);
        t = (hit_record && t + dt >= cfg.T) ? cfg.T : t + dt;
        ++dg.steps;
        ++since_record;
        dg.min_dt = std::min(dg.min_dt, dt);
        dg.max_dt = std::max(dg.max_dt, dt);
        dg.max_com_drift = std::max(dg.max_com_drift, std::abs(moments(p).combined_m1() - com0));

        const bool by_steps = cfg.record_dt <= 0.0 && since_record >= cfg.snapshot_every;
        if (hit_record || by_steps) {
            if (cfg.record_dt > 0.0 && t >= next_record * (1.0 - 1e-12)) next_record += cfg.record_dt;
            if (!(res.trace.times.back() == t)) {
                res.trace.record(t, p, m, steady, cfg.quantiles);
                if (cfg.keep_snapshots) res.snapshots.push_back(p);
            }
            since_record = 0;
        }
    }
    const double E_end = energy(p, m);
    if (std::isfinite(E_prev)) dg.max_energy_increase = std::max(dg.max_energy_increase, E_end - E_prev);
    if (dg.steps == 0) dg.max_energy_increase = 0.0;
    if (res.trace.times.back() != t) res.trace.record(t, p, m, steady, cfg.quantiles);
    res.final_state = std::move(p);
    return res;
}

}  // namespace xdiff
