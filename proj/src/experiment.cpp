#include "xdiff/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "xdiff/errors.hpp"
#include "xdiff/flow.hpp"
#include "xdiff/functionals.hpp"
#include "xdiff/jko.hpp"
#include "xdiff/lyapunov.hpp"
#include "xdiff/steady.hpp"

namespace fs = std::filesystem;

namespace xdiff {

const json& defaults_table() {
    static const json d = json::parse(R"({
      "experiment": "steady",
      "seed": 1,
      "output_dir": "out",
      "model": {
        "a1": 2.0, "a2": 2.0, "b1": 3.0, "b2": 3.0, "gamma": 4.0, "eps": 0.05,
        "kernel": {"type": "quadratic", "lambda": 1.0, "mu": 0.0}
      },
      "grid": {"L": "auto", "n": 512},
      "params": {
        "validate": {"audit": true},
        "steady": {"solver": "auto", "tol": 1e-10, "damping": 0.5, "max_outer": 500},
        "flow": {
          "T": 1.0, "cfl": 0.4, "dt_max": 0.01, "record_dt": 0.05, "quantiles": 256,
          "window": [1.0, 5.0],
          "init": {"type": "uniform", "rho1": [-0.3, 0.7], "rho2": [-0.7, 0.3]}
        },
        "jko": {
          "tau": 0.001, "m": 256, "steps": 100, "tol": 1e-8, "max_iters": 400,
          "record_every": 10, "alpha": 1.0,
          "init": {"type": "uniform", "rho1": [-0.3, 0.7], "rho2": [-0.7, 0.3]}
        },
        "decay-sweep": {
          "eps": [0.0, 0.02, 0.05, 0.1], "T": 5.0, "cfl": 0.4, "record_dt": 0.05,
          "window": [1.0, 5.0],
          "init": {"type": "uniform", "rho1": [-0.3, 0.7], "rho2": [-0.7, 0.3]}
        },
        "probes": {"samples": 200, "pairs": 100, "quantiles": 512, "baselines": null, "tolerance": 0.2}
      }
    })");
    return d;
}

namespace {

const char* type_name(const json& j) {
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

// Overlays `user` on `base`, rejecting unknown keys and type changes. Objects
// merge recursively except where `opaque` says the whole value is replaced.
json overlay(const json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(path + ": expected an object");
    json out = base;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = it.key();
        const std::string where = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown key '" + where + "'");
        const json& b = base[key];
        const json& u = it.value();
        if (key == "init" || key == "baselines" || (key == "L" && path == "grid")) {
            out[key] = u;
        } else if (b.is_object()) {
            out[key] = overlay(b, u, where);
        } else if (b.is_number() != u.is_number() || (!b.is_number() && b.type() != u.type())) {
            throw ConfigError(where + ": expected " + type_name(b) + ", got " + type_name(u));
        } else {
            out[key] = u;
        }
    }
    return out;
}

double num(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(std::string(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(std::string(key) + ": not finite");
    return x;
}

int integer(const json& j, const char* key) {
    const double x = num(j, key);
    if (x != std::floor(x)) throw ConfigError(std::string(key) + ": expected an integer");
    return static_cast<int>(x);
}

Kernel parse_kernel(const json& k) {
    const std::string t = k.at("type").get<std::string>();
    const double lam = num(k, "lambda"), mu = num(k, "mu");
    if (t == "quadratic") return Kernel::quadratic(lam);
    if (t == "regularized") return Kernel::regularized(lam, mu);
    throw ConfigError("kernel.type must be 'quadratic' or 'regularized'");
}

ModelSpec model_with_eps(const json& mj, double eps) {
    return ModelSpec::example(num(mj, "a1"), num(mj, "a2"), num(mj, "b1"), num(mj, "b2"), num(mj, "gamma"), eps,
                              parse_kernel(mj.at("kernel")));
}

std::pair<double, double> interval(const json& init, const char* key) {
    const json& a = init.at(key);
    if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("init.") + key + ": expected [a, b]");
    const double lo = a[0].get<double>(), hi = a[1].get<double>();
    if (!(hi > lo)) throw ConfigError(std::string("init.") + key + ": empty interval");
    return {lo, hi};
}

Field uniform_field(const Grid1D& g, double a, double b) {
    if (a < -g.L || b > g.L) throw ConfigError("init: interval leaves the domain");
    Field f(static_cast<std::size_t>(g.n), 0.0);
    const double dx = g.dx();
    for (int i = 0; i < g.n; ++i) {
        const double lo = std::max(a, -g.L + i * dx), hi = std::min(b, -g.L + (i + 1) * dx);
        if (hi > lo) f[static_cast<std::size_t>(i)] = (hi - lo) / dx / (b - a);
    }
    return f;
}

Field bump_sum(const Grid1D& g, std::mt19937_64& rng, double spread) {
    std::uniform_real_distribution<double> U(0, 1);
    Field f(static_cast<std::size_t>(g.n), 0.0);
    const int bumps = 1 + static_cast<int>(U(rng) * 3);
    for (int b = 0; b < bumps; ++b) {
        const double c = (U(rng) - 0.5) * spread * g.L;
        const double w = (0.15 + 0.35 * U(rng)) * spread * g.L;
        const double h = 0.3 + U(rng);
        for (int i = 0; i < g.n; ++i) {
            const double z = (g.x(i) - c) / w;
            if (std::abs(z) < 1) f[static_cast<std::size_t>(i)] += h * (1 - z * z) * (1 - z * z);
        }
    }
    const double M = mass(f, g);
    for (double& v : f) v /= M;
    return f;
}

std::string hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string eps_tag(double e) {
    std::ostringstream os;
    os << "eps_" << e;
    return os.str();
}

// Accumulates named pass/fail flags and the artifacts written.
struct Run {
    const RunConfig& cfg;
    fs::path dir;
    json results = json::object();
    json checks = json::object();
    json baselines = nullptr;
    json artifacts = json::array();
    bool quiet = true;

    void check(const std::string& name, bool ok) { checks[name] = ok; }
    std::string path(const std::string& rel) {
        artifacts.push_back(rel);
        const fs::path p = dir / rel;
        fs::create_directories(p.parent_path());
        return p.string();
    }
    void note(const std::string& s) const {
        if (!quiet) std::cerr << s << '\n';
    }
};

SteadyState solve_for(const ModelSpec& m, const Grid1D& g, const json& sp) {
    std::string solver = sp.at("solver").get<std::string>();
    if (solver == "auto") solver = m.K.type() == Kernel::Type::quadratic ? "quadratic" : "general";
    if (solver == "quadratic") {
        if (m.K.type() != Kernel::Type::quadratic) throw ConfigError("steady.solver 'quadratic' needs the quadratic kernel");
        return solve_steady_quadratic(m, g, num(sp, "tol"));
    }
    if (solver != "general") throw ConfigError("steady.solver must be auto, quadratic or general");
    SteadyOptions o;
    o.tol = num(sp, "tol");
    o.damping = num(sp, "damping");
    o.max_outer = integer(sp, "max_outer");
    return solve_steady_general(m, g, o);
}

double evenness(const Field& f) {
    double e = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) e = std::max(e, std::abs(f[i] - f[f.size() - 1 - i]));
    return e;
}

std::vector<std::pair<std::string, double>> fit_footer(const DecayFit& f) {
    return {{"rate_E", f.rate_E}, {"rate_L1", f.rate_L1}, {"r2_E", f.r2_E}, {"r2_L1", f.r2_L1}};
}

json fit_json(const DecayFit& f) {
    return {{"rate_E", f.rate_E}, {"rate_L1", f.rate_L1}, {"r2_E", f.r2_E}, {"r2_L1", f.r2_L1},
            {"points_E", f.points_E}, {"points_L1", f.points_L1}, {"t_end_E", f.t_end_E}};
}

// ---------------------------------------------------------------------------

void run_validate(Run& r) {
    const json& mj = r.cfg.normalized.at("model");
    const auto rep = validate_example_params(num(mj, "a1"), num(mj, "a2"), num(mj, "b1"), num(mj, "b2"),
                                             num(mj, "gamma"));
    json detail = json::array();
    for (const auto& c : rep.conditions)
        detail.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"slack", c.slack}, {"pass", c.pass}});
    auto group = [&](const std::string& name, std::vector<std::string> parts) {
        bool pass = true;
        double slack = INFINITY;
        for (const auto& p : parts) {
            const auto& c = rep.condition(p);
            pass = pass && c.pass;
            slack = std::min(slack, c.slack);
        }
        return json{{"name", name}, {"pass", pass}, {"slack", slack}};
    };
    json conditions = json::array({group("a_j >= 2", {"a1>=2", "a2>=2"}),
                                   group("b_j >= 2 a_j - 1", {"b1>=2a1-1", "b2>=2a2-1"}),
                                   group("b1 + b2 <= gamma + min(a1, a2)", {"b1+b2<=gamma+min(a1,a2)"})});
    r.results["conditions"] = conditions;
    r.results["condition_detail"] = detail;
    r.results["admissible"] = rep.valid;
    for (const auto& c : conditions) r.check("condition: " + c["name"].get<std::string>(), c["pass"].get<bool>());

    if (rep.valid && r.cfg.params.at("audit").get<bool>()) {
        ModelSpec m = r.cfg.model;
        calibrate_model(m);
        const auto a = hypothesis_numeric_audit(m);
        r.results["audit"] = {{"hessian_psd", a.hessian_psd},
                              {"hessian_min_eig_ratio", a.hessian_min_eig_ratio},
                              {"eps0_estimate", a.eps0_estimate},
                              {"mccann", a.mccann},
                              {"mccann_min", a.mccann_min},
                              {"sandwich", a.sandwich},
                              {"sandwich_lower_slack", a.sandwich_lower_slack},
                              {"sandwich_upper_slack", a.sandwich_upper_slack},
                              {"bregman_bound", a.bregman_bound},
                              {"beta_H", a.beta_H},
                              {"kappa", {{m.kappa[0][0], m.kappa[0][1]}, {m.kappa[1][0], m.kappa[1][1]}}}};
        r.check("audit: hessian psd", a.hessian_psd);
        r.check("audit: mccann", a.mccann);
        r.check("audit: sandwich", a.sandwich);
        r.check("audit: bregman bound", a.bregman_bound);
    }
}

void run_steady(Run& r) {
    ModelSpec m = r.cfg.model;
    calibrate_model(m);
    const Grid1D g(r.cfg.L, r.cfg.n);
    const SteadyState s = solve_for(m, g, r.cfg.params);
    const auto mo = moments(s.pair);
    r.results["C1"] = s.C1;
    r.results["C2"] = s.C2;
    r.results["C_tilde1"] = std::isnan(s.Ct1) ? json(nullptr) : json(s.Ct1);
    r.results["C_tilde2"] = std::isnan(s.Ct2) ? json(nullptr) : json(s.Ct2);
    r.results["support_radius1"] = s.support1;
    r.results["support_radius2"] = s.support2;
    r.results["residual"] = s.residual;
    r.results["iterations"] = s.iterations;
    r.results["K0"] = s.K0_estimate;
    r.results["lambda_eps"] = lambda_eps(m, s);
    r.results["mass1"] = mo.mass1;
    r.results["mass2"] = mo.mass2;
    r.results["second_moment1"] = second_moment(s.pair.rho1, g);
    r.results["second_moment2"] = second_moment(s.pair.rho2, g);
    r.results["energy"] = energy(s.pair, m);
    r.results["evenness"] = std::max(evenness(s.pair.rho1), evenness(s.pair.rho2));
    r.results["L"] = g.L;
    r.results["n"] = g.n;
    write_density_csv(r.path("steady.csv"), s.pair);
    r.check("euler-lagrange residual <= 1e-8", s.residual <= 1e-8);
    r.check("unit masses", std::abs(mo.mass1 - 1) <= 1e-10 && std::abs(mo.mass2 - 1) <= 1e-10);
    r.check("even profiles", r.results["evenness"].get<double>() <= 1e-8);
}

void run_flow_experiment(Run& r) {
    ModelSpec m = r.cfg.model;
    calibrate_model(m);
    const Grid1D g(r.cfg.L, r.cfg.n);
    const json& P = r.cfg.params;
    const SteadyState s = solve_for(m, g, defaults_table()["params"]["steady"]);
    std::mt19937_64 rng(r.cfg.seed);
    const DensityPair init = make_initial(P.at("init"), g, rng);
    FlowConfig fc;
    fc.T = num(P, "T");
    fc.cfl_safety = num(P, "cfl");
    fc.dt_max = num(P, "dt_max");
    fc.record_dt = num(P, "record_dt");
    fc.quantiles = integer(P, "quantiles");
    write_density_csv(r.path("initial.csv"), init);
    write_density_csv(r.path("steady.csv"), s.pair);
    const FlowResult fr = run_flow(init, m, s, fc);
    write_density_csv(r.path("final.csv"), fr.final_state);

    const auto& d = fr.diag;
    r.results["steps"] = d.steps;
    r.results["min_dt"] = d.min_dt;
    r.results["max_dt"] = d.max_dt;
    r.results["max_mass_drift_step"] = d.max_mass_drift_step;
    r.results["max_com_drift"] = d.max_com_drift;
    r.results["max_energy_increase"] = d.max_energy_increase;
    r.results["final_W2_to_steady"] = fr.trace.W2_to_steady.back();
    r.results["final_L1_error"] = fr.trace.L1_err_1.back() + fr.trace.L1_err_2.back();
    r.results["final_energy_gap"] = fr.trace.E_eps.back() - fr.trace.E_steady;
    r.results["final_L_gap"] = fr.trace.L_eps.back() - fr.trace.L_steady;

    std::vector<std::pair<std::string, double>> footer;
    const double t0 = P.at("window")[0].get<double>(), t1 = P.at("window")[1].get<double>();
    if (fc.T >= t1 && fc.record_dt > 0.0) {
        const DecayFit f = decay_fit(fr.trace, t0, t1);
        r.results["decay_fit"] = fit_json(f);
        footer = fit_footer(f);
    }
    write_trace_csv(r.path("trace.csv"), fr.trace, footer);
    r.check("mass drift per step <= 1e-12", d.max_mass_drift_step <= 1e-12);
    r.check("center of mass drift <= 10 dx", d.max_com_drift <= 10 * g.dx());
    r.check("energy monotone within 1e-9", d.max_energy_increase <= 1e-9);
}

void run_jko_experiment(Run& r) {
    ModelSpec m = r.cfg.model;
    calibrate_model(m);
    const Grid1D g(r.cfg.L, r.cfg.n);
    const json& P = r.cfg.params;
    const SteadyState s = solve_for(m, g, defaults_table()["params"]["steady"]);
    std::mt19937_64 rng(r.cfg.seed);
    const DensityPair init = make_initial(P.at("init"), g, rng);
    JkoConfig jc;
    jc.tau = num(P, "tau");
    jc.m = integer(P, "m");
    jc.opt.tol = num(P, "tol");
    jc.opt.max_iters = integer(P, "max_iters");
    const int steps = integer(P, "steps");
    const double alpha = num(P, "alpha");
    const JkoRunResult jr = jko_run(init, m, jc, steps, s, integer(P, "record_every"));

    const auto zetas = default_test_functions(std::max(s.support1, s.support2));
    std::ofstream os(r.path("jko_steps.csv"));
    os << "k,iterations,grad_norm,stalled,E,dist2,step_slack,weak_ratio,h1_ratio\n";
    os.precision(17);
    double min_slack = INFINITY, max_weak = 0.0, max_h1 = 0.0, max_grad = 0.0;
    int stalls = 0;
    for (int k = 0; k < steps; ++k) {
        const auto& rep = jr.steps[static_cast<std::size_t>(k)];
        const auto& a = jr.iterates[static_cast<std::size_t>(k)];
        const auto& b = jr.iterates[static_cast<std::size_t>(k) + 1];
        double weak = 0.0;
        for (const auto& z : zetas) {
            const auto w = weak_residual(a, b, m, jc.tau, g, z);
            const double ratio = w.bound > 0.0 ? (w.R1 + w.R2) / w.bound : (w.R1 + w.R2 > 0.0 ? INFINITY : 0.0);
            weak = std::max(weak, ratio);
        }
        const auto h1 = h1_diagnostics(a, b, m, jc.tau, alpha, g);
        os << k + 1 << ',' << rep.iterations << ',' << rep.grad_norm << ',' << rep.stalled << ',' << rep.E_next
           << ',' << rep.dist2 << ',' << rep.step_slack << ',' << weak << ',' << h1.ratio << '\n';
        min_slack = std::min(min_slack, rep.step_slack);
        max_weak = std::max(max_weak, weak);
        max_h1 = std::max(max_h1, h1.ratio);
        max_grad = std::max(max_grad, rep.grad_norm);
        stalls += rep.stalled;
    }
    write_trace_csv(r.path("trace.csv"), jr.trace);
    write_density_csv(r.path("initial.csv"), init);
    write_density_csv(r.path("final.csv"), from_quantiles(jr.iterates.back(), g));

    r.results["steps"] = steps;
    r.results["min_step_slack"] = steps ? json(min_slack) : json(nullptr);
    r.results["max_weak_ratio"] = max_weak;
    r.results["max_h1_ratio"] = max_h1;
    r.results["max_grad_norm"] = max_grad;
    r.results["stalled_steps"] = stalls;
    r.results["quasi_continuity_slack"] = jr.quasi_continuity_slack;
    r.results["final_energy"] = jr.energies.back();
    r.results["final_W2_to_steady"] = jr.trace.W2_to_steady.back();
    r.check("step inequality (slack >= -1e-6)", !(min_slack < -1e-6));
    r.check("weak residual <= 1.05 bound", max_weak <= 1.05);
    r.check("energy monotone", jr.energy_monotone);
    r.check("quasi-continuity", jr.quasi_continuity);
    r.check("H1 estimate", max_h1 <= 1.0);
}

template <class Fn>
void parallel_for(int count, Fn fn) {
    const int workers = std::max(1, std::min(worker_count(), count));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < count;) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void run_decay_sweep(Run& r) {
    const json& P = r.cfg.params;
    const json& mj = r.cfg.normalized.at("model");
    std::vector<double> eps;
    for (const auto& e : P.at("eps")) eps.push_back(e.get<double>());
    if (eps.size() < 2) throw ConfigError("decay-sweep: need at least two eps values");
    std::sort(eps.begin(), eps.end());
    const double t0 = P.at("window")[0].get<double>(), t1 = P.at("window")[1].get<double>();
    if (num(P, "T") < t1) throw ConfigError("decay-sweep: T must cover the fit window");

    const std::size_t N = eps.size();
    std::vector<DecayFit> fits(N);
    std::vector<FlowDiagnostics> diags(N);
    std::vector<std::string> trace_paths(N);
    for (std::size_t i = 0; i < N; ++i) trace_paths[i] = r.path(eps_tag(eps[i]) + "/trace.csv");
    const double L = r.cfg.L;
    const int n = r.cfg.n;
    double lam = 0.0;
    parallel_for(static_cast<int>(N), [&](int i) {
        ModelSpec m = model_with_eps(mj, eps[static_cast<std::size_t>(i)]);
        calibrate_model(m);
        const Grid1D g(L, n);
        const SteadyState s = solve_for(m, g, defaults_table()["params"]["steady"]);
        std::mt19937_64 rng(r.cfg.seed);
        const DensityPair init = make_initial(P.at("init"), g, rng);
        FlowConfig fc;
        fc.T = num(P, "T");
        fc.cfl_safety = num(P, "cfl");
        fc.record_dt = num(P, "record_dt");
        const FlowResult fr = run_flow(init, m, s, fc);
        const DecayFit f = decay_fit(fr.trace, t0, t1);
        write_trace_csv(trace_paths[static_cast<std::size_t>(i)], fr.trace, fit_footer(f));
        fits[static_cast<std::size_t>(i)] = f;
        diags[static_cast<std::size_t>(i)] = fr.diag;
        if (i == 0) lam = m.K.lambda();
    });

    {
        std::ofstream os(r.path("rates.csv"));
        os << "eps,rate_E,rate_L1\n";
        for (std::size_t i = 0; i < N; ++i)
            os << eps[i] << ',' << std::setprecision(17) << fits[i].rate_E << ',' << fits[i].rate_L1
               << std::setprecision(6) << '\n';
    }

    // rate_E(eps) ~ r0 - C0 eps by least squares
    double me = 0, mr = 0;
    for (std::size_t i = 0; i < N; ++i) {
        me += eps[i];
        mr += fits[i].rate_E;
    }
    me /= N;
    mr /= N;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < N; ++i) {
        sxy += (eps[i] - me) * (fits[i].rate_E - mr);
        sxx += (eps[i] - me) * (eps[i] - me);
    }
    const double C0 = sxx > 0 ? std::max(0.0, -sxy / sxx) : 0.0;

    bool monotone = true, linear = true, l1_exp = true, conserve = true;
    json runs = json::array();
    for (std::size_t i = 0; i < N; ++i) {
        if (i && fits[i].rate_E > fits[i - 1].rate_E) monotone = false;
        if (2 * lam - fits[i].rate_E > C0 * eps[i] + 0.1) linear = false;
        if (!(fits[i].rate_L1 > 0.0 && fits[i].r2_L1 >= 0.99)) l1_exp = false;
        const Grid1D g(L, n);
        if (diags[i].max_mass_drift_step > 1e-12 || diags[i].max_com_drift > 10 * g.dx() ||
            diags[i].max_energy_increase > 1e-9)
            conserve = false;
        json run = fit_json(fits[i]);
        run["eps"] = eps[i];
        run["max_com_drift"] = diags[i].max_com_drift;
        run["max_energy_increase"] = diags[i].max_energy_increase;
        run["max_mass_drift_step"] = diags[i].max_mass_drift_step;
        runs.push_back(run);
    }
    r.results["runs"] = runs;
    r.results["C0"] = C0;
    r.results["two_lambda"] = 2 * lam;
    r.check("rate_E nonincreasing in eps", monotone);
    r.check("2 lambda - rate_E <= C0 eps + 0.1", linear);
    r.check("L1 error decays exponentially", l1_exp);
    r.check("conservation", conserve);
    if (eps.front() == 0.0) {
        const double r0 = fits.front().rate_E;
        r.check("eps = 0 energy rate within 10% of 2 lambda", std::abs(r0 - 2 * lam) <= 0.2 * lam);
    }
}

json load_baselines(const json& b) {
    if (b.is_null()) return nullptr;
    if (b.is_object()) return b;
    if (!b.is_string()) throw ConfigError("probes.baselines: expected a path or an object");
    std::ifstream f(b.get<std::string>());
    if (!f) throw ConfigError("cannot read baselines file " + b.get<std::string>());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("baselines: ") + e.what());
    }
}

void run_probes(Run& r) {
    ModelSpec m = r.cfg.model;
    calibrate_model(m);
    const Grid1D g(r.cfg.L, r.cfg.n);
    const json& P = r.cfg.params;
    const SteadyState s = solve_for(m, g, defaults_table()["params"]["steady"]);
    const double le = lambda_eps(m, s);
    const ProbeConstants pc = estimate_probe_constants(m, s, r.cfg.seed, integer(P, "samples"));

    json values = {{"kappa11", m.kappa[0][0]}, {"kappa12", m.kappa[0][1]}, {"kappa21", m.kappa[1][0]},
                   {"kappa22", m.kappa[1][1]}, {"eps0", m.eps0_estimate}, {"K0", s.K0_estimate},
                   {"C_CK", pc.C_CK}, {"C_N", pc.C_N}, {"C_hat", pc.C_hat}};
    r.results["constants"] = values;
    r.results["lambda_eps"] = le;

    std::mt19937_64 rng(r.cfg.seed);
    const int pairs = integer(P, "pairs"), q = integer(P, "quantiles");
    double max_res = 0, min_conv = INFINITY, min_k = INFINITY, min_cell = INFINITY, min_geo = INFINITY;
    for (int k = 0; k < pairs; ++k) {
        const DensityPair p = recenter(random_pair(g, rng, 0.3));
        const auto rep = lyapunov_decomposition(p, m, s, q);
        max_res = std::max(max_res, rep.identity_residual / (1 + std::abs(rep.L_gap)));
        min_conv = std::min(min_conv, rep.L_gap - 0.5 * le * rep.dist2);
        min_k = std::min(min_k, rep.K_fun + 0.5 * m.K.bound_second() * rep.dist2);
        min_cell = std::min(min_cell, rep.min_integrand);
        if (k % 10 == 0) {
            const DensityPair o = recenter(random_pair(g, rng, 0.3));
            min_geo = std::min(min_geo, geodesic_convexity_probe(p, o, m, 11, q).min_slack);
        }
    }
    r.results["pairs"] = pairs;
    r.results["max_identity_residual"] = max_res;
    r.results["min_convexity_slack"] = min_conv;
    r.results["min_K_slack"] = min_k;
    r.results["min_integrand"] = min_cell;
    r.results["min_geodesic_slack"] = pairs ? json(min_geo) : json(nullptr);
    r.check("identity residual <= 1e-8 (1 + |L-gap|)", max_res <= 1e-8);
    r.check("L-gap >= lambda_eps / 2 d^2 - 1e-6", !(min_conv < -1e-6));
    r.check("K >= -C_K / 2 d^2", !(min_k < -1e-12));
    r.check("I_F, I_K integrands nonnegative", !(min_cell < -1e-15));
    r.check("geodesic convexity slack >= -1e-6", !(min_geo < -1e-6));

    std::ofstream(r.path("baselines_candidate.json"))
        << json{{"model", r.cfg.normalized.at("model")}, {"n", g.n}, {"values", values}}.dump(2) << '\n';

    const json base = load_baselines(P.at("baselines"));
    if (!base.is_null()) {
        const double tol = num(P, "tolerance");
        const json& bv = base.contains("values") ? base.at("values") : base;
        r.baselines = bv;
        for (auto it = bv.begin(); it != bv.end(); ++it) {
            if (!values.contains(it.key())) throw ConfigError("baselines: unknown constant " + it.key());
            const double v = values[it.key()].get<double>(), b = it.value().get<double>();
            r.check("baseline " + it.key() + " within " + std::to_string(static_cast<int>(tol * 100)) + "%",
                    std::abs(v - b) <= tol * std::abs(b));
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

int worker_count() {
    if (const char* w = std::getenv("XDIFF_WORKERS")) {
        const int k = std::atoi(w);
        if (k > 0) return k;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

DensityPair random_pair(const Grid1D& g, std::mt19937_64& rng, double spread) {
    Field a = bump_sum(g, rng, spread);
    Field b = bump_sum(g, rng, spread);
    return DensityPair(g, std::move(a), std::move(b));
}

DensityPair make_initial(const json& init, const Grid1D& g, std::mt19937_64& rng) {
    if (!init.is_object() || !init.contains("type")) throw ConfigError("init: expected an object with a type");
    const std::string t = init.at("type").get<std::string>();
    auto allow = [&](std::initializer_list<const char*> keys) {
        for (auto it = init.begin(); it != init.end(); ++it) {
            bool ok = it.key() == "type";
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) throw ConfigError("init: unknown key '" + it.key() + "' for type " + t);
        }
    };
    if (t == "uniform") {
        allow({"rho1", "rho2"});
        const auto [a1, b1] = interval(init, "rho1");
        const auto [a2, b2] = interval(init, "rho2");
        return DensityPair(g, uniform_field(g, a1, b1), uniform_field(g, a2, b2));
    }
    if (t == "biweight") {
        allow({"c1", "c2", "w1", "w2"});
        return biweight_pair(g, num(init, "c1"), num(init, "c2"), num(init, "w1"), num(init, "w2"));
    }
    if (t == "random") {
        allow({"spread"});
        const double spread = init.contains("spread") ? num(init, "spread") : 0.3;
        if (!(spread > 0.0 && spread <= 1.0)) throw ConfigError("init.spread must lie in (0, 1]");
        return recenter(random_pair(g, rng, spread));
    }
    throw ConfigError("init.type must be uniform, biweight or random");
}

RunConfig parse_config(const json& raw) {
    const json& D = defaults_table();
    if (!raw.is_object()) throw ConfigError("config: expected a JSON object");
    if (raw.contains("params") && !raw.contains("experiment"))
        throw ConfigError("config: params given without an experiment");

    RunConfig cfg;
    cfg.experiment = raw.value("experiment", D["experiment"].get<std::string>());
    if (!D["params"].contains(cfg.experiment)) throw ConfigError("unknown experiment '" + cfg.experiment + "'");

    json base = D;
    base["params"] = D["params"][cfg.experiment];
    json norm = overlay(base, raw, "");
    cfg.normalized = norm;
    cfg.params = norm["params"];
    cfg.output_dir = norm["output_dir"].get<std::string>();
    if (norm["seed"].is_number_unsigned()) {
        cfg.seed = norm["seed"].get<std::uint64_t>();
    } else {
        const double seed = num(norm, "seed");
        if (seed < 0 || seed != std::floor(seed) || seed >= 1.8e19) throw ConfigError("seed: expected a nonnegative integer");
        cfg.seed = static_cast<std::uint64_t>(seed);
    }

    const json& mj = norm["model"];
    for (const char* k : {"a1", "a2", "b1", "b2", "gamma"})
        if (!(num(mj, k) > 0.0)) throw ConfigError(std::string("model.") + k + " must be positive");
    const double eps = num(mj, "eps");
    if (eps < 0.0) throw ConfigError("model.eps must be nonnegative");
    const json& kj = mj["kernel"];
    if (!(num(kj, "lambda") > 0.0)) throw ConfigError("kernel.lambda must be positive");
    if (num(kj, "mu") < 0.0) throw ConfigError("kernel.mu must be nonnegative");
    cfg.model = model_with_eps(mj, eps);

    const json& gj = norm["grid"];
    cfg.n = integer(gj, "n");
    if (cfg.n < 8) throw ConfigError("grid.n must be at least 8");
    if (gj["L"].is_string()) {
        if (gj["L"] != "auto") throw ConfigError("grid.L must be a number or \"auto\"");
        cfg.L = default_half_width(cfg.model);
    } else if (gj["L"].is_number()) {
        cfg.L = num(gj, "L");
        if (!(cfg.L > 0.0)) throw ConfigError("grid.L must be positive");
    } else {
        throw ConfigError("grid.L must be a number or \"auto\"");
    }
    return cfg;
}

RunOutcome execute(const RunConfig& cfg, bool quiet) {
    RunOutcome out;
    Run r{cfg, fs::path(cfg.output_dir)};
    r.quiet = quiet;
    json error = nullptr;
    std::string diagnostic;

    try {
        fs::create_directories(r.dir);
        if (cfg.experiment != "validate") {
            const json& mj = cfg.normalized.at("model");
            const auto rep = validate_example_params(num(mj, "a1"), num(mj, "a2"), num(mj, "b1"), num(mj, "b2"),
                                                     num(mj, "gamma"));
            if (!rep.valid) {
                json conds = json::array();
                for (const auto& c : rep.conditions)
                    conds.push_back({{"name", c.name}, {"slack", c.slack}, {"pass", c.pass}});
                r.results["admissibility"] = conds;
                throw ConfigError("model parameters are not admissible");
            }
        }
        r.note("running " + cfg.experiment);
        if (cfg.experiment == "validate") run_validate(r);
        else if (cfg.experiment == "steady") run_steady(r);
        else if (cfg.experiment == "flow") run_flow_experiment(r);
        else if (cfg.experiment == "jko") run_jko_experiment(r);
        else if (cfg.experiment == "decay-sweep") run_decay_sweep(r);
        else if (cfg.experiment == "probes") run_probes(r);
        bool all = true;
        for (const auto& c : r.checks) all = all && c.get<bool>();
        out.exit_code = all ? kExitOk : kExitCheck;
        out.message = all ? "all checks passed" : "some checks failed";
    } catch (const ConfigError& e) {
        out.exit_code = kExitConfig;
        out.message = e.what();
    } catch (const FlowAbort& e) {
        out.exit_code = kExitNumeric;
        out.message = e.what();
        try {
            diagnostic = r.path("abort_state.csv");
            write_density_csv(diagnostic, e.state, "t=" + std::to_string(e.time));
        } catch (const std::exception&) {
            diagnostic.clear();
        }
    } catch (const NumericError& e) {
        out.exit_code = kExitNumeric;
        out.message = e.what();
    } catch (const Error& e) {
        out.exit_code = kExitNumeric;
        out.message = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        out.exit_code = kExitConfig;
        out.message = e.what();
    }

    // the output location is not part of what is hashed
    json hashed = cfg.normalized;
    hashed.erase("output_dir");
    json& s = out.summary;
    s["experiment"] = cfg.experiment;
    s["config_hash"] = hex(fnv1a(hashed.dump()));
    s["config"] = hashed;
    s["seed"] = cfg.seed;
    s["results"] = r.results;
    s["checks"] = r.checks;
    s["baselines"] = r.baselines;
    s["artifacts"] = r.artifacts;
    s["exit_code"] = out.exit_code;
    s["message"] = out.message;
    if (!diagnostic.empty()) s["diagnostic_snapshot"] = diagnostic;
    try {
        std::ofstream f(r.dir / "summary.json");
        if (f) f << s.dump(2) << '\n';
    } catch (const std::exception&) {
    }
    return out;
}

}  // namespace xdiff
