#include "xdiff/trace.hpp"

#include <fstream>
#include <ostream>

#include "xdiff/errors.hpp"
#include "xdiff/functionals.hpp"

namespace xdiff {

void FlowTrace::record(double t, const DensityPair& p, const ModelSpec& m, const SteadyState& s,
                       int quantiles) {
    if (times.empty()) {
        E_steady = energy(s.pair, m);
        L_steady = lyapunov_L(s.pair, m, s);
        N_steady = lyapunov_N(s.pair, m, s);
    }
    const auto mo = moments(p);
    times.push_back(t);
    E_eps.push_back(energy(p, m));
    L_eps.push_back(lyapunov_L(p, m, s));
    N_eps.push_back(lyapunov_N(p, m, s));
    H_c.push_back(entropy(p));
    mass1.push_back(mo.mass1);
    mass2.push_back(mo.mass2);
    m1_combined.push_back(mo.combined_m1());
    W2_to_steady.push_back(pair_distance(p, s.pair, quantiles));
    L1_err_1.push_back(l1_norm_diff(p.rho1, s.pair.rho1, p.grid));
    L1_err_2.push_back(l1_norm_diff(p.rho2, s.pair.rho2, p.grid));
}

void write_trace_csv(std::ostream& os, const FlowTrace& tr,
                     const std::vector<std::pair<std::string, double>>& footer) {
    os << "t,E_eps,L_eps,N_eps,H_c,mass1,mass2,m1_comb,W2,L1err1,L1err2\n";
    os.precision(17);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << tr.times[k] << ',' << tr.E_eps[k] << ',' << tr.L_eps[k] << ',' << tr.N_eps[k] << ','
           << tr.H_c[k] << ',' << tr.mass1[k] << ',' << tr.mass2[k] << ',' << tr.m1_combined[k] << ','
           << tr.W2_to_steady[k] << ',' << tr.L1_err_1[k] << ',' << tr.L1_err_2[k] << '\n';
    }
    for (const auto& [k, v] : footer) os << "# " << k << '=' << v << '\n';
}

void write_trace_csv(const std::string& path, const FlowTrace& tr,
                     const std::vector<std::pair<std::string, double>>& footer) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open " + path + " for writing");
    write_trace_csv(f, tr, footer);
}

}  // namespace xdiff
