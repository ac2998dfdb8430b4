#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"
#include "xdiff/steady.hpp"

namespace xdiff {

/// Time series of the evaluated functionals, one entry per snapshot.
struct FlowTrace {
    std::vector<double> times;
    std::vector<double> E_eps, L_eps, N_eps, H_c;
    std::vector<double> mass1, mass2;
    std::vector<double> m1_combined;
    std::vector<double> W2_to_steady;
    std::vector<double> L1_err_1, L1_err_2;

    /// Functionals at the steady state the trace is measured against.
    double E_steady = 0.0, L_steady = 0.0, N_steady = 0.0;

    std::size_t size() const { return times.size(); }
    void record(double t, const DensityPair& p, const ModelSpec& m, const SteadyState& s, int quantiles);
};

/// Writes the trace CSV; `footer` lines are appended as '# key=value'.
void write_trace_csv(std::ostream& os, const FlowTrace& tr,
                     const std::vector<std::pair<std::string, double>>& footer = {});
void write_trace_csv(const std::string& path, const FlowTrace& tr,
                     const std::vector<std::pair<std::string, double>>& footer = {});

}  // namespace xdiff
