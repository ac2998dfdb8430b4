#pragma once

// Configured experiments behind the command line tool. A run reads one JSON
// config, writes summary.json plus CSV series into the output directory and
// maps its outcome to an exit status:
//   0 all checks pass, 2 some check failed, 1 configuration error,
//   3 numerical failure.

#include <cstdint>
#include <random>
#include <string>

#include "json.hpp"
#include "xdiff/grid.hpp"
#include "xdiff/model.hpp"

namespace xdiff {

using json = nlohmann::json;

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitCheck = 2, kExitNumeric = 3 };

/// The single defaults table; every key a config may set appears here.
const json& defaults_table();

struct RunConfig {
    /// Config with defaults filled in; this is what gets hashed.
    json normalized;
    std::string experiment;
    ModelSpec model;
    double L = 0.0;  // resolved half-width
    int n = 512;
    json params;     // experiment parameters, defaults merged
    std::string output_dir;
    std::uint64_t seed = 1;
};

/// Validates `raw` against the defaults table (unknown keys and wrong types
/// are errors) and resolves L = "auto". Throws ConfigError.
RunConfig parse_config(const json& raw);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& s);

struct RunOutcome {
    int exit_code = kExitOk;
    json summary;
    std::string message;
};

/// Runs the experiment and writes its artifacts. Never throws for
/// configuration or numerical problems; those become exit codes.
RunOutcome execute(const RunConfig& cfg, bool quiet = true);

/// Worker count for sweeps: XDIFF_WORKERS if set, else hardware concurrency.
int worker_count();

/// Smooth compactly supported pair of bump sums, unit mass each.
DensityPair random_pair(const Grid1D& g, std::mt19937_64& rng, double spread);

/// Initial data from an "init" object ({"type": "uniform" | "biweight" | "random", ...}).
DensityPair make_initial(const json& init, const Grid1D& g, std::mt19937_64& rng);

}  // namespace xdiff
