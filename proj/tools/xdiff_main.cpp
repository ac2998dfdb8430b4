// xdiff: run one configured experiment.
//
//   xdiff --config run.json [--out dir] [--seed n] [--quiet]
//
// Exit status: 0 all checks pass, 2 a check failed, 1 bad configuration,
// 3 numerical failure. XDIFF_WORKERS caps the sweep worker count.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "xdiff/errors.hpp"
#include "xdiff/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"two-species aggregation-diffusion experiments"};
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run config")->required();
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides output_dir)");
    auto* seed_opt = app.add_option("--seed", seed, "seed (overrides the config)");
    app.add_flag("--quiet", quiet, "no progress output");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : xdiff::kExitConfig;
    }

    xdiff::json raw;
    {
        std::ifstream f(config_path);
        if (!f) {
            std::cerr << "xdiff: cannot open " << config_path << '\n';
            return xdiff::kExitConfig;
        }
        try {
            raw = xdiff::json::parse(f);
        } catch (const xdiff::json::exception& e) {
            std::cerr << "xdiff: " << config_path << ": " << e.what() << '\n';
            return xdiff::kExitConfig;
        }
    }
    if (raw.is_object()) {
        if (*out_opt) raw["output_dir"] = out_dir;
        if (*seed_opt) raw["seed"] = seed;
    }

    xdiff::RunConfig cfg;
    try {
        cfg = xdiff::parse_config(raw);
    } catch (const xdiff::ConfigError& e) {
        std::cerr << "xdiff: config: " << e.what() << '\n';
        return xdiff::kExitConfig;
    }

    const auto res = xdiff::execute(cfg, quiet);
    if (!quiet) {
        for (auto it = res.summary["checks"].begin(); it != res.summary["checks"].end(); ++it)
            std::cout << (it.value().get<bool>() ? "pass  " : "FAIL  ") << it.key() << '\n';
        std::cout << cfg.experiment << ": " << res.message << " (exit " << res.exit_code << ")\n";
    } else if (res.exit_code == xdiff::kExitConfig || res.exit_code == xdiff::kExitNumeric) {
        std::cerr << "xdiff: " << res.message << '\n';
    }
    return res.exit_code;
}
