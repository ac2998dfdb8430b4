#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "xdiff/errors.hpp"
#include "xdiff/experiment.hpp"

using namespace xdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("xdiff_cli_" + name);
    fs::remove_all(p);
    return p;
}

RunOutcome run(json raw, const std::string& name) {
    raw["output_dir"] = scratch(name).string();
    return execute(parse_config(raw));
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("defaults fill every key and unknown keys are rejected") {
    const RunConfig c = parse_config(json::object());
    CHECK(c.experiment == "steady");
    CHECK(c.n == 512);
    CHECK(c.L > 0.0);
    CHECK(c.params.at("tol").get<double>() == 1e-10);
    CHECK(parse_config(json{{"experiment", "jko"}}).params.at("m").get<int>() == 256);

    CHECK_THROWS_AS(parse_config(json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"model", {{"a3", 2}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"model", {{"eps", "big"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"experiment", "nope"}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"experiment", "jko"}, {"params", {{"T", 1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"grid", {{"L", "wide"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"grid", {{"n", 3}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
}

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("validate: reference tuple passes three conditions") {
    const auto r = run({{"experiment", "validate"}}, "validate");
    CHECK(r.exit_code == kExitOk);
    const auto& conds = r.summary["results"]["conditions"];
    REQUIRE(conds.size() == 3);
    for (const auto& c : conds) CHECK(c["pass"].get<bool>());
}

TEST_CASE("validate: inadmissible tuple is a failed check, other experiments refuse it") {
    const json bad = {{"gamma", 3.0}};
    const auto v = run({{"experiment", "validate"}, {"model", bad}}, "validate_bad");
    CHECK(v.exit_code == kExitCheck);
    CHECK_FALSE(v.summary["results"]["conditions"][2]["pass"].get<bool>());

    const auto s = run({{"experiment", "steady"}, {"model", bad}}, "steady_bad");
    CHECK(s.exit_code == kExitConfig);
    CHECK(s.summary["results"].contains("admissibility"));
}

TEST_CASE("steady at eps = 0 reproduces the Barenblatt constants") {
    const auto r = run({{"experiment", "steady"}, {"model", {{"eps", 0.0}}}}, "steady0");
    REQUIRE(r.exit_code == kExitOk);
    const double ct = std::pow(1.5, 2.0 / 3.0) / 2.0;
    CHECK(r.summary["results"]["C_tilde1"].get<double>() == doctest::Approx(ct).epsilon(1e-3));
    CHECK(r.summary["results"]["support_radius1"].get<double>() == doctest::Approx(std::sqrt(2 * ct)).epsilon(1e-3));
    CHECK(fs::exists(scratch("x").parent_path() / "xdiff_cli_steady0" / "steady.csv"));
}

TEST_CASE("identical config and seed give byte-identical summaries") {
    const json cfg = {{"experiment", "probes"}, {"seed", 7}, {"params", {{"samples", 20}, {"pairs", 5}}}};
    json a = cfg, b = cfg;
    a["output_dir"] = scratch("det_a").string();
    b["output_dir"] = scratch("det_b").string();
    execute(parse_config(a));
    execute(parse_config(b));
    const std::string sa = slurp(fs::path(a["output_dir"].get<std::string>()) / "summary.json");
    CHECK_FALSE(sa.empty());
    CHECK(sa == slurp(fs::path(b["output_dir"].get<std::string>()) / "summary.json"));

    json c = a;
    c["seed"] = 8;
    CHECK(parse_config(c).normalized != parse_config(a).normalized);
}

TEST_CASE("probes: baseline comparison is embedded and can fail") {
    const json base = {{"C_N", 1e3}};
    const auto r = run({{"experiment", "probes"},
                        {"params", {{"samples", 20}, {"pairs", 3}, {"baselines", base}}}},
                       "probes_base");
    CHECK(r.exit_code == kExitCheck);
    CHECK(r.summary["baselines"] == base);

    const auto u = run({{"experiment", "probes"},
                        {"params", {{"samples", 20}, {"pairs", 3}, {"baselines", {{"nope", 1.0}}}}}},
                       "probes_unknown");
    CHECK(u.exit_code == kExitConfig);
}

TEST_CASE("numerical failure maps to exit 3") {
    const auto r = run({{"experiment", "steady"},
                        {"model", {{"kernel", {{"type", "regularized"}, {"mu", 0.5}}}}},
                        {"params", {{"solver", "general"}, {"max_outer", 1}}}},
                       "numeric");
    CHECK(r.exit_code == kExitNumeric);
}

TEST_CASE("decay sweep writes one trace per eps and a rates table") {
    const auto r = run({{"experiment", "decay-sweep"},
                        {"grid", {{"n", 128}}},
                        {"params", {{"eps", {0.0, 0.1}}, {"T", 1.0}, {"window", {0.2, 1.0}}}}},
                       "sweep");
    CHECK(r.exit_code != kExitConfig);
    const fs::path dir = scratch("x").parent_path() / "xdiff_cli_sweep";
    CHECK(fs::exists(dir / "eps_0" / "trace.csv"));
    CHECK(fs::exists(dir / "eps_0.1" / "trace.csv"));
    std::ifstream f(dir / "rates.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "eps,rate_E,rate_L1");
    int rows = 0;
    for (std::string line; std::getline(f, line);) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("init objects") {
    const Grid1D g(3.0, 128);
    std::mt19937_64 rng(1);
    const auto u = make_initial(json{{"type", "uniform"}, {"rho1", {-0.5, 0.5}}, {"rho2", {0.0, 1.0}}}, g, rng);
    CHECK(mass(u.rho1, g) == doctest::Approx(1.0));
    CHECK(first_moment(u.rho2, g) == doctest::Approx(0.5).epsilon(1e-3));
    const auto r = make_initial(json{{"type", "random"}}, g, rng);
    CHECK(std::abs(moments(r).combined_m1()) < 1e-12);
    CHECK_THROWS_AS(make_initial(json{{"type", "uniform"}, {"rho1", {1.0, 0.0}}, {"rho2", {0, 1}}}, g, rng),
                    ConfigError);
    CHECK_THROWS_AS(make_initial(json{{"type", "spiky"}}, g, rng), ConfigError);
    CHECK_THROWS_AS(make_initial(json{{"type", "random"}, {"spread", 0.3}, {"x", 1}}, g, rng), ConfigError);
}
