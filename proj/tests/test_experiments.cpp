#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thindyn/experiments.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

using namespace thindyn;

TEST_CASE("rate fitting") {
    SUBCASE("exact power data prefers the plain model") {
        std::vector<std::pair<double, double>> pairs;
        for (double e : {0.125, 0.0625, 0.03125, 0.015625, 0.0078125})
            pairs.emplace_back(e, 3.0 * e);
        auto fit = fit_rate(pairs);
        CHECK(!fit.log_preferred);
        CHECK(fit.exponent == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit.prefactor == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(fit.residual < 1e-13);
    }
    SUBCASE("log-corrected data prefers the corrected model") {
        std::vector<std::pair<double, double>> pairs;
        for (double e : {0.125, 0.0625, 0.03125, 0.015625, 0.0078125})
            pairs.emplace_back(e, 0.7 * e * std::abs(std::log(e)));
        auto fit = fit_rate(pairs);
        CHECK(fit.log_preferred);
        CHECK(std::abs(fit.exponent - 1.0) < 0.05);
        CHECK(fit.residual < 1e-13);
    }
    SUBCASE("deterministic refit") {
        std::vector<std::pair<double, double>> pairs;
        for (double e : {0.5, 0.25, 0.125, 0.0625}) pairs.emplace_back(e, e * e * 1.7);
        auto f1 = fit_rate(pairs), f2 = fit_rate(pairs);
        CHECK(f1.exponent == f2.exponent);
        CHECK(f1.prefactor == f2.prefactor);
    }
    SUBCASE("too few pairs rejected") {
        std::vector<std::pair<double, double>> pairs = {{0.5, 1.0}, {0.25, 0.5}, {0.125, 0.25}};
        CHECK_THROWS_AS(fit_rate(pairs), std::invalid_argument);
    }
    SUBCASE("nonpositive values rejected") {
        std::vector<std::pair<double, double>> pairs = {
            {0.5, 1.0}, {0.25, 0.5}, {0.125, 0.0}, {0.0625, 0.1}};
        CHECK_THROWS_AS(fit_rate(pairs), std::invalid_argument);
    }
}

TEST_CASE("config parsing") {
    SUBCASE("defaults round through the parser") {
        std::stringstream ss("schema_version = 1\nmu = 1.5\neps_list = 0.5, 0.25\nnx = 64\n"
                             "# a comment\nm = 2\nseed = 42\n");
        auto cfg = parse_config(ss);
        CHECK(cfg.mu == 1.5);
        CHECK(cfg.eps_list.size() == 2);
        CHECK(cfg.m_mode == "fixed");
        CHECK(cfg.m_override == 2);
        CHECK(cfg.seed == 42);
    }
    SUBCASE("unknown keys rejected") {
        std::stringstream ss("not_a_key = 3\n");
        CHECK_THROWS_AS(parse_config(ss), std::invalid_argument);
    }
    SUBCASE("invalid eps order rejected") {
        std::stringstream ss("eps_list = 0.25, 0.5\n");
        CHECK_THROWS_AS(parse_config(ss), std::invalid_argument);
    }
    SUBCASE("alpha domain enforced") {
        std::stringstream ss("alpha = 0.5\n");
        CHECK_THROWS_AS(parse_config(ss), std::invalid_argument);
    }
}

namespace {

SweepTable tiny_table() {
    SweepTable t;
    t.config = ExperimentConfig{};
    MetricsRow r1;
    r1.eps = 0.125;
    r1.tau = 0.0123456789012345678;
    r1.graph_dist = 1e-3;
    r1.gap_m = 3;
    r1.m_used = 2;
    MetricsRow r2;
    r2.eps = 0.0625;
    r2.tau = 0.5e-2;
    r2.error = "";
    t.rows = {r1, r2};
    return t;
}

} // namespace

TEST_CASE("report emission") {
    auto table = tiny_table();
    SUBCASE("csv has one line per row plus header") {
        const std::string csv = table_csv(table);
        int lines = 0;
        for (char c : csv)
            if (c == '\n') ++lines;
        CHECK(lines == 4); // schema comment + header + 2 rows
        CHECK(csv.find("eps,tau") != std::string::npos);
    }
    SUBCASE("json round-trips to an equal table") {
        emit_report(table, "json", "/tmp/thindyn_test_report.json");
        auto loaded = load_table_json("/tmp/thindyn_test_report.json");
        REQUIRE(loaded.rows.size() == table.rows.size());
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            for (const auto& c : metric_columns())
                CHECK(loaded.rows[i].*(c.field) == table.rows[i].*(c.field));
            CHECK(loaded.rows[i].gap_m == table.rows[i].gap_m);
            CHECK(loaded.rows[i].error == table.rows[i].error);
        }
    }
    SUBCASE("unknown format rejected") {
        CHECK_THROWS_AS(emit_report(table, "xml", "/tmp/x.xml"), std::invalid_argument);
    }
    SUBCASE("io failures carry the path") {
        CHECK_THROWS_WITH_AS(emit_report(table, "csv", "/no/such/dir/report.csv"),
                             doctest::Contains("/no/such/dir/report.csv"), std::runtime_error);
    }
    SUBCASE("empty table rejected") {
        SweepTable empty;
        CHECK_THROWS_AS(emit_report(empty, "csv", "/tmp/x.csv"), std::invalid_argument);
    }
}

TEST_CASE("straight-channel sweep sits at the structural floor and is deterministic") {
    ExperimentConfig cfg;
    cfg.profile = "constant";
    cfg.profile_params = {1.0};
    cfg.eps_list = {0.3, 0.17};
    cfg.nx = 32;
    cfg.nz = 8;
    cfg.n1d = 64;
    cfg.lambda_cut = 150.0;
    cfg.k_min = 4;
    cfg.probes = 3;
    cfg.graph_nodes = 15;
    cfg.eval_nodes = 5;
    cfg.shadow_window = 12;
    cfg.shadow_deltas = {1e-3};
    cfg.m_mode = "fixed";
    cfg.m_override = 2;

    auto table = run_sweep(cfg);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) {
        INFO("row error: ", row.error);
        REQUIRE(row.error.empty());
        CHECK(row.tau < 1e-6);
        CHECK(row.rho_matched < 1e-12);
        CHECK(row.proj_dist < 1e-6);
        CHECK(row.graph_dist < 1e-6);
        CHECK(row.reduced_map_dist < 1e-6);
        CHECK(row.time_one_dist < 1e-6);
        CHECK(row.attractor_dist_h1q < 1e-6);
        CHECK(row.bound_holds == 1);
        // exact rescaling identity
        CHECK(row.attractor_dist_h1qeps ==
              doctest::Approx(std::sqrt(row.eps) * row.attractor_dist_h1q).epsilon(1e-12));
    }
    // byte-identical reports on identical configuration
    auto table2 = run_sweep(cfg);
    CHECK(table_csv(table) == table_csv(table2));
    // threads do not change the bytes
    ExperimentConfig cfg2 = cfg;
    cfg2.threads = 2;
    auto table3 = run_sweep(cfg2);
    CHECK(table_csv(table) == table_csv(table3));
}

TEST_CASE("pipeline aborts on a threshold reaction naming the equilibrium") {
    ExperimentConfig cfg;
    cfg.profile = "sine";
    cfg.eps_list = {0.3, 0.2, 0.15, 0.1};
    cfg.nx = 24;
    cfg.nz = 8;
    cfg.n1d = 24;
    cfg.lambda_cut = 60.0;
    cfg.k_min = 3;
    cfg.probes = 2;
    cfg.graph_nodes = 9;
    cfg.eval_nodes = 5;
    cfg.shadow_window = 10;
    cfg.shadow_deltas = {1e-3};
    cfg.m_mode = "fixed";
    cfg.m_override = 1;
    cfg.reaction_a1 = 1.0; // first linearization eigenvalue crosses zero exactly
    cfg.reaction_M = 1.0;
    CHECK_THROWS_WITH_AS(theorem22_pipeline(cfg), doctest::Contains("non-hyperbolic"),
                         std::runtime_error);
}
