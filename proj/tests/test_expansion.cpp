#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thindyn/expansion.hpp>

#include <cmath>

using namespace thindyn;

namespace {

ChannelProfile straight() { return build_profile(ProfileKind::constant, {1.0}, 2); }
ChannelProfile curved() { return build_profile(ProfileKind::sine, {0.3}, 2); }

Vec cos_field(int nn, int k = 1) {
    Vec f(nn);
    for (int i = 0; i < nn; ++i) f[i] = std::cos(k * pi * i / (nn - 1.0));
    return f;
}

} // namespace

TEST_CASE("compatibility residual") {
    OperatorConfig cfg;
    auto prof = curved();
    auto op = assemble_limit_operator(prof, cfg, 1024);
    const Vec f = cos_field(op.n);
    const Vec v0 = solve_resolvent(op, f);

    SUBCASE("the discrete limit solution reproduces its data") {
        CHECK(compatibility_residual(op, v0, f) < 1e-8);
    }
    SUBCASE("a constant shift shows up at full size") {
        const Vec shifted = v0 + 0.1 * Vec::Ones(op.n);
        CHECK(compatibility_residual(op, shifted, f) == doctest::Approx(0.1).epsilon(1e-6));
    }
    SUBCASE("closed-form solution on the straight profile") {
        // g = 2: v0 = cos(pi x)/(1 + pi^2) solves the limit equation exactly
        auto ps = straight();
        const double den = 1.0 + pi * pi;
        const double res = compatibility_residual_analytic(
            ps, 1.0, [&](double x) { return std::cos(pi * x) / den; },
            [&](double x) { return -pi * std::sin(pi * x) / den; },
            [&](double x) { return -pi * pi * std::cos(pi * x) / den; },
            [](double x) { return std::cos(pi * x); });
        CHECK(res < 1e-10);
    }
}

TEST_CASE("transverse cell problem") {
    SUBCASE("straight channel: zero data, zero corrector") {
        auto sol = solve_cell_v2(0.0, 0.0, 1.0, 32);
        CHECK(sol.values.lpNorm<Eigen::Infinity>() < 1e-14);
    }
    SUBCASE("discrete solve matches the closed form to near roundoff") {
        const double c = 0.37, r = 1.25;
        auto sol = solve_cell_v2(c, c * r, r, 64);
        for (int i = 0; i < sol.y.size(); ++i)
            CHECK(std::abs(sol.values[i] - cell_v2_closed_form(c, r, sol.y[i])) < 1e-10);
        // zero mean by construction (Simpson quadrature)
        double mean = 0.0;
        for (int i = 0; i < sol.y.size(); ++i) {
            const double w =
                (i == 0 || i + 1 == sol.y.size()) ? 1.0 / 3.0 : ((i % 2) ? 4.0 / 3.0 : 2.0 / 3.0);
            mean += w * sol.values[i];
        }
        CHECK(std::abs(mean) * (sol.y[1] - sol.y[0]) < 1e-12);
    }
    SUBCASE("incompatible data is rejected") {
        CHECK_THROWS_WITH_AS(solve_cell_v2(1.0, 0.5, 1.0, 32),
                             doctest::Contains("residual too large"), std::runtime_error);
    }
    SUBCASE("cell data from the limit solution is compatible by construction") {
        OperatorConfig cfg;
        auto prof = curved();
        auto op = assemble_limit_operator(prof, cfg, 256);
        const Vec v0 = solve_resolvent(op, cos_field(op.n));
        auto d = cell_data_from_limit_solution(prof, v0, 0.37);
        CHECK(std::abs(d.c * d.r - d.flux) < 1e-12);
        CHECK_NOTHROW(solve_cell_v2(d.c, d.flux, d.r, 32));
    }
}

TEST_CASE("optimality ratios") {
    SUBCASE("straight channel sits at the structural floor") {
        auto prof = straight();
        auto grid = build_mapped_grid(prof, 64, 16);
        Vec f = cos_field(65);
        auto table = optimality_ratio(prof, 1.0, grid, f, {0.125, 0.0625});
        CHECK(table.grad_norm < 1e-12);
        for (const auto& row : table.rows) CHECK(row.distance < 1e-8);
    }
    SUBCASE("curved channel ratios stabilize toward the corrector norm") {
        auto prof = curved();
        auto grid = build_mapped_grid(prof, 96, 24);
        Vec f = cos_field(97);
        auto table =
            optimality_ratio(prof, 1.0, grid, f, {0.125, 0.0625, 0.03125, 0.015625});
        CHECK(table.grad_norm > 0.0);
        // monotone stabilization until a possible floor
        double prev = std::abs(table.rows[0].ratio - table.grad_norm);
        int good = 0;
        for (std::size_t i = 1; i < table.rows.size(); ++i) {
            const double gap = std::abs(table.rows[i].ratio - table.grad_norm);
            if (!table.rows[i].flagged) {
                CHECK(gap <= prev * 1.05);
                ++good;
            }
            prev = gap;
        }
        CHECK(good >= 1);
        // smallest pre-floor ratio close to the reference
        double best = 1e300;
        for (const auto& row : table.rows)
            if (!row.flagged) best = std::abs(row.ratio - table.grad_norm) / table.grad_norm;
        CHECK(best < 0.15);
        // odd-order coefficient is subdominant
        auto rep = odd_part_split(table.rows);
        CHECK(std::abs(rep.odd) <= 0.1 * std::abs(rep.even));
    }
    SUBCASE("increasing eps list rejected") {
        auto prof = curved();
        auto grid = build_mapped_grid(prof, 16, 8);
        CHECK_THROWS_AS(optimality_ratio(prof, 1.0, grid, Vec::Ones(17), {0.0625, 0.125}),
                        std::invalid_argument);
    }
}
