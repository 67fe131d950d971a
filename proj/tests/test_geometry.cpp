#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thindyn/geometry.hpp>

#include <cmath>

using namespace thindyn;

TEST_CASE("profile: constant radius, d=2 gives g == 2") {
    auto p = build_profile(ProfileKind::constant, {1.0}, 2);
    CHECK(p.omega == doctest::Approx(2.0).epsilon(1e-15));
    for (double x : {0.0, 0.31, 0.5, 1.0}) {
        CHECK(p.r(x) == doctest::Approx(1.0));
        CHECK(p.g(x) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(p.r_prime(x) == 0.0);
    }
}

TEST_CASE("profile: sine bump values") {
    auto p = build_profile(ProfileKind::sine, {0.3}, 2);
    CHECK(p.g(0.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(p.g(0.5) == doctest::Approx(2.6).epsilon(1e-14));
    // g == omega r^{d-1} pointwise
    for (int i = 0; i <= 64; ++i) {
        const double x = i / 64.0;
        CHECK(p.g(x) == doctest::Approx(p.omega * p.r(x)).epsilon(1e-15));
    }
}

TEST_CASE("profile: constant radius, d=3 gives g == pi") {
    auto p = build_profile(ProfileKind::constant, {1.0}, 3);
    CHECK(p.g(0.25) == doctest::Approx(pi).epsilon(1e-15));
}

TEST_CASE("profile: non-positive radius rejected") {
    CHECK_THROWS_AS(build_profile(ProfileKind::sine, {-1.5}, 2), std::invalid_argument);
    CHECK_THROWS_AS(build_profile(ProfileKind::constant, {0.0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(build_profile(ProfileKind::polynomial, {1.0, -2.0}, 2), std::invalid_argument);
}

TEST_CASE("profile: polynomial derivative is exact") {
    auto p = build_profile(ProfileKind::polynomial, {1.0, 0.5, -0.25}, 2);
    for (double x : {0.0, 0.3, 0.7, 1.0}) {
        CHECK(p.r(x) == doctest::Approx(1.0 + 0.5 * x - 0.25 * x * x).epsilon(1e-15));
        CHECK(p.r_prime(x) == doctest::Approx(0.5 - 0.5 * x).epsilon(1e-15));
    }
}

TEST_CASE("grid: straight channel has unit Jacobian and no cross term") {
    auto p = build_profile(ProfileKind::constant, {1.0}, 2);
    auto g = build_mapped_grid(p, 8, 8);
    for (double j : g.jac_cell) CHECK(j == doctest::Approx(1.0).epsilon(1e-15));
    for (double c : g.metric_cross) CHECK(c == 0.0);
    for (double c : g.metric_trans) CHECK(c == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("grid: Jacobian quadrature matches the closed-form integral") {
    auto p = build_profile(ProfileKind::sine, {0.3}, 2);
    auto g = build_mapped_grid(p, 64, 8);
    const double exact = 1.0 + 0.6 / pi; // integral of 1 + 0.3 sin(pi x)
    CHECK(std::abs(g.integrate_jacobian_x() - exact) < 1e-6);
    // weighted area equals the integral of g = 2r
    CHECK(std::abs(g.weighted_area() - 2.0 * exact) < 2e-6);
}

TEST_CASE("grid: quadrature refinement order at least 1.9") {
    auto p = build_profile(ProfileKind::sine, {0.3}, 2);
    const double exact = 1.0 + 0.6 / pi;
    const double e1 = std::abs(build_mapped_grid(p, 8, 4).integrate_jacobian_x() - exact);
    const double e2 = std::abs(build_mapped_grid(p, 16, 4).integrate_jacobian_x() - exact);
    const double order = std::log2(e1 / e2);
    CHECK(order >= 1.9);
}

TEST_CASE("grid: cell-count precondition") {
    auto p = build_profile(ProfileKind::constant, {1.0}, 2);
    CHECK_THROWS_AS(build_mapped_grid(p, 2, 8), std::invalid_argument);
    CHECK_THROWS_AS(build_mapped_grid(p, 8, 3), std::invalid_argument);
}

TEST_CASE("cross-section eigenvalue: interval closed forms") {
    auto pc = build_profile(ProfileKind::constant, {1.0}, 2);
    CHECK(cross_section_poincare(pc, 0.4) == doctest::Approx(pi * pi / 4.0).epsilon(1e-15));

    auto ps = build_profile(ProfileKind::sine, {0.3}, 2);
    const double expected = std::pow(pi / 2.6, 2);
    CHECK(cross_section_poincare(ps, 0.5) == doctest::Approx(expected).epsilon(1e-14));

    // minimum over x attained where r peaks (x = 1/2), grid-scan oracle
    double best = 1e300;
    double argbest = -1.0;
    for (int i = 0; i <= 2048; ++i) {
        const double x = i / 2048.0;
        const double v = cross_section_poincare(ps, x);
        if (v < best) { best = v; argbest = x; }
    }
    CHECK(best == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(argbest - 0.5) < 1e-3);
    CHECK(min_cross_section_eigenvalue(ps) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("cross-section eigenvalue: disk closed form for d=3") {
    auto p = build_profile(ProfileKind::constant, {2.0}, 3);
    const double expected = std::pow(disk_neumann_root / 2.0, 2);
    CHECK(cross_section_poincare(p, 0.1) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("poincare constant is the exact reciprocal of the scanned minimum") {
    auto p = build_profile(ProfileKind::sine, {0.3}, 2);
    CHECK(poincare_constant(p) == 1.0 / min_cross_section_eigenvalue(p));
    CHECK(poincare_constant(p) > 0.0);
}

TEST_CASE("outward normals") {
    auto ps = build_profile(ProfileKind::sine, {0.3}, 2);
    auto g = build_mapped_grid(ps, 8, 8);

    SUBCASE("lids") {
        auto nl = outward_normal(g, 0, 3, 0.1);
        CHECK(nl[0] == -1.0);
        CHECK(nl[1] == 0.0);
        auto nr = outward_normal(g, 8, 3, 0.1);
        CHECK(nr[0] == 1.0);
        CHECK(nr[1] == 0.0);
    }
    SUBCASE("straight channel lateral sides") {
        auto pc = build_profile(ProfileKind::constant, {1.0}, 2);
        auto gs = build_mapped_grid(pc, 8, 8);
        auto top = outward_normal(gs, 4, 8, 0.1);
        CHECK(top[0] == doctest::Approx(0.0));
        CHECK(top[1] == doctest::Approx(1.0));
        auto bot = outward_normal(gs, 4, 0, 0.1);
        CHECK(bot[1] == doctest::Approx(-1.0));
    }
    SUBCASE("curved channel matches the direct formula") {
        const double eps = 0.1;
        const int ix = 2; // x = 1/4
        const double x = g.x[ix];
        const double rp = ps.r_prime(x);
        const double den = std::sqrt(eps * eps * rp * rp + 1.0);
        auto n = outward_normal(g, ix, 8, eps);
        CHECK(std::abs(n[0] - (-eps * rp / den)) < 1e-12);
        CHECK(std::abs(n[1] - 1.0 / den) < 1e-12);
    }
    SUBCASE("unit length") {
        for (int iz : {0, 8})
            for (int ix = 1; ix < 8; ++ix) {
                auto n = outward_normal(g, ix, iz, 0.05);
                CHECK(std::abs(std::hypot(n[0], n[1]) - 1.0) < 1e-12);
            }
    }
    SUBCASE("interior node rejected") {
        CHECK_THROWS_AS(outward_normal(g, 4, 4, 0.1), std::invalid_argument);
    }
}
