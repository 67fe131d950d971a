#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thindyn/manifold.hpp>
#include <thindyn/setup.hpp>
#include <thindyn/shadowing.hpp>

#include <cmath>

using namespace thindyn;

namespace {

// scalar contraction x -> x/2 as a one-dimensional map
MapFn half_map() {
    return [](const Vec& x) { return Vec(0.5 * x); };
}
MapJacFn half_jac() {
    return [](const Vec&) {
        Mat j(1, 1);
        j << 0.5;
        return j;
    };
}

std::vector<MapFixedPoint> half_fixed_points() {
    return {analyze_fixed_point(Vec::Zero(1), half_jac())};
}

Vec scalar(double v) {
    Vec x(1);
    x << v;
    return x;
}

} // namespace

TEST_CASE("pseudo defect") {
    auto map = half_map();
    SUBCASE("true orbits have zero defect") {
        std::vector<Vec> orbit;
        Vec x = scalar(0.7);
        for (int k = 0; k < 20; ++k) {
            orbit.push_back(x);
            x = map(x);
        }
        CHECK(pseudo_defect(orbit, map) < 1e-14);
        // a true orbit is a delta-pseudo-orbit for every delta >= 0
        for (double delta : {0.0, 1e-6, 0.1}) CHECK(pseudo_defect(orbit, map) <= delta + 1e-14);
    }
    SUBCASE("orbits of a nearby map have defect at most the map gap") {
        const double gap = 1e-3;
        auto perturbed = [&](const Vec& x) { return Vec(0.5 * x + gap * Vec::Ones(1)); };
        std::vector<Vec> orbit;
        Vec x = scalar(0.4);
        for (int k = 0; k < 30; ++k) {
            orbit.push_back(x);
            x = perturbed(x);
        }
        CHECK(pseudo_defect(orbit, map) <= gap + 1e-14);
    }
    SUBCASE("single point rejected") {
        CHECK_THROWS_AS(pseudo_defect({scalar(1.0)}, map), std::invalid_argument);
    }
}

TEST_CASE("shadow solve on the linear contraction") {
    auto map = half_map();
    auto jac = half_jac();
    auto fps = half_fixed_points();

    SUBCASE("bounded pseudo-orbit is shadowed by the origin") {
        // constant pseudo-orbit at height 2 delta has defect exactly delta
        const double delta = 1e-3;
        std::vector<Vec> pts(41, scalar(2.0 * delta));
        auto pseudo = make_pseudo_trajectory(pts, map);
        CHECK(pseudo.delta == doctest::Approx(delta).epsilon(1e-12));
        auto res = shadow_solve(map, jac, pseudo, fps);
        for (const Vec& x : res.orbit) CHECK(std::abs(x[0]) < 1e-14);
        CHECK(res.sup_dist <= 2.0 * delta * (1.0 + 1e-12));
        CHECK(res.l_ratio == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("the true orbit shadows itself") {
        std::vector<Vec> pts(31, scalar(0.0));
        auto pseudo = make_pseudo_trajectory(pts, map);
        auto res = shadow_solve(map, jac, pseudo, fps);
        CHECK(res.sup_dist == 0.0);
        CHECK(res.l_ratio == 0.0); // 0/0 guarded
    }
    SUBCASE("window precondition") {
        std::vector<Vec> pts(5, scalar(0.0));
        auto pseudo = make_pseudo_trajectory(pts, map);
        CHECK_THROWS_AS(shadow_solve(map, jac, pseudo, fps), std::invalid_argument);
    }
    SUBCASE("points outside the declared neighborhood are rejected") {
        std::vector<Vec> pts(21, scalar(5.0));
        auto pseudo = make_pseudo_trajectory(pts, map);
        ShadowOptions o;
        o.neighborhood_radius = 1.0;
        CHECK_THROWS_WITH_AS(shadow_solve(map, jac, pseudo, fps, o),
                             doctest::Contains("outside shadowing neighborhood"),
                             std::runtime_error);
    }
}

TEST_CASE("shadowing distance is symmetric in the two sequences") {
    Rng rng(83);
    std::vector<Vec> a, b;
    for (int k = 0; k < 12; ++k) {
        a.push_back(scalar(rng.symmetric(1.0)));
        b.push_back(scalar(rng.symmetric(1.0)));
    }
    auto sup = [](const std::vector<Vec>& u, const std::vector<Vec>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s = std::max(s, (u[i] - v[i]).norm());
        return s;
    };
    CHECK(sup(a, b) == sup(b, a));
}

TEST_CASE("Lipschitz shadowing estimate for the contraction") {
    auto map = half_map();
    auto jac = half_jac();
    auto fps = half_fixed_points();
    Rng rng(89);
    std::vector<double> per_decade;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        std::vector<PseudoTrajectory> samples;
        // adversarial constant orbit attaining the oracle ratio 1/(1 - 1/2)
        samples.push_back(make_pseudo_trajectory(std::vector<Vec>(41, scalar(2.0 * delta)), map));
        for (int s = 0; s < 4; ++s) {
            std::vector<Vec> pts(41, scalar(0.0));
            Vec x = scalar(0.0);
            for (int k = 0; k < 41; ++k) {
                pts[k] = x + scalar(rng.symmetric(delta));
                x = map(pts[k]);
            }
            samples.push_back(make_pseudo_trajectory(pts, map));
        }
        per_decade.push_back(lipschitz_shadowing_estimate(map, jac, samples, fps));
    }
    for (double l : per_decade) {
        CHECK(l >= 1.0);
        CHECK(l <= 2.1); // contraction oracle bound 1/(1-a) with a = 1/2
    }
    // stability across the delta decades
    const double lo = *std::min_element(per_decade.begin(), per_decade.end());
    const double hi = *std::max_element(per_decade.begin(), per_decade.end());
    CHECK(hi / lo <= 1.5);
    SUBCASE("empty sample set rejected") {
        CHECK_THROWS_AS(lipschitz_shadowing_estimate(map, jac, {}, fps), std::invalid_argument);
    }
}

TEST_CASE("Hausdorff distance") {
    auto metric = [](const Vec& a, const Vec& b) { return (a - b).norm(); };
    SUBCASE("identical sets") {
        std::vector<Vec> a = {scalar(0.0), scalar(1.0), scalar(2.0)};
        CHECK(hausdorff_distance(a, a, metric) == 0.0);
    }
    SUBCASE("two singletons") {
        std::vector<Vec> a = {scalar(0.0)}, b = {scalar(0.125)};
        CHECK(hausdorff_distance(a, b, metric) == doctest::Approx(0.125).epsilon(1e-15));
    }
    SUBCASE("refinement changes the value by at most the sampling resolution") {
        std::vector<Vec> coarse, fine;
        for (int k = 0; k <= 10; ++k) coarse.push_back(scalar(k / 10.0));
        for (int k = 0; k <= 100; ++k) fine.push_back(scalar(k / 100.0));
        const double d = hausdorff_distance(coarse, fine, metric);
        CHECK(d <= 0.05 + 1e-15); // half the coarse spacing
    }
    SUBCASE("empty set rejected") {
        std::vector<Vec> a = {scalar(0.0)}, empty;
        CHECK_THROWS_AS(hausdorff_distance(a, empty, metric), std::invalid_argument);
    }
}

TEST_CASE("attractor bound check") {
    auto map = half_map();
    SUBCASE("identical maps: both sides vanish") {
        std::vector<Vec> attr = {scalar(0.0)};
        auto rep = attractor_bound_check(attr, attr, map, map, 2.0, Vec::Ones(1), 1.0, 11, 1e-12,
                                         true);
        CHECK(rep.lhs == 0.0);
        CHECK(rep.map_gap == 0.0);
        CHECK(rep.holds);
    }
    SUBCASE("shifted contraction: the bound holds with margin") {
        const double shift = 1e-2;
        auto shifted = [&](const Vec& x) { return Vec(0.5 * x + shift * Vec::Ones(1)); };
        // attractors: {0} and {2 shift}; map gap = shift; oracle ratio 2
        std::vector<Vec> a = {scalar(0.0)}, b = {scalar(2.0 * shift)};
        auto rep = attractor_bound_check(a, b, map, shifted, 2.0, Vec::Ones(1), 1.0, 11, 1e-12,
                                         true);
        CHECK(rep.lhs == doctest::Approx(2.0 * shift).epsilon(1e-12));
        CHECK(rep.map_gap == doctest::Approx(shift).epsilon(1e-12));
        CHECK(rep.holds);
    }
    SUBCASE("hypothesis violations are fatal") {
        std::vector<Vec> attr = {scalar(0.0)};
        CHECK_THROWS_AS(attractor_bound_check(attr, attr, map, map, 2.0, Vec::Ones(1), 1.0, 11,
                                              1e-12, false),
                        std::runtime_error);
    }
}

TEST_CASE("shadowing the reduced limit system") {
    // small curved setup; reduced system over the first two modes
    SystemParams p;
    p.eps = 0.125;
    p.nx = 32;
    p.nz = 16;
    p.lambda_cut = 420.0;
    auto sys = make_channel_system(p);
    const auto& b = sys->basis_limit;
    const double alpha = p.alpha;
    Vec lw(2);
    lw << std::pow(b.values[0], alpha), std::pow(b.values[1], alpha);
    GraphOptions go;
    go.nodes_per_axis = 21;
    auto g = compute_graph(b, &sys->nl_limit, sys->stepper, 2, sys->gate.R, lw, alpha, go);
    ReducedSystem red;
    red.m = 2;
    red.basis = &b;
    red.nl = &sys->nl_limit;
    red.graph = &g;
    red.lambda_lin = b.values.head(2);
    red.lambda_w = lw;
    red.stepper = sys->stepper;
    red.support_radius = g.radius / 2.0;

    MapFn tmap = [&](const Vec& z) { return reduced_time_one(red, z); };
    MapJacFn tjac = [&](const Vec& z) { return reduced_time_one_jacobian(red, z); };

    // reduced equilibria from the full ones
    auto eqs = find_equilibria(
        {Vec(-1.5 * Vec::Ones(sys->op_limit.n)), Vec(0.2 * Vec::Ones(sys->op_limit.n)),
         Vec(1.5 * Vec::Ones(sys->op_limit.n))},
        sys->op_limit, nullptr, sys->profile, sys->nl_limit);
    REQUIRE(eqs.points.size() == 3);
    std::vector<MapFixedPoint> fps;
    for (const Vec& u : eqs.points) fps.push_back(analyze_fixed_point(b.coefficients(u).head(2), tjac));

    SUBCASE("a true heteroclinic window shadows itself") {
        // launch just off the origin along its unstable direction
        Vec z = Vec::Zero(2);
        for (const auto& fp : fps)
            if (fp.unstable_basis.cols() == 1 && fp.point.norm() < 1.0)
                z = fp.point + 1e-3 * fp.unstable_basis.col(0);
        std::vector<Vec> pts;
        for (int k = 0; k <= 14; ++k) {
            pts.push_back(z);
            z = tmap(z);
        }
        auto pseudo = make_pseudo_trajectory(pts, tmap);
        CHECK(pseudo.delta < 1e-13);
        auto res = shadow_solve(tmap, tjac, pseudo, fps);
        CHECK(res.orbit_defect <= 1e-12);
        CHECK(res.sup_dist < 1e-5); // off-manifold quadratic mismatch only
    }
    SUBCASE("noisy pseudo-orbits have a finite stable ratio") {
        Rng rng(97);
        std::vector<double> per_decade;
        for (double delta : {1e-3, 1e-4}) {
            std::vector<PseudoTrajectory> samples;
            for (int s = 0; s < 2; ++s) {
                Vec z = Vec::Zero(2);
                for (const auto& fp : fps)
                    if (fp.unstable_basis.cols() == 1)
                        z = fp.point + 2e-3 * (s ? -1.0 : 1.0) * fp.unstable_basis.col(0);
                std::vector<Vec> pts;
                for (int k = 0; k <= 14; ++k) {
                    Vec noise(2);
                    noise << rng.symmetric(delta), rng.symmetric(delta);
                    pts.push_back(z + noise);
                    z = tmap(z);
                }
                samples.push_back(make_pseudo_trajectory(pts, tmap));
            }
            per_decade.push_back(lipschitz_shadowing_estimate(tmap, tjac, samples, fps));
        }
        for (double l : per_decade) {
            CHECK(l > 0.0);
            CHECK(std::isfinite(l));
        }
        CHECK(std::max(per_decade[0], per_decade[1]) /
                  std::min(per_decade[0], per_decade[1]) <=
              1.5);
    }
}
