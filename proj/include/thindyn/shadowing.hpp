#ifndef THINDYN_SHADOWING_HPP
#define THINDYN_SHADOWING_HPP

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "operators.hpp"
#include "rng.hpp"

namespace thindyn {

using MapFn = std::function<Vec(const Vec&)>;
using MapJacFn = std::function<Mat(const Vec&)>;

// max consecutive defect of a backward-orbit window under the map
inline double pseudo_defect(const std::vector<Vec>& points, const MapFn& map) {
    if (points.size() < 2)
        throw std::invalid_argument("pseudo_defect: need at least two points");
    double d = 0.0;
    for (std::size_t n = 0; n + 1 < points.size(); ++n)
        d = std::max(d, (points[n + 1] - map(points[n])).norm());
    return d;
}

// finite window z_{-N}, ..., z_0 with its recomputed defect
struct PseudoTrajectory {
    std::vector<Vec> points;
    double delta = 0.0;

    int window() const { return static_cast<int>(points.size()) - 1; }
};

inline PseudoTrajectory make_pseudo_trajectory(std::vector<Vec> points, const MapFn& map) {
    PseudoTrajectory p;
    p.delta = pseudo_defect(points, map);
    p.points = std::move(points);
    return p;
}

// hyperbolic structure of a fixed point of the map
struct MapFixedPoint {
    Vec point;
    Mat stable_basis;   // orthonormal columns spanning |sigma| < 1 directions
    Mat unstable_basis; // orthonormal columns spanning |sigma| > 1 directions
};

inline MapFixedPoint analyze_fixed_point(const Vec& point, const MapJacFn& jac) {
    MapFixedPoint fp;
    fp.point = point;
    const Mat j = jac(point);
    const int m = static_cast<int>(j.rows());
    Eigen::EigenSolver<Mat> es(j);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("analyze_fixed_point: eigensolver failed");
    std::vector<int> stab, unstab;
    for (int i = 0; i < m; ++i) {
        const double mag = std::abs(es.eigenvalues()[i]);
        if (std::abs(es.eigenvectors().col(i).imag().norm()) > 1e-9 * es.eigenvectors().col(i).norm())
            throw std::runtime_error("analyze_fixed_point: complex eigenvector (not gradient-like)");
        (mag < 1.0 ? stab : unstab).push_back(i);
    }
    auto orthobasis = [&](const std::vector<int>& idx) {
        if (idx.empty()) return Mat(m, 0);
        Mat b(m, static_cast<int>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) b.col(k) = es.eigenvectors().col(idx[k]).real();
        Eigen::HouseholderQR<Mat> qr(b);
        Mat q = qr.householderQ() * Mat::Identity(m, static_cast<int>(idx.size()));
        return q;
    };
    fp.stable_basis = orthobasis(stab);
    fp.unstable_basis = orthobasis(unstab);
    return fp;
}

struct ShadowResult {
    std::vector<Vec> orbit;
    double orbit_defect = 0.0;
    double sup_dist = 0.0;
    double l_ratio = 0.0;
};

struct ShadowOptions {
    int max_iter = 50;
    double orbit_tol = 1e-12;
    double neighborhood_radius = 0.0; // 0: no containment check
};

// Newton solve on the sequence-space residual {x_{n+1} - T(x_n)} with the
// window closed by subspace conditions at the nearest fixed points: the left
// endpoint is pinned to the unstable affine subspace, the right endpoint to
// the stable one, plus pin rows when the unstable dimensions differ.
inline ShadowResult shadow_solve(const MapFn& map, const MapJacFn& jac,
                                 const PseudoTrajectory& pseudo,
                                 const std::vector<MapFixedPoint>& fixed_points,
                                 const ShadowOptions& opts = {}) {
    const int n_win = pseudo.window();
    if (n_win < 10) throw std::invalid_argument("shadow_solve: window must span >= 10 steps");
    if (fixed_points.empty())
        throw std::invalid_argument("shadow_solve: need the map's fixed points");
    const int m = static_cast<int>(pseudo.points.front().size());

    if (opts.neighborhood_radius > 0.0)
        for (const Vec& z : pseudo.points)
            if (z.norm() > opts.neighborhood_radius)
                throw std::runtime_error(
                    "shadow_solve: pseudo-orbit outside shadowing neighborhood");

    auto nearest = [&](const Vec& z) {
        int best = 0;
        double bd = (z - fixed_points[0].point).norm();
        for (std::size_t i = 1; i < fixed_points.size(); ++i) {
            const double d = (z - fixed_points[i].point).norm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(i);
            }
        }
        return fixed_points[best];
    };
    const MapFixedPoint left = nearest(pseudo.points.front());
    const MapFixedPoint right = nearest(pseudo.points.back());
    const int u_l = static_cast<int>(left.unstable_basis.cols());
    const int u_r = static_cast<int>(right.unstable_basis.cols());
    const int pin = std::abs(u_l - u_r);
    const int rows = n_win * m + (m - u_l) + u_r + pin;
    const int cols = (n_win + 1) * m;
    if (rows != cols)
        throw std::runtime_error("shadow_solve: closure produced a non-square system");

    std::vector<Vec> x = pseudo.points;
    std::vector<double> history;
    for (int it = 0; it <= opts.max_iter; ++it) {
        // residual
        Vec g = Vec::Zero(rows);
        double orbit_res = 0.0;
        for (int n = 0; n < n_win; ++n) {
            const Vec r = x[n + 1] - map(x[n]);
            g.segment(n * m, m) = r;
            orbit_res = std::max(orbit_res, r.lpNorm<Eigen::Infinity>());
        }
        int row = n_win * m;
        const Vec dl = x.front() - left.point;
        g.segment(row, m - u_l) = left.stable_basis.transpose() * dl;
        row += m - u_l;
        const Vec dr = x.back() - right.point;
        g.segment(row, u_r) = right.unstable_basis.transpose() * dr;
        row += u_r;
        if (u_l > u_r)
            for (int k = 0; k < pin; ++k)
                g[row + k] = left.unstable_basis.col(k).dot(x.front() - pseudo.points.front());
        else if (u_r > u_l)
            for (int k = 0; k < pin; ++k)
                g[row + k] = right.stable_basis.col(k).dot(x.back() - pseudo.points.back());

        history.push_back(orbit_res);
        if (orbit_res <= opts.orbit_tol && g.lpNorm<Eigen::Infinity>() <= 1e2 * opts.orbit_tol) {
            ShadowResult out;
            out.orbit = x;
            out.orbit_defect = orbit_res;
            for (int n = 0; n <= n_win; ++n)
                out.sup_dist = std::max(out.sup_dist, (x[n] - pseudo.points[n]).norm());
            out.l_ratio = (pseudo.delta > 1e-15) ? out.sup_dist / pseudo.delta : 0.0;
            return out;
        }
        if (it == opts.max_iter) break;

        // block-bidiagonal Jacobian plus closure rows; dense at desk scale
        Mat jmat = Mat::Zero(rows, cols);
        for (int n = 0; n < n_win; ++n) {
            jmat.block(n * m, n * m, m, m) = -jac(x[n]);
            jmat.block(n * m, (n + 1) * m, m, m) = Mat::Identity(m, m);
        }
        row = n_win * m;
        jmat.block(row, 0, m - u_l, m) = left.stable_basis.transpose();
        row += m - u_l;
        jmat.block(row, n_win * m, u_r, m) = right.unstable_basis.transpose();
        row += u_r;
        if (u_l > u_r)
            for (int k = 0; k < pin; ++k)
                jmat.block(row + k, 0, 1, m) = left.unstable_basis.col(k).transpose();
        else if (u_r > u_l)
            for (int k = 0; k < pin; ++k)
                jmat.block(row + k, n_win * m, 1, m) = right.stable_basis.col(k).transpose();

        const Vec step = jmat.partialPivLu().solve(-g);
        for (int n = 0; n <= n_win; ++n) x[n] += step.segment(n * m, m);
    }
    std::string hist;
    for (double h : history) hist += " " + std::to_string(h);
    throw std::runtime_error("shadow_solve: Newton did not converge, residual history:" + hist);
}

// L-hat = max shadowing ratio over the sample set
inline double lipschitz_shadowing_estimate(const MapFn& map, const MapJacFn& jac,
                                           const std::vector<PseudoTrajectory>& samples,
                                           const std::vector<MapFixedPoint>& fixed_points,
                                           const ShadowOptions& opts = {}) {
    if (samples.empty())
        throw std::invalid_argument("lipschitz_shadowing_estimate: empty sample set");
    double worst = 0.0;
    for (const auto& p : samples) {
        const ShadowResult r = shadow_solve(map, jac, p, fixed_points, opts);
        worst = std::max(worst, r.l_ratio);
    }
    return worst;
}

// symmetric Hausdorff distance between finite samples under a caller metric
template <typename Point, typename Metric>
double hausdorff_distance(const std::vector<Point>& a, const std::vector<Point>& b,
                          Metric&& dist) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("hausdorff_distance: empty point set");
    double worst = 0.0;
    auto directed = [&](const std::vector<Point>& from, const std::vector<Point>& to) {
        double s = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) best = std::min(best, dist(p, q));
            s = std::max(s, best);
        }
        return s;
    };
    worst = std::max(directed(a, b), directed(b, a));
    return worst;
}

struct AttractorBoundReport {
    double lhs = 0.0;     // Hausdorff distance of the reduced attractors
    double rhs = 0.0;     // L-hat * sup-ball map distance + sampling tolerance
    double map_gap = 0.0; // sup-ball map distance alone
    bool holds = false;
};

// Checks dist_H(A,B) <= L-hat * ||T_A - T_B||_inf over the sampling ball, the
// shadowing route to the attractor-distance bound.
inline AttractorBoundReport attractor_bound_check(const std::vector<Vec>& attr_a,
                                                  const std::vector<Vec>& attr_b,
                                                  const MapFn& map_a, const MapFn& map_b,
                                                  double l_hat, const Vec& weights,
                                                  double ball_radius, int nodes_per_axis,
                                                  double sampling_tol, bool hyperbolic_ok) {
    if (!hyperbolic_ok)
        throw std::runtime_error("attractor_bound_check: hyperbolicity hypothesis violated");
    auto wdist = [&](const Vec& p, const Vec& q) {
        return weights.cwiseProduct(p - q).norm();
    };
    AttractorBoundReport rep;
    rep.lhs = hausdorff_distance(attr_a, attr_b, wdist);
    // sup of the weighted map gap over a tensor grid covering the ball
    const int m = static_cast<int>(weights.size());
    int total = 1;
    for (int i = 0; i < m; ++i) total *= nodes_per_axis;
    const double h = 2.0 * ball_radius / (nodes_per_axis - 1);
    for (int t = 0; t < total; ++t) {
        int idx = t;
        Vec q(m);
        for (int i = 0; i < m; ++i) {
            q[i] = -ball_radius + h * (idx % nodes_per_axis);
            idx /= nodes_per_axis;
        }
        if (q.norm() > ball_radius) continue;
        const Vec z = weights.cwiseInverse().cwiseProduct(q);
        rep.map_gap = std::max(rep.map_gap, wdist(map_a(z), map_b(z)));
    }
    rep.rhs = l_hat * rep.map_gap + sampling_tol;
    rep.holds = rep.lhs <= rep.rhs;
    return rep;
}

} // namespace thindyn

#endif
