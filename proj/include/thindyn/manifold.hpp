#ifndef THINDYN_MANIFOLD_HPP
#define THINDYN_MANIFOLD_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "semiflow.hpp"

namespace thindyn {

// Spectral-gap dimension report: both sufficient conditions evaluated by
// direct substitution into the limit spectrum.
struct GapReport {
    int m = 0;
    double gap = 0.0;       // lambda_{m+1} - lambda_m
    double gap_rhs = 0.0;   // 3 (kappa+2) L_F (lambda_m^a + lambda_{m+1}^a)
    double low_lhs = 0.0;   // lambda_m^{1-a}
    double low_rhs = 0.0;   // 6 (kappa+2) L_F / (1-a)
    bool gap_ok = false;
    bool low_ok = false;
    bool satisfied = false;
};

inline GapReport evaluate_gap(const Vec& values, int m, double l_f, double kappa, double alpha) {
    GapReport r;
    r.m = m;
    r.gap = values[m] - values[m - 1];
    r.gap_rhs = 3.0 * (kappa + 2.0) * l_f *
                (std::pow(values[m - 1], alpha) + std::pow(values[m], alpha));
    r.low_lhs = std::pow(values[m - 1], 1.0 - alpha);
    r.low_rhs = 6.0 * (kappa + 2.0) * l_f / (1.0 - alpha);
    r.gap_ok = r.gap >= r.gap_rhs;
    r.low_ok = r.low_lhs >= r.low_rhs;
    r.satisfied = r.gap_ok && r.low_ok;
    return r;
}

// smallest m <= m_max satisfying both conditions, or the best candidate with
// satisfied = false; an unsatisfied report is a data outcome, not an error
inline GapReport select_gap_dimension(const Vec& values, double l_f, double kappa, double alpha,
                                      int m_max) {
    if (values.size() < 2)
        throw std::invalid_argument("select_gap_dimension: need at least two eigenvalues");
    m_max = std::min<int>(m_max, static_cast<int>(values.size()) - 1);
    GapReport best;
    double best_score = -1.0;
    for (int m = 1; m <= m_max; ++m) {
        GapReport r = evaluate_gap(values, m, l_f, kappa, alpha);
        if (r.satisfied) return r;
        const double score = (r.gap_rhs > 0.0 ? r.gap / r.gap_rhs : 1.0);
        if (score > best_score) {
            best_score = score;
            best = r;
        }
    }
    return best;
}

inline GapReport select_gap_dimension(const EigenBasis& basis, double l_f, double kappa,
                                      double alpha, int m_max) {
    return select_gap_dimension(basis.values, l_f, kappa, alpha, m_max);
}

struct GapGrowthReport {
    int n0 = -1;        // first index from which the linear growth bracket holds
    int offset = 0;     // index convention that fits best
    bool satisfied = false;
};

// Verifies the asymptotically linear growth of consecutive spectral gaps,
// trying a few index offsets because the bracket's indexing convention is
// ambiguous against lambda_1 = mu.
inline GapGrowthReport gap_growth_check(const Vec& values) {
    if (values.size() < 20)
        throw std::invalid_argument("gap_growth_check: need at least 20 eigenvalues");
    GapGrowthReport best;
    const int count = static_cast<int>(values.size()) - 1;
    for (int off = -2; off <= 2; ++off) {
        int n0 = -1;
        for (int start = 1; start <= count; ++start) {
            bool ok = true;
            for (int m = start; m <= count; ++m) {
                const double gap = values[m] - values[m - 1];
                const double base = pi * pi * (m + 1 + off);
                if (base <= 0.0 || gap < 0.9 * base || gap > 3.3 * base) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                n0 = start;
                break;
            }
        }
        if (n0 > 0 && (!best.satisfied || n0 < best.n0)) {
            best.n0 = n0;
            best.offset = off;
            best.satisfied = true;
        }
    }
    return best;
}

// Graph of the inertial manifold over the span of the first m modes: tail
// coefficients on a uniform tensor grid in the weighted coordinates, with
// multilinear interpolation and compact support.
struct GraphFn {
    int m = 0;
    int nodes_per_axis = 0;
    double radius = 0.0;   // grid half-width = 2 R'
    Vec lambda_w;          // coordinate weights lambda_i^alpha (shared between systems)
    Vec tail_values;       // eigenvalues of the tail modes m+1..K
    Mat values;            // tail coefficients, one column per grid node
    double lipschitz = 0.0;

    int num_nodes() const {
        int n = 1;
        for (int i = 0; i < m; ++i) n *= nodes_per_axis;
        return n;
    }
    double spacing() const { return 2.0 * radius / (nodes_per_axis - 1); }

    Vec node_coords(int idx) const {
        Vec q(m);
        for (int i = 0; i < m; ++i) {
            q[i] = -radius + spacing() * (idx % nodes_per_axis);
            idx /= nodes_per_axis;
        }
        return q;
    }

    // multilinear interpolation; zero outside the grid box (compact support)
    Vec value_at(const Vec& q) const {
        Vec out = Vec::Zero(values.rows());
        Eigen::VectorXi base(m);
        Vec frac(m);
        for (int i = 0; i < m; ++i) {
            if (std::abs(q[i]) > radius) return out;
            const double t = (q[i] + radius) / spacing();
            int b = static_cast<int>(std::floor(t));
            b = std::clamp(b, 0, nodes_per_axis - 2);
            base[i] = b;
            frac[i] = std::clamp(t - b, 0.0, 1.0);
        }
        const int corners = 1 << m;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            int idx = 0, strideAcc = 1;
            for (int i = 0; i < m; ++i) {
                const int bit = (c >> i) & 1;
                w *= bit ? frac[i] : (1.0 - frac[i]);
                idx += (base[i] + bit) * strideAcc;
                strideAcc *= nodes_per_axis;
            }
            if (w != 0.0) out += w * values.col(idx);
        }
        return out;
    }

    double tail_norm_alpha(const Vec& tail, double alpha) const {
        double s = 0.0;
        for (int j = 0; j < tail.size(); ++j)
            s += std::pow(tail_values[j], 2.0 * alpha) * tail[j] * tail[j];
        return std::sqrt(s);
    }
};

struct GraphOptions {
    int nodes_per_axis = 41;
    double step = 0.125;        // transform advance time, a multiple of the substep
    double tol = 1e-8;          // sup-norm convergence of successive graphs
    int max_iter = 200;
    double source_factor = 1.5; // source grid radius = factor * target radius
};

namespace detail {

// invert the bilinear map of a quadrilateral; returns false if the target is
// not inside (local coordinates outside [0,1]^2)
inline bool invert_bilinear(const double px[4], const double py[4], double tx, double ty,
                            double& xi, double& eta) {
    xi = 0.5;
    eta = 0.5;
    for (int it = 0; it < 25; ++it) {
        const double n0 = (1 - xi) * (1 - eta), n1 = xi * (1 - eta), n2 = (1 - xi) * eta,
                     n3 = xi * eta;
        const double fx = n0 * px[0] + n1 * px[1] + n2 * px[2] + n3 * px[3] - tx;
        const double fy = n0 * py[0] + n1 * py[1] + n2 * py[2] + n3 * py[3] - ty;
        const double dxdxi = (1 - eta) * (px[1] - px[0]) + eta * (px[3] - px[2]);
        const double dxdeta = (1 - xi) * (px[2] - px[0]) + xi * (px[3] - px[1]);
        const double dydxi = (1 - eta) * (py[1] - py[0]) + eta * (py[3] - py[2]);
        const double dydeta = (1 - xi) * (py[2] - py[0]) + xi * (py[3] - py[1]);
        const double det = dxdxi * dydeta - dxdeta * dydxi;
        if (std::abs(det) < 1e-300) return false;
        const double dxi = (-fx * dydeta + fy * dxdeta) / det;
        const double deta = (-fy * dxdxi + fx * dydxi) / det;
        xi += dxi;
        eta += deta;
        if (std::abs(dxi) + std::abs(deta) < 1e-13) break;
    }
    const double tolc = 1e-9;
    return xi >= -tolc && xi <= 1.0 + tolc && eta >= -tolc && eta <= 1.0 + tolc;
}

} // namespace detail

// Graph-transform iteration: advance the states over a strictly larger source
// grid, re-fit the tail components over the new base coordinates, and repeat
// until successive graphs agree in the sup fractional norm.
inline GraphFn compute_graph(const EigenBasis& basis, const NonlinearOperator* nl,
                             const Stepper& stepper, int m, double support_radius,
                             const Vec& lambda_w, double alpha, const GraphOptions& opts = {},
                             const std::vector<Vec>& validation_states = {}) {
    if (m < 1 || m > 2)
        throw std::invalid_argument("compute_graph: tensor re-gridding implemented for m <= 2");
    if (m >= basis.count())
        throw std::invalid_argument("compute_graph: basis too small for the requested dimension");
    const int K = basis.count();
    const int tail = K - m;

    GraphFn g;
    g.m = m;
    g.nodes_per_axis = opts.nodes_per_axis;
    g.radius = 2.0 * support_radius;
    g.lambda_w = lambda_w.head(m);
    g.tail_values = basis.values.tail(tail);
    g.values = Mat::Zero(tail, g.num_nodes());

    // validation: the supplied states must project inside the grid
    for (const Vec& u : validation_states) {
        const Vec c = basis.coefficients(u);
        for (int i = 0; i < m; ++i)
            if (std::abs(lambda_w[i] * c[i]) > g.radius)
                throw std::runtime_error("compute_graph: attractor not covered by the graph grid");
    }

    // source grid: same spacing, larger radius
    const double h = g.spacing();
    const int half_src = static_cast<int>(std::ceil(opts.source_factor * g.radius / h));
    const int n_src = 2 * half_src + 1;
    const int total_src = (m == 1) ? n_src : n_src * n_src;

    auto src_coords = [&](int idx) {
        Vec q(m);
        for (int i = 0; i < m; ++i) {
            q[i] = h * ((idx % n_src) - half_src);
            idx /= n_src;
        }
        return q;
    };

    // Far-out source states exceed the trajectory guard by construction; they
    // sit beyond the gate and decay linearly, so the transform uses a guard
    // scaled to the source box instead.
    Stepper transform_stepper = stepper;
    {
        Vec corner(K);
        corner.setZero();
        for (int i = 0; i < m; ++i) corner[i] = opts.source_factor * g.radius / g.lambda_w[i];
        const double corner_sup = basis.reconstruct(corner).lpNorm<Eigen::Infinity>();
        transform_stepper.sup_guard = std::max(stepper.sup_guard, 4.0 * corner_sup);
    }

    double contraction = 0.0;
    for (int it = 0; it < opts.max_iter; ++it) {
        // advance every source node state through the transform step
        Mat img_q(m, total_src);
        Mat img_tail(tail, total_src);
        for (int s = 0; s < total_src; ++s) {
            const Vec q = src_coords(s);
            Vec c(K);
            for (int i = 0; i < m; ++i) c[i] = q[i] / g.lambda_w[i];
            c.tail(tail) = g.value_at(q);
            c = advance_coefficients(basis, nl, c, opts.step, transform_stepper);
            for (int i = 0; i < m; ++i) img_q(i, s) = g.lambda_w[i] * c[i];
            img_tail.col(s) = c.tail(tail);
        }

        // re-grid the scattered images onto the target nodes
        Mat fresh = Mat::Zero(tail, g.num_nodes());
        if (m == 1) {
            std::vector<int> order(total_src);
            for (int s = 0; s < total_src; ++s) order[s] = s;
            std::sort(order.begin(), order.end(),
                      [&](int a, int b) { return img_q(0, a) < img_q(0, b); });
            for (int t = 0; t < g.num_nodes(); ++t) {
                const double x = g.node_coords(t)[0];
                // bracketing pair in the sorted images
                int lo = -1;
                for (int k = 0; k + 1 < total_src; ++k)
                    if (img_q(0, order[k]) <= x && x <= img_q(0, order[k + 1])) {
                        lo = k;
                        break;
                    }
                if (lo < 0) continue; // preimage left the source grid: keep zero
                const double a = img_q(0, order[lo]), b = img_q(0, order[lo + 1]);
                const double w = (b > a) ? (x - a) / (b - a) : 0.0;
                fresh.col(t) =
                    (1.0 - w) * img_tail.col(order[lo]) + w * img_tail.col(order[lo + 1]);
            }
        } else {
            // structured quads from the source connectivity; pick sound inversions
            Vec best_quality = Vec::Constant(g.num_nodes(), -1.0);
            for (int cx = 0; cx + 1 < n_src; ++cx)
                for (int cy = 0; cy + 1 < n_src; ++cy) {
                    const int s00 = cx + n_src * cy, s10 = s00 + 1, s01 = s00 + n_src,
                              s11 = s01 + 1;
                    const double px[4] = {img_q(0, s00), img_q(0, s10), img_q(0, s01),
                                          img_q(0, s11)};
                    const double py[4] = {img_q(1, s00), img_q(1, s10), img_q(1, s01),
                                          img_q(1, s11)};
                    const double xmin = std::min({px[0], px[1], px[2], px[3]});
                    const double xmax = std::max({px[0], px[1], px[2], px[3]});
                    const double ymin = std::min({py[0], py[1], py[2], py[3]});
                    const double ymax = std::max({py[0], py[1], py[2], py[3]});
                    const int i0 = std::max(0, (int)std::ceil((xmin + g.radius) / h - 1e-12));
                    const int i1 = std::min(g.nodes_per_axis - 1,
                                            (int)std::floor((xmax + g.radius) / h + 1e-12));
                    const int j0 = std::max(0, (int)std::ceil((ymin + g.radius) / h - 1e-12));
                    const int j1 = std::min(g.nodes_per_axis - 1,
                                            (int)std::floor((ymax + g.radius) / h + 1e-12));
                    for (int j = j0; j <= j1; ++j)
                        for (int i = i0; i <= i1; ++i) {
                            const double tx = -g.radius + h * i, ty = -g.radius + h * j;
                            double xi, eta;
                            if (!detail::invert_bilinear(px, py, tx, ty, xi, eta)) continue;
                            const double quality =
                                std::min({xi, 1.0 - xi, eta, 1.0 - eta});
                            const int t = i + g.nodes_per_axis * j;
                            if (quality <= best_quality[t]) continue;
                            best_quality[t] = quality;
                            const double n0 = (1 - xi) * (1 - eta), n1 = xi * (1 - eta),
                                         n2 = (1 - xi) * eta, n3 = xi * eta;
                            fresh.col(t) = n0 * img_tail.col(s00) + n1 * img_tail.col(s10) +
                                           n2 * img_tail.col(s01) + n3 * img_tail.col(s11);
                        }
                }
        }

        // compact support at and beyond the grid radius
        for (int t = 0; t < g.num_nodes(); ++t)
            if (g.node_coords(t).norm() >= g.radius - 1e-12) fresh.col(t).setZero();

        double diff = 0.0;
        for (int t = 0; t < g.num_nodes(); ++t)
            diff = std::max(diff, g.tail_norm_alpha(fresh.col(t) - g.values.col(t), alpha));
        contraction = diff;
        g.values = fresh;
        if (diff <= opts.tol) {
            // measured Lipschitz constant over grid neighbours
            double lip = 0.0;
            if (m == 1) {
                for (int t = 0; t + 1 < g.num_nodes(); ++t)
                    lip = std::max(lip, g.tail_norm_alpha(g.values.col(t + 1) - g.values.col(t),
                                                          alpha) /
                                            h);
            } else {
                for (int j = 0; j < g.nodes_per_axis; ++j)
                    for (int i = 0; i < g.nodes_per_axis; ++i) {
                        const int t = i + g.nodes_per_axis * j;
                        if (i + 1 < g.nodes_per_axis)
                            lip = std::max(lip, g.tail_norm_alpha(g.values.col(t + 1) -
                                                                      g.values.col(t),
                                                                  alpha) /
                                                    h);
                        if (j + 1 < g.nodes_per_axis)
                            lip = std::max(
                                lip, g.tail_norm_alpha(g.values.col(t + g.nodes_per_axis) -
                                                           g.values.col(t),
                                                       alpha) /
                                         h);
                    }
            }
            g.lipschitz = lip;
            if (lip >= 1.0)
                throw std::runtime_error(
                    "compute_graph: converged graph has Lipschitz constant >= 1, spectral gap "
                    "insufficient in practice");
            return g;
        }
    }
    throw std::runtime_error("compute_graph: iteration budget exhausted, last increment " +
                             std::to_string(contraction));
}

// Reduced finite-dimensional system: coordinates are the coefficients of the
// first m modes, the vector field is the projected gated nonlinearity
// evaluated through the graph.
struct ReducedSystem {
    int m = 0;
    const EigenBasis* basis = nullptr;
    const NonlinearOperator* nl = nullptr;
    const GraphFn* graph = nullptr;
    Vec lambda_lin; // first m eigenvalues of this system
    Vec lambda_w;   // shared coordinate weights
    Stepper stepper;
    double support_radius = 0.0; // R'

    Vec weighted(const Vec& z) const { return lambda_w.cwiseProduct(z); }

    Vec nonlinear_part(const Vec& z) const {
        if (!nl) return Vec::Zero(m);
        const int K = basis->count();
        Vec c = Vec::Zero(K);
        c.head(m) = z;
        c.tail(K - m) = graph->value_at(weighted(z));
        const Vec u = basis->reconstruct(c);
        const Vec fu = nl->apply(u);
        return basis->mass_vectors.leftCols(m).transpose() * fu;
    }

    Vec vector_field(const Vec& z) const {
        return nonlinear_part(z) - lambda_lin.cwiseProduct(z);
    }

    // residual of the reduced equilibrium equation at z
    double fixed_point_residual(const Vec& z) const { return vector_field(z).norm(); }
};

// time-one map of the reduced system, same exponential substep contract
inline Vec reduced_time_one(const ReducedSystem& sys, Vec z, double t = 1.0) {
    const double dt = sys.stepper.dt;
    const int steps = static_cast<int>(std::llround(t / dt));
    if (std::abs(steps * dt - t) > 1e-12 * std::max(1.0, t))
        throw std::invalid_argument("reduced_time_one: t must be a multiple of dt");
    Vec decay(sys.m), weight(sys.m);
    for (int i = 0; i < sys.m; ++i) {
        decay[i] = std::exp(-sys.lambda_lin[i] * dt);
        weight[i] = (1.0 - decay[i]) / sys.lambda_lin[i];
    }
    for (int s = 0; s < steps; ++s) {
        if (z.norm() > 100.0 * std::max(1.0, sys.support_radius))
            throw std::runtime_error("reduced_time_one: coordinate blow-up guard hit");
        const Vec h = sys.nonlinear_part(z);
        z = decay.cwiseProduct(z) + weight.cwiseProduct(h);
    }
    return z;
}

// finite-difference Jacobian of the reduced time-one map
inline Mat reduced_time_one_jacobian(const ReducedSystem& sys, const Vec& z, double h = 1e-4) {
    Mat jac(sys.m, sys.m);
    for (int i = 0; i < sys.m; ++i) {
        Vec zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        jac.col(i) = (reduced_time_one(sys, zp) - reduced_time_one(sys, zm)) / (2.0 * h);
    }
    return jac;
}

// sup over grid nodes of || Phi_eps(p) - E Phi_0^eps(p) ||; alpha = 1/2
// evaluates the weighted energy form exactly, smaller alpha reports the
// within-basis spectral content (see projection_distance)
inline double graph_distance(const GraphFn& graph_eps, const GraphFn& graph_lim,
                             const EigenBasis& basis_eps, const EigenBasis& basis_lim,
                             const TransferOperators& tr, double alpha) {
    if (graph_eps.m != graph_lim.m || graph_eps.nodes_per_axis != graph_lim.nodes_per_axis ||
        std::abs(graph_eps.radius - graph_lim.radius) > 1e-12)
        throw std::invalid_argument("graph_distance: grid mismatch");
    const int m = graph_eps.m;
    double worst = 0.0;
    for (int t = 0; t < graph_eps.num_nodes(); ++t) {
        Vec ce = Vec::Zero(basis_eps.count());
        ce.tail(basis_eps.count() - m) = graph_eps.values.col(t);
        Vec cl = Vec::Zero(basis_lim.count());
        cl.tail(basis_lim.count() - m) = graph_lim.values.col(t);
        const Vec d = basis_eps.reconstruct(ce) - tr.lift(basis_lim.reconstruct(cl));
        const double nd = (alpha == 0.5) ? std::sqrt(d.dot(basis_eps.stiffness * d))
                                         : basis_eps.norm_alpha(d, alpha, false);
        worst = std::max(worst, nd);
    }
    return worst;
}

struct ReducedMapDistance {
    double sup = 0.0;    // weighted-coordinate sup distance of the maps
    double sup_c1 = 0.0; // finite-difference C1 distance over the same nodes
};

// sup over a tensor grid covering the 2R' ball of the weighted map distance
// plus the matching first-derivative distance
inline ReducedMapDistance reduced_map_distance(const ReducedSystem& a, const ReducedSystem& b,
                                               int nodes_per_axis, double fd_step = 1e-4) {
    if (a.m != b.m) throw std::invalid_argument("reduced_map_distance: dimension mismatch");
    const int m = a.m;
    const double radius = 2.0 * std::max(a.support_radius, b.support_radius);
    const double h = 2.0 * radius / (nodes_per_axis - 1);
    int total = 1;
    for (int i = 0; i < m; ++i) total *= nodes_per_axis;
    Mat w = a.lambda_w.head(m).asDiagonal();
    Mat winv = a.lambda_w.head(m).cwiseInverse().asDiagonal();
    ReducedMapDistance out;
    for (int t = 0; t < total; ++t) {
        int idx = t;
        Vec q(m);
        for (int i = 0; i < m; ++i) {
            q[i] = -radius + h * (idx % nodes_per_axis);
            idx /= nodes_per_axis;
        }
        if (q.norm() > radius) continue;
        const Vec z = a.lambda_w.head(m).cwiseInverse().cwiseProduct(q);
        const Vec d = reduced_time_one(a, z) - reduced_time_one(b, z);
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += std::pow(a.lambda_w[i] * d[i], 2.0);
        out.sup = std::max(out.sup, std::sqrt(s));
        const Mat dj = reduced_time_one_jacobian(a, z, fd_step) -
                       reduced_time_one_jacobian(b, z, fd_step);
        const Mat weighted = w * dj * winv;
        out.sup_c1 = std::max(out.sup_c1, weighted.operatorNorm());
    }
    return out;
}

} // namespace thindyn

#endif
