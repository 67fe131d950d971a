#ifndef THINDYN_SEMIFLOW_HPP
#define THINDYN_SEMIFLOW_HPP

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nonlinearity.hpp"
#include "operators.hpp"

namespace thindyn {

// Exponential time differencing of first order in the computed eigenbasis:
// the linear part is integrated exactly mode-wise, the nonlinear term is
// frozen over each substep and weighted by (1 - e^{-lambda dt}) / lambda.
struct Stepper {
    double dt = 1.0 / 256.0;
    double sup_guard = 1e300; // abort threshold for the nodal sup norm
};

// advance spectral coefficients for total time `t`; nl == nullptr is the linear flow
inline Vec advance_coefficients(const EigenBasis& basis, const NonlinearOperator* nl, Vec c,
                                double t, const Stepper& stepper) {
    const int K = basis.count();
    if (c.size() != K) throw std::invalid_argument("advance_coefficients: coefficient size");
    const double dt = stepper.dt;
    const int steps = static_cast<int>(std::llround(t / dt));
    if (std::abs(steps * dt - t) > 1e-12 * std::max(1.0, t))
        throw std::invalid_argument("advance_coefficients: t must be a multiple of dt");
    Vec decay(K), weight(K);
    for (int i = 0; i < K; ++i) {
        const double l = basis.values[i];
        decay[i] = std::exp(-l * dt);
        weight[i] = (1.0 - decay[i]) / l;
    }
    for (int s = 0; s < steps; ++s) {
        if (nl) {
            const Vec u = basis.reconstruct(c);
            const double sup = u.lpNorm<Eigen::Infinity>();
            if (sup > stepper.sup_guard)
                throw std::runtime_error("advance_coefficients: sup-norm blow-up guard hit (" +
                                         std::to_string(sup) + "), check the cut-off radius");
            const Vec b = basis.mass_vectors.transpose() * nl->apply(u);
            c = decay.cwiseProduct(c) + weight.cwiseProduct(b);
        } else {
            c = decay.cwiseProduct(c);
        }
    }
    return c;
}

inline Vec time_one_map(const EigenBasis& basis, const NonlinearOperator* nl, const Vec& u,
                        const Stepper& stepper) {
    const Vec c = advance_coefficients(basis, nl, basis.coefficients(u), 1.0, stepper);
    return basis.reconstruct(c);
}

struct EquilibriumSet {
    std::vector<Vec> points;
    std::vector<Vec> spectra;        // leading linearization eigenvalues, descending
    std::vector<Mat> modes;          // matching eigenvectors (columns), mass-orthonormal
    std::vector<int> unstable_dims;
    std::vector<bool> hyperbolic;
    std::vector<double> residuals;
    double gap_tol = 1e-6;

    bool all_hyperbolic() const {
        for (bool h : hyperbolic)
            if (!h) return false;
        return !hyperbolic.empty();
    }
};

struct NewtonOptions {
    int max_iter = 60;
    double tol = 1e-11;     // operator-L2 residual; the roundoff floor of the
                            // assembled forms sits near 1e-12 at desk scales
    double dedup_tol = 1e-6;
    int spectrum_count = 8;
};

namespace detail {

// weighted mass for the symmetric linearization at state u
inline SpMat linearization_weight(const DiscreteOperator& op, const MappedGrid* grid,
                                  const ChannelProfile& profile, const NonlinearOperator& nl,
                                  const Vec& u) {
    const double th = nl.theta_of(u);
    Vec w(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) w[i] = th * nl.reaction.f_prime(u[i]);
    if (op.kind == OperatorKind::limit_1d)
        return assemble_weighted_mass_1d(profile, op.n - 1, w);
    return assemble_weighted_mass_2d(*grid, w);
}

} // namespace detail

// Newton on -Au + F~(u) = 0 with the symmetric linearization (the gate's
// rank-one term vanishes on the plateau where equilibria live). Seeds that
// fail to converge are recorded, not fatal.
inline EquilibriumSet find_equilibria(const std::vector<Vec>& seeds, const DiscreteOperator& op,
                                      const MappedGrid* grid, const ChannelProfile& profile,
                                      const NonlinearOperator& nl, const NewtonOptions& opts = {}) {
    if (seeds.empty()) throw std::invalid_argument("find_equilibria: empty seed list");
    EquilibriumSet out;
    const auto& mass_fac = op.mass_solver();
    auto op_norm = [&](const Vec& r) {
        const Vec mr = mass_fac.solve(r);
        return std::sqrt(mr.dot(r));
    };

    for (const Vec& seed : seeds) {
        Vec u = seed;
        bool ok = false;
        double res = 0.0;
        for (int it = 0; it < opts.max_iter; ++it) {
            const Vec fu = nl.apply(u);
            const Vec r = op.mass * fu - op.stiffness * u;
            res = op_norm(r);
            if (res <= opts.tol) { ok = true; break; }
            SpMat jac = op.stiffness - detail::linearization_weight(op, grid, profile, nl, u);
            Eigen::SparseLU<SpMat> lu(jac);
            if (lu.info() != Eigen::Success) break;
            const Vec step = lu.solve(r);
            // damped update: accept the longest step that reduces the residual
            double t = 1.0;
            Vec best = u + step;
            for (int half = 0; half < 12; ++half) {
                const Vec cand = u + t * step;
                const Vec rc = op.mass * nl.apply(cand) - op.stiffness * cand;
                if (op_norm(rc) < res) { best = cand; break; }
                t *= 0.5;
            }
            u = best;
        }
        if (!ok) continue;
        bool dup = false;
        for (const Vec& p : out.points) {
            Vec d = p - u;
            if (std::sqrt(d.dot(op.mass * d)) < opts.dedup_tol) { dup = true; break; }
        }
        if (dup) continue;

        // linearization spectrum: smallest pencil eigenvalues of (K - W, M)
        const SpMat w = detail::linearization_weight(op, grid, profile, nl, u);
        Vec pvals;
        Mat pvecs;
        pencil_smallest(op.stiffness - w, op.mass, nl.reaction.Lf + 1.0,
                        std::min(opts.spectrum_count, op.n), pvals, pvecs);
        Vec lin = -pvals; // descending linearization eigenvalues
        int udim = 0;
        bool hyp = true;
        for (int i = 0; i < lin.size(); ++i) {
            if (lin[i] > 0.0) ++udim;
            if (std::abs(lin[i]) < out.gap_tol) hyp = false;
        }
        out.points.push_back(u);
        out.spectra.push_back(lin);
        out.modes.push_back(pvecs);
        out.unstable_dims.push_back(udim);
        out.hyperbolic.push_back(hyp);
        out.residuals.push_back(res);
    }
    return out;
}

struct Connection {
    int from = -1, to = -1;          // equilibrium indices; to = -1 if unresolved
    std::vector<Vec> samples;        // nodal states, time-one spacing plus a dense first unit
    bool resolved = false;
};

struct AttractorApprox {
    EquilibriumSet equilibria;
    std::vector<Connection> connections;
    NormKind norm_tag = NormKind::energy_eps;

    std::vector<Vec> all_points() const {
        std::vector<Vec> pts = equilibria.points;
        for (const auto& c : connections)
            pts.insert(pts.end(), c.samples.begin(), c.samples.end());
        return pts;
    }
};

struct AttractorOptions {
    double push = 1e-4;      // launch offset along unstable directions
    double land_tol = 1e-8;  // distance to a stable equilibrium that ends a trajectory
    int max_units = 200;     // time-one budget per connection
    int dense_first = 20;    // extra samples inside the first time unit
};

// Launch trajectories along every unstable direction and integrate until they
// land near a stable equilibrium; demands hyperbolicity up front.
inline AttractorApprox approximate_attractor(const EquilibriumSet& eqs, const EigenBasis& basis,
                                             const NonlinearOperator& nl, const Stepper& stepper,
                                             const AttractorOptions& opts = {}) {
    if (!eqs.all_hyperbolic())
        throw std::runtime_error(
            "approximate_attractor: non-hyperbolic equilibrium, hypothesis of the "
            "attractor-distance theory violated");
    AttractorApprox out;
    out.equilibria = eqs;
    const int ne = static_cast<int>(eqs.points.size());
    for (int e = 0; e < ne; ++e) {
        for (int dir = 0; dir < eqs.unstable_dims[e]; ++dir) {
            for (double sign : {+1.0, -1.0}) {
                Connection con;
                con.from = e;
                Vec u = eqs.points[e] + sign * opts.push * eqs.modes[e].col(dir);
                Vec c = basis.coefficients(u);
                // dense sampling over the first unit, aligned to the substep
                const int unit_steps = static_cast<int>(std::llround(1.0 / stepper.dt));
                int done = 0;
                for (int k = 1; k <= opts.dense_first; ++k) {
                    const int target = (unit_steps * k) / opts.dense_first;
                    if (target > done) {
                        c = advance_coefficients(basis, &nl, c, (target - done) * stepper.dt,
                                                 stepper);
                        done = target;
                    }
                    con.samples.push_back(basis.reconstruct(c));
                }
                for (int unit = 1; unit < opts.max_units; ++unit) {
                    c = advance_coefficients(basis, &nl, c, 1.0, stepper);
                    const Vec state = basis.reconstruct(c);
                    con.samples.push_back(state);
                    // landing test against stable equilibria
                    for (int t = 0; t < ne; ++t) {
                        if (eqs.unstable_dims[t] != 0) continue;
                        Vec d = state - eqs.points[t];
                        if (std::sqrt(d.dot(basis.mass * d)) < opts.land_tol) {
                            con.to = t;
                            con.resolved = true;
                            break;
                        }
                    }
                    if (con.resolved) break;
                }
                out.connections.push_back(std::move(con));
            }
        }
    }
    return out;
}

// sup over the probe family of || T_eps(E w0) - E T_0(w0) ||_{H^1_eps(Q)}
inline double time_one_distance(const std::vector<Vec>& w0_set, const EigenBasis& basis_channel,
                                const NonlinearOperator& nl_channel, const EigenBasis& basis_limit,
                                const NonlinearOperator& nl_limit_side,
                                const TransferOperators& tr, const Stepper& stepper) {
    if (w0_set.empty()) throw std::invalid_argument("time_one_distance: empty probe family");
    double worst = 0.0;
    for (const Vec& w0 : w0_set) {
        const Vec a = time_one_map(basis_channel, &nl_channel, tr.lift(w0), stepper);
        const Vec b = tr.lift(time_one_map(basis_limit, &nl_limit_side, w0, stepper));
        const Vec d = a - b;
        worst = std::max(worst, std::sqrt(d.dot(basis_channel.energy * d)));
    }
    return worst;
}

// sup over pairs of || T u - T w ||_{H^1_eps} / || u - w ||_{L2}
inline double smoothing_lipschitz(const EigenBasis& basis, const NonlinearOperator* nl,
                                  const Stepper& stepper,
                                  const std::vector<std::pair<Vec, Vec>>& pairs) {
    if (pairs.size() < 50)
        throw std::invalid_argument("smoothing_lipschitz: need at least 50 probe pairs");
    double worst = 0.0;
    for (const auto& [u, w] : pairs) {
        Vec d0 = u - w;
        const double den = std::sqrt(d0.dot(basis.mass * d0));
        if (den < 1e-14) continue; // 0/0 guard on identical pairs
        const Vec tu = time_one_map(basis, nl, u, stepper);
        const Vec tw = time_one_map(basis, nl, w, stepper);
        Vec d = tu - tw;
        worst = std::max(worst, std::sqrt(d.dot(basis.energy * d)) / den);
    }
    return worst;
}

// Lyapunov functional of the limit problem: integral of
// g ( u_x^2/2 + mu u^2/2 - W(u) ) with W the antiderivative of the reaction.
inline double limit_energy(const Vec& u, const DiscreteOperator& op, const ChannelProfile& profile,
                           const ReactionTerm& reaction) {
    auto antiderivative = [&](double s) {
        const double a = std::min(std::abs(s), 2.0 * reaction.M);
        const double inner = std::min(a, reaction.M);
        double w = reaction.a1 * inner * inner / 2.0 + reaction.a3 * std::pow(inner, 4) / 4.0;
        if (a > reaction.M) {
            // composite Simpson over the window transition
            const int nseg = 64;
            const double h = (a - reaction.M) / nseg;
            double acc = reaction.f(reaction.M) + reaction.f(a);
            for (int i = 1; i < nseg; ++i)
                acc += (i % 2 ? 4.0 : 2.0) * reaction.f(reaction.M + i * h);
            w += acc * h / 3.0;
        }
        return w;
    };
    const double quad = 0.5 * u.dot(op.stiffness * u);
    // integral of g W(u) by per-cell Gauss quadrature
    const int n = op.n - 1;
    const double h = 1.0 / n;
    double wint = 0.0;
    for (int i = 0; i < n; ++i)
        for (int q = 0; q < 2; ++q) {
            const double xi = (q == 0 ? -detail::gauss_point : detail::gauss_point);
            const double xg = (i + 0.5) * h + 0.5 * h * xi;
            const double N0 = 0.5 * (1.0 - xi), N1 = 0.5 * (1.0 + xi);
            wint += 0.5 * h * profile.g(xg) * antiderivative(N0 * u[i] + N1 * u[i + 1]);
        }
    return quad - wint;
}

} // namespace thindyn

#endif
