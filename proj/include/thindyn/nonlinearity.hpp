#ifndef THINDYN_NONLINEARITY_HPP
#define THINDYN_NONLINEARITY_HPP

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "operators.hpp"
#include "rng.hpp"

namespace thindyn {

namespace detail {
// C^2 quintic smoothstep and derivatives on [0,1]
inline double smoothstep5(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
inline double smoothstep5_d(double t) { return 30.0 * t * t * (1.0 - t) * (1.0 - t); }
inline double smoothstep5_dd(double t) { return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t); }
} // namespace detail

// Cubic reaction a1 s + a3 s^3 multiplied by a C^2 window that vanishes for
// |s| >= 2M, so the term and its first two derivatives are globally bounded
// while the original dynamics inside (-M, M) are untouched.
struct ReactionTerm {
    double a1 = 5.0;
    double a3 = -1.0;
    double M = std::sqrt(5.0);
    double Lf = 0.0; // sup of |f| + |f'| + |f''| after the cut

    double inside(double s) const { return a1 * s + a3 * s * s * s; }
    double inside_prime(double s) const { return a1 + 3.0 * a3 * s * s; }
    double inside_second(double s) const { return 6.0 * a3 * s; }

    double window(double s) const {
        const double a = std::abs(s);
        if (a <= M) return 1.0;
        if (a >= 2.0 * M) return 0.0;
        return 1.0 - detail::smoothstep5((a - M) / M);
    }
    double window_prime(double s) const {
        const double a = std::abs(s);
        if (a <= M || a >= 2.0 * M) return 0.0;
        const double sg = (s >= 0.0 ? 1.0 : -1.0);
        return -sg * detail::smoothstep5_d((a - M) / M) / M;
    }
    double window_second(double s) const {
        const double a = std::abs(s);
        if (a <= M || a >= 2.0 * M) return 0.0;
        return -detail::smoothstep5_dd((a - M) / M) / (M * M);
    }

    double f(double s) const { return inside(s) * window(s); }
    double f_prime(double s) const {
        return inside_prime(s) * window(s) + inside(s) * window_prime(s);
    }
    double f_second(double s) const {
        return inside_second(s) * window(s) + 2.0 * inside_prime(s) * window_prime(s) +
               inside(s) * window_second(s);
    }
};

inline ReactionTerm make_cubic_reaction(double a1, double a3, double M,
                                        bool require_dissipative = true) {
    if (M <= 0.0) throw std::invalid_argument("make_cubic_reaction: M must be positive");
    ReactionTerm r;
    r.a1 = a1;
    r.a3 = a3;
    r.M = M;
    if (require_dissipative) {
        for (int i = 0; i <= 256; ++i) {
            const double s = M + 2.0 * M * i / 256.0;
            if (r.inside(s) * s > 1e-12 || r.inside(-s) * (-s) > 1e-12)
                throw std::invalid_argument(
                    "make_cubic_reaction: f(s) s <= 0 fails beyond the threshold M");
        }
    }
    // certified upper bound: dense scan with a small safety factor
    double lf = 0.0;
    for (int i = 0; i <= 32768; ++i) {
        const double s = -3.0 * M + 6.0 * M * i / 32768.0;
        lf = std::max(lf, std::abs(r.f(s)) + std::abs(r.f_prime(s)) + std::abs(r.f_second(s)));
    }
    r.Lf = 1.001 * lf;
    return r;
}

// pointwise application of the reaction on nodal values
inline Vec nemytskii(const Vec& u, const ReactionTerm& reaction) {
    Vec out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = reaction.f(u[i]);
    return out;
}

// Radial gate profile: 1 below R^2, 0 above 4R^2, C^2 quintic in between.
// The argument is the squared gating norm.
struct Cutoff {
    double R = 1.0;

    double value(double x) const {
        const double lo = R * R, hi = 4.0 * R * R;
        if (x <= lo) return 1.0;
        if (x >= hi) return 0.0;
        return 1.0 - detail::smoothstep5((x - lo) / (hi - lo));
    }
    double derivative(double x) const {
        const double lo = R * R, hi = 4.0 * R * R;
        if (x <= lo || x >= hi) return 0.0;
        return -detail::smoothstep5_d((x - lo) / (hi - lo)) / (hi - lo);
    }
    // Lipschitz constant of the derivative: max |theta''| = (10/sqrt(3)) / (3R^2)^2
    double lipschitz_derivative() const {
        return (10.0 / std::sqrt(3.0)) / (9.0 * R * R * R * R);
    }
};

enum class GateSpace { channel, lifted, limit };

// Prepared nonlinearity: Nemytskii term scaled by the radial gate evaluated
// in the configured fractional norm. `lifted` gates a limit-space field by
// the norm of its transverse-constant extension.
struct NonlinearOperator {
    ReactionTerm reaction;
    Cutoff gate;
    GateSpace space = GateSpace::limit;
    double alpha = 0.25;
    const EigenBasis* gate_basis = nullptr;     // channel basis for channel/lifted, limit basis otherwise
    const TransferOperators* transfer = nullptr; // required for lifted

    double gate_norm(const Vec& u) const {
        switch (space) {
        case GateSpace::channel: return gate_basis->norm_alpha(u, alpha, false);
        case GateSpace::lifted:  return gate_basis->norm_alpha(transfer->lift(u), alpha, false);
        case GateSpace::limit:   return gate_basis->norm_alpha(u, alpha, false);
        }
        return 0.0;
    }

    double theta_of(const Vec& u) const {
        const double n = gate_norm(u);
        return gate.value(n * n);
    }

    Vec apply(const Vec& u) const {
        const double th = theta_of(u);
        if (th == 0.0) return Vec::Zero(u.size());
        Vec out = nemytskii(u, reaction);
        if (th != 1.0) out *= th;
        return out;
    }

    Vec apply_plain(const Vec& u) const { return nemytskii(u, reaction); }

    // gating-space inner product <u,v> entering the gate's derivative
    double gate_inner(const Vec& u, const Vec& v) const {
        const EigenBasis& b = *gate_basis;
        Vec cu, cv;
        if (space == GateSpace::lifted) {
            cu = b.coefficients(transfer->lift(u));
            cv = b.coefficients(transfer->lift(v));
        } else {
            cu = b.coefficients(u);
            cv = b.coefficients(v);
        }
        double s = 0.0;
        for (int i = 0; i < b.count(); ++i)
            s += std::pow(b.values[i], 2.0 * alpha) * cu[i] * cv[i];
        return s;
    }

    // exact derivative: D(theta(||u||^2) f(u)) v
    Vec apply_derivative(const Vec& u, const Vec& v) const {
        const double n = gate_norm(u);
        const double th = gate.value(n * n);
        const double thp = gate.derivative(n * n);
        Vec out = Vec::Zero(u.size());
        if (th != 0.0)
            for (Eigen::Index i = 0; i < u.size(); ++i)
                out[i] = th * reaction.f_prime(u[i]) * v[i];
        if (thp != 0.0) {
            const double dgate = 2.0 * gate_inner(u, v);
            const Vec fu = nemytskii(u, reaction);
            out += (thp * dgate) * fu;
        }
        return out;
    }
};

// || F~_eps(E u0) - E F~_0^eps(u0) ||_{L2(Q)}; exact zero by construction,
// verified rather than assumed.
inline double commutation_check(const Vec& u0, const NonlinearOperator& nl_channel,
                                const NonlinearOperator& nl_lifted,
                                const TransferOperators& tr, const DiscreteOperator& op2) {
    const Vec lhs = nl_channel.apply(tr.lift(u0));
    const Vec rhs = tr.lift(nl_lifted.apply(u0));
    const Vec d = lhs - rhs;
    return std::sqrt(d.dot(op2.mass * d));
}

enum class NonlinearPair { channel_vs_lifted, lifted_vs_limit, channel_vs_limit };

struct RhoBeta {
    double rho = 0.0;
    double beta = 0.0;
};

// Closeness of a nonlinearity pair: value gap rho and a directional
// finite-difference estimate of the derivative gap beta.
inline RhoBeta rho_beta_metrics(const std::vector<Vec>& samples,
                                const std::vector<Vec>& directions, NonlinearPair pair,
                                const NonlinearOperator& nl_channel,
                                const NonlinearOperator& nl_lifted,
                                const NonlinearOperator& nl_limit,
                                const TransferOperators& tr, const DiscreteOperator& op2,
                                const DiscreteOperator& op1, const EigenBasis& basis0) {
    if (samples.empty()) throw std::invalid_argument("rho_beta_metrics: empty sample list");
    const double h = 1e-4;
    RhoBeta out;
    auto l2q = [&](const Vec& d) { return std::sqrt(d.dot(op2.mass * d)); };
    auto l2g = [&](const Vec& d) { return std::sqrt(d.dot(op1.mass * d)); };

    auto value_gap = [&](const Vec& u0) {
        switch (pair) {
        case NonlinearPair::channel_vs_lifted:
            return l2q(nl_channel.apply(tr.lift(u0)) - tr.lift(nl_lifted.apply(u0)));
        case NonlinearPair::lifted_vs_limit:
            return l2g(nl_lifted.apply(u0) - nl_limit.apply(u0));
        case NonlinearPair::channel_vs_limit:
            return l2q(nl_channel.apply(tr.lift(u0)) - tr.lift(nl_limit.apply(u0)));
        }
        return 0.0;
    };

    for (const Vec& u0 : samples) {
        out.rho = std::max(out.rho, value_gap(u0));
        for (const Vec& v : directions) {
            const double nv = basis0.norm_alpha(v, nl_limit.alpha, false);
            if (nv == 0.0) continue;
            const Vec up = u0 + h * v, um = u0 - h * v;
            double gap = 0.0;
            switch (pair) {
            case NonlinearPair::channel_vs_lifted: {
                const Vec da = (nl_channel.apply(tr.lift(up)) - nl_channel.apply(tr.lift(um))) / (2 * h);
                const Vec db = tr.lift((nl_lifted.apply(up) - nl_lifted.apply(um)) / (2 * h));
                gap = l2q(da - db);
                break;
            }
            case NonlinearPair::lifted_vs_limit: {
                const Vec da = (nl_lifted.apply(up) - nl_lifted.apply(um)) / (2 * h);
                const Vec db = (nl_limit.apply(up) - nl_limit.apply(um)) / (2 * h);
                gap = l2g(da - db);
                break;
            }
            case NonlinearPair::channel_vs_limit: {
                const Vec da = (nl_channel.apply(tr.lift(up)) - nl_channel.apply(tr.lift(um))) / (2 * h);
                const Vec db = tr.lift((nl_limit.apply(up) - nl_limit.apply(um)) / (2 * h));
                gap = l2q(da - db);
                break;
            }
            }
            out.beta = std::max(out.beta, gap / nv);
        }
    }
    return out;
}

struct LipschitzRecord {
    double lipschitz = 0.0;        // empirical L_F
    double analytic_bound = 0.0;   // assembled from Lf, the gate profile and R
    double holder_exponent = 0.0;  // fitted exponent of the derivative modulus
    double sup_bound = 0.0;        // empirical C_F
};

// Empirical Lipschitz / Hoelder data for a prepared nonlinearity. Quotients
// are measured in the X^alpha -> L2 pairing used by its contracts.
inline LipschitzRecord lipschitz_estimator(const NonlinearOperator& nl,
                                           const std::vector<std::pair<Vec, Vec>>& probes,
                                           const EigenBasis& basis, const SpMat& mass,
                                           double domain_measure) {
    if (probes.size() < 100)
        throw std::invalid_argument("lipschitz_estimator: need at least 100 probe pairs");
    LipschitzRecord rec;
    std::vector<double> log_d, log_q;
    for (const auto& [u, w] : probes) {
        const Vec du = u - w;
        const double dn = basis.norm_alpha(du, nl.alpha, false);
        if (dn < 1e-14) continue; // 0/0 guard
        const Vec dv = nl.apply(u) - nl.apply(w);
        const double q = std::sqrt(dv.dot(mass * dv)) / dn;
        rec.lipschitz = std::max(rec.lipschitz, q);
        rec.sup_bound = std::max(rec.sup_bound, std::sqrt(nl.apply(u).dot(mass * nl.apply(u))));

        // derivative modulus via the exact derivative formula, probed along
        // a few basis directions
        double opgap = 0.0;
        for (int j = 0; j < std::min(4, basis.count()); ++j) {
            const Vec dir = basis.vectors.col(j);
            const double dirn = std::pow(basis.values[j], nl.alpha);
            const Vec gap = nl.apply_derivative(u, dir) - nl.apply_derivative(w, dir);
            opgap = std::max(opgap, std::sqrt(gap.dot(mass * gap)) / dirn);
        }
        if (opgap > 1e-14) {
            log_d.push_back(std::log(dn));
            log_q.push_back(std::log(opgap));
        }
    }
    // analytic Lipschitz bound: L_f + C_F * (Lipschitz of the gate in the norm)
    const double theta_slope = 1.875 / (3.0 * nl.gate.R * nl.gate.R); // max |theta'|
    const double gate_lip = 4.0 * nl.gate.R * theta_slope;
    const double cf = nl.reaction.Lf * std::sqrt(domain_measure);
    rec.analytic_bound = nl.reaction.Lf + cf * gate_lip;
    // Hoelder fit in log space
    if (log_d.size() >= 3) {
        const double n = static_cast<double>(log_d.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < log_d.size(); ++i) {
            sx += log_d[i];
            sy += log_q[i];
            sxx += log_d[i] * log_d[i];
            sxy += log_d[i] * log_q[i];
        }
        rec.holder_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return rec;
}

} // namespace thindyn

#endif
