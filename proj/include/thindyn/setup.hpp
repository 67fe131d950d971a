#ifndef THINDYN_SETUP_HPP
#define THINDYN_SETUP_HPP

#include <cmath>
#include <memory>
#include <stdexcept>

#include "geometry.hpp"
#include "nonlinearity.hpp"
#include "operators.hpp"
#include "semiflow.hpp"

namespace thindyn {

struct SystemParams {
    ProfileKind profile_kind = ProfileKind::sine;
    std::vector<double> profile_params = {0.3};
    int d = 2;
    double mu = 1.0;
    double alpha = 0.25;
    double eps = 0.125;
    int nx = 128, nz = 32;
    double lambda_cut = 900.0; // basis covers all eigenvalues below this
    int k_min = 8, k_max = 220;
    double reaction_a1 = 5.0, reaction_a3 = -1.0;
    double reaction_M = 0.0;   // 0: sqrt(a1/|a3|), where the cubic changes sign
    bool require_dissipative = true;
    double cutoff_R = 0.0;     // 0: twice the largest equilibrium norm
    double dt = 1.0 / 256.0;
    double tail_tol_channel = 1e-4; // curved-channel lifts carry grid-limited spectral tails
};

// One thin-channel problem with its limit companions: the channel system, the
// limit system gated through the lift, and the plain limit system. Heap-only
// so the internal pointers stay valid.
struct ChannelSystem {
    SystemParams params;
    ChannelProfile profile;
    MappedGrid grid;
    DiscreteOperator op_channel, op_limit;
    TransferOperators transfer;
    EigenBasis basis_channel, basis_limit;
    SpMat transverse_form;
    ReactionTerm reaction;
    Cutoff gate;
    NonlinearOperator nl_channel, nl_lifted, nl_limit;
    Stepper stepper;

    ChannelSystem() = default;
    ChannelSystem(const ChannelSystem&) = delete;
    ChannelSystem& operator=(const ChannelSystem&) = delete;
};

// channel basis sized by the eigenvalue cutoff
inline EigenBasis make_channel_basis(const DiscreteOperator& op, const MappedGrid& grid,
                                     double lambda_cut, int k_min, int k_max) {
    int k = std::max(k_min, 12);
    for (;;) {
        k = std::min(k, op.n);
        EigenBasis b = solve_eigenpairs_shift_invert(op, grid, k);
        if (b.values[b.count() - 1] > lambda_cut || k == op.n || k >= k_max) {
            const int keep = std::max(k_min, count_below(b.values, lambda_cut));
            if (keep < b.count()) {
                b.values.conservativeResize(keep);
                b.vectors.conservativeResize(Eigen::NoChange, keep);
                b.mass_vectors.conservativeResize(Eigen::NoChange, keep);
            }
            return b;
        }
        k = k + k / 2 + 4;
    }
}

inline EigenBasis make_limit_basis(const DiscreteOperator& op, double lambda_cut, int k_min,
                                   int k_max) {
    const int est = static_cast<int>(1.3 * std::sqrt(std::max(lambda_cut, 1.0)) / pi) + 6;
    const int k = std::min(op.n, std::min(k_max, std::max(k_min, est)));
    EigenBasis b = solve_eigenpairs_dense(op, k);
    const int keep = std::max(k_min, count_below(b.values, lambda_cut));
    if (keep < b.count()) {
        b.values.conservativeResize(keep);
        b.vectors.conservativeResize(Eigen::NoChange, keep);
        b.mass_vectors.conservativeResize(Eigen::NoChange, keep);
    }
    return b;
}

inline std::unique_ptr<ChannelSystem> make_channel_system(const SystemParams& p) {
    auto sys = std::make_unique<ChannelSystem>();
    sys->params = p;
    sys->profile = build_profile(p.profile_kind, p.profile_params, p.d);
    sys->grid = build_mapped_grid(sys->profile, p.nx, p.nz);
    OperatorConfig c1{p.mu, p.alpha, std::nullopt};
    OperatorConfig c2{p.mu, p.alpha, p.eps};
    sys->op_limit = assemble_limit_operator(sys->profile, c1, p.nx);
    sys->op_channel = assemble_channel_operator(sys->grid, c2);
    sys->transfer = make_transfer(sys->grid, sys->op_limit, sys->op_channel);
    sys->basis_limit = make_limit_basis(sys->op_limit, p.lambda_cut, p.k_min, p.k_max);
    sys->basis_channel = make_channel_basis(sys->op_channel, sys->grid, p.lambda_cut, p.k_min, p.k_max);
    align_basis_to_limit(sys->basis_channel, sys->transfer, sys->basis_limit);
    sys->basis_channel.tail_tol = p.tail_tol_channel;
    sys->transverse_form = assemble_transverse_form(sys->grid);

    double M = p.reaction_M;
    if (M <= 0.0) {
        if (p.reaction_a3 >= 0.0)
            throw std::invalid_argument("make_channel_system: reaction_M required when a3 >= 0");
        M = std::sqrt(p.reaction_a1 / -p.reaction_a3);
    }
    sys->reaction = make_cubic_reaction(p.reaction_a1, p.reaction_a3, M, p.require_dissipative);
    double R = p.cutoff_R;
    if (R <= 0.0) {
        // twice the fractional norm of the largest constant equilibrium
        const double s_eq = std::sqrt(std::max((p.reaction_a1 - p.mu) / std::max(-p.reaction_a3, 1e-12), 0.25));
        Vec eq = s_eq * Vec::Ones(sys->op_limit.n);
        R = 2.0 * sys->basis_limit.norm_alpha(eq, p.alpha);
    }
    sys->gate.R = R;
    sys->nl_channel = {sys->reaction, sys->gate, GateSpace::channel, p.alpha,
                       &sys->basis_channel, nullptr};
    sys->nl_lifted = {sys->reaction, sys->gate, GateSpace::lifted, p.alpha, &sys->basis_channel,
                      &sys->transfer};
    sys->nl_limit = {sys->reaction, sys->gate, GateSpace::limit, p.alpha, &sys->basis_limit,
                     nullptr};
    sys->stepper.dt = p.dt;
    sys->stepper.sup_guard = 10.0 * M;
    return sys;
}

} // namespace thindyn

#endif
