#ifndef THINDYN_EXPANSION_HPP
#define THINDYN_EXPANSION_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "operators.hpp"

namespace thindyn {

// Residual of the limit equation for a nodal field, evaluated through the
// discrete operator itself (a discrete solution reproduces its data).
inline double compatibility_residual(const DiscreteOperator& op_lim, const Vec& v0, const Vec& f) {
    const Vec r = op_lim.stiffness * v0 - op_lim.mass * f;
    return op_lim.mass_solver().solve(r).lpNorm<Eigen::Infinity>();
}

// analytic variant for closed-form data: sup over a fine grid of
// | -(1/g)(g v0')' + mu v0 - f |
template <typename F0, typename F1, typename F2, typename FRhs>
double compatibility_residual_analytic(const ChannelProfile& prof, double mu, F0&& v0, F1&& v0p,
                                       F2&& v0pp, FRhs&& f, int samples = 2048) {
    double worst = 0.0;
    for (int i = 0; i <= samples; ++i) {
        const double x = static_cast<double>(i) / samples;
        const double res =
            -v0pp(x) - prof.g_prime(x) / prof.g(x) * v0p(x) + mu * v0(x) - f(x);
        worst = std::max(worst, std::abs(res));
    }
    return worst;
}

struct CellSolution {
    Vec y;      // ny+1 nodes on [-r, r]
    Vec values; // zero-mean solution of the transverse Neumann problem
    double c = 0.0;
    double flux = 0.0;
    double r = 0.0;
};

// closed-form solution of the d=2 cell problem
inline double cell_v2_closed_form(double c, double r, double y) {
    return c * (y * y / 2.0 - r * r / 6.0);
}

// Zero-mean solve of V'' = c on (-r, r) with V'(+-r) = +-flux; the data must
// satisfy the Fredholm compatibility c r = flux.
inline CellSolution solve_cell_v2(double c, double flux, double r, int ny = 64) {
    if (r <= 0.0) throw std::invalid_argument("solve_cell_v2: radius must be positive");
    if (ny % 2) ++ny; // Simpson weights below need an even cell count
    const double scale = std::max({std::abs(c) * r, std::abs(flux), 1e-3});
    if (std::abs(c * r - flux) > 1e-10 * scale)
        throw std::runtime_error("solve_cell_v2: limit equation residual too large "
                                 "(Fredholm compatibility violated)");
    CellSolution sol;
    sol.c = c;
    sol.flux = flux;
    sol.r = r;
    const int nn = ny + 1;
    const double h = 2.0 * r / ny;
    sol.y.resize(nn);
    for (int i = 0; i < nn; ++i) sol.y[i] = -r + h * i;

    // second-order finite differences with a Taylor-consistent flux closure;
    // the singular constant direction is pinned by the zero-mean row
    Mat a = Mat::Zero(nn, nn);
    Vec b = Vec::Zero(nn);
    for (int i = 1; i < ny; ++i) {
        a(i, i - 1) = 1.0 / (h * h);
        a(i, i) = -2.0 / (h * h);
        a(i, i + 1) = 1.0 / (h * h);
        b[i] = c;
    }
    a(0, 0) = -1.0 / h;
    a(0, 1) = 1.0 / h;
    b[0] = -flux + 0.5 * h * c;
    // zero-mean row with Simpson weights, exact for the quadratic corrector
    for (int i = 0; i < nn; ++i)
        a(ny, i) = (i == 0 || i == ny) ? h / 3.0 : ((i % 2) ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
    b[ny] = 0.0;
    sol.values = a.partialPivLu().solve(b);
    return sol;
}

// cell data derived from a discrete limit solution through the Fredholm
// identity c = (g'/g) v0' (avoids second differences of nodal data)
struct CellData {
    double c = 0.0;
    double flux = 0.0;
    double r = 0.0;
};

inline CellData cell_data_from_limit_solution(const ChannelProfile& prof, const Vec& v0, double x) {
    const int n = static_cast<int>(v0.size()) - 1;
    const double h = 1.0 / n;
    int i = std::clamp(static_cast<int>(std::lround(x / h)), 1, n - 1);
    const double v0p = (v0[i + 1] - v0[i - 1]) / (2.0 * h);
    CellData d;
    d.r = prof.r(i * h);
    d.c = prof.g_prime(i * h) / prof.g(i * h) * v0p;
    d.flux = v0p * prof.r_prime(i * h);
    return d;
}

// || grad_y V2 ||_{L2(Q)} from the limit solution: integral of c(x)^2 2r^3/3
inline double grad_y_v2_norm(const ChannelProfile& prof, const Vec& v0) {
    const int n = static_cast<int>(v0.size()) - 1;
    const double h = 1.0 / n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xm = (i + 0.5) * h;
        const double v0p = (v0[i + 1] - v0[i]) / h;
        const double c = prof.g_prime(xm) / prof.g(xm) * v0p;
        const double r = prof.r(xm);
        acc += h * c * c * 2.0 * r * r * r / 3.0;
    }
    return std::sqrt(acc);
}

struct OptimalityRow {
    double eps = 0.0;
    double distance = 0.0; // || u_eps - E v0 ||_{H^1_eps(Q)}
    double ratio = 0.0;    // distance / eps
    bool flagged = false;  // discretization floor suspected
};

struct OptimalityTable {
    std::vector<OptimalityRow> rows;
    double grad_norm = 0.0; // reference limit of the ratios
    Vec v0;
};

// Ratio study of the resolvent distance against the first transverse
// corrector: the ratios stabilize toward || grad_y V2 || until the grid floor.
inline OptimalityTable optimality_ratio(const ChannelProfile& prof, double mu,
                                        const MappedGrid& grid, const Vec& f_limit,
                                        const std::vector<double>& eps_list) {
    if (eps_list.size() < 2)
        throw std::invalid_argument("optimality_ratio: need at least two thickness values");
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (eps_list[i] >= eps_list[i - 1])
            throw std::invalid_argument("optimality_ratio: eps list must be strictly decreasing");

    OperatorConfig c1{mu, 0.25, std::nullopt};
    auto op1 = assemble_limit_operator(prof, c1, grid.nx);
    OptimalityTable table;
    table.v0 = solve_resolvent(op1, f_limit);
    table.grad_norm = grad_y_v2_norm(prof, table.v0);

    for (double eps : eps_list) {
        OperatorConfig c2{mu, 0.25, eps};
        auto op2 = assemble_channel_operator(grid, c2);
        auto tr = make_transfer(grid, op1, op2);
        const Vec u = solve_resolvent(op2, tr.lift(f_limit));
        const Vec d = u - tr.lift(table.v0);
        OptimalityRow row;
        row.eps = eps;
        row.distance = std::sqrt(d.dot(op2.energy * d));
        row.ratio = row.distance / eps;
        table.rows.push_back(row);
    }
    // flag rows where the stabilization toward the reference reverses
    double prev_gap = std::abs(table.rows.front().ratio - table.grad_norm);
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        const double gap = std::abs(table.rows[i].ratio - table.grad_norm);
        if (gap > prev_gap) table.rows[i].flagged = true;
        prev_gap = gap;
    }
    return table;
}

struct OddPartReport {
    double even = 0.0; // leading even coefficient of the eps-expansion
    double odd = 0.0;  // next, odd-order coefficient
};

// Richardson split of the distance-over-eps curve across three thickness
// values: ratio(eps) = a + b eps + c eps^2, with b the odd-order coefficient
// that vanishes structurally for this family.
inline OddPartReport odd_part_split(const std::vector<OptimalityRow>& rows) {
    if (rows.size() < 3)
        throw std::invalid_argument("odd_part_split: need at least three rows");
    const double e0 = rows[0].eps, e1 = rows[1].eps, e2 = rows[2].eps;
    Mat a(3, 3);
    a << 1.0, e0, e0 * e0, 1.0, e1, e1 * e1, 1.0, e2, e2 * e2;
    Vec rhs(3);
    rhs << rows[0].ratio, rows[1].ratio, rows[2].ratio;
    const Vec sol = a.partialPivLu().solve(rhs);
    OddPartReport rep;
    rep.even = sol[0] + sol[2] * e1 * e1; // even-order content at the middle eps
    rep.odd = sol[1] * e1;
    return rep;
}

} // namespace thindyn

#endif
