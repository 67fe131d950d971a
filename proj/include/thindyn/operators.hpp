#ifndef THINDYN_OPERATORS_HPP
#define THINDYN_OPERATORS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace thindyn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct OperatorConfig {
    double mu = 1.0;
    double alpha = 0.25;
    std::optional<double> epsilon; // empty = limit operator

    void validate() const {
        if (mu <= 0.0) throw std::invalid_argument("OperatorConfig: mu must be positive");
        if (!(alpha > 0.0 && alpha < 0.5))
            throw std::invalid_argument("OperatorConfig: alpha must lie in (0, 1/2)");
        if (epsilon && !(*epsilon > 0.0 && *epsilon <= 1.0))
            throw std::invalid_argument("OperatorConfig: epsilon must lie in (0, 1]");
    }
};

enum class OperatorKind { limit_1d, channel_2d };

// Weak-form discretization of the limit Sturm-Liouville operator or of the
// rescaled channel operator on the reference rectangle. `stiffness` includes
// the mu-mass term; `energy` is the mu-independent norm form (diffusion + mass).
struct DiscreteOperator {
    OperatorKind kind = OperatorKind::limit_1d;
    int n = 0;
    double mu = 1.0;
    double epsilon = 0.0; // 0 for the limit operator
    SpMat stiffness;
    SpMat mass;
    SpMat energy;

    const Eigen::SimplicialLDLT<SpMat>& stiffness_solver() const {
        if (!kfac_) {
            kfac_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
            kfac_->compute(stiffness);
            if (kfac_->info() != Eigen::Success)
                throw std::runtime_error("DiscreteOperator: stiffness factorization failed");
        }
        return *kfac_;
    }
    const Eigen::SimplicialLDLT<SpMat>& mass_solver() const {
        if (!mfac_) {
            mfac_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
            mfac_->compute(mass);
            if (mfac_->info() != Eigen::Success)
                throw std::runtime_error("DiscreteOperator: mass factorization failed");
        }
        return *mfac_;
    }

private:
    mutable std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> kfac_;
    mutable std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> mfac_;
};

namespace detail {
inline constexpr double gauss_point = 0.5773502691896257645091488; // 1/sqrt(3)
}

// P1 elements on [0,1] with weight g(x), natural boundary conditions.
inline DiscreteOperator assemble_limit_operator(const ChannelProfile& profile,
                                                const OperatorConfig& config, int n) {
    config.validate();
    if (n < 8) throw std::invalid_argument("assemble_limit_operator: n must be >= 8");
    const int nn = n + 1;
    std::vector<Triplet> tk, tm, te;
    const double h = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        const double xm = (i + 0.5) * h;
        double kloc[2][2] = {{0, 0}, {0, 0}}, mloc[2][2] = {{0, 0}, {0, 0}};
        for (int q = 0; q < 2; ++q) {
            const double xi = (q == 0 ? -detail::gauss_point : detail::gauss_point);
            const double xg = xm + 0.5 * h * xi;
            const double w = 0.5 * h * profile.g(xg);
            const double N[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
            const double dN[2] = {-1.0 / h, 1.0 / h};
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    kloc[a][b] += w * dN[a] * dN[b];
                    mloc[a][b] += w * N[a] * N[b];
                }
        }
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                tk.emplace_back(i + a, i + b, kloc[a][b]);
                tm.emplace_back(i + a, i + b, mloc[a][b]);
            }
    }
    DiscreteOperator op;
    op.kind = OperatorKind::limit_1d;
    op.n = nn;
    op.mu = config.mu;
    SpMat kdiff(nn, nn), m(nn, nn);
    kdiff.setFromTriplets(tk.begin(), tk.end());
    m.setFromTriplets(tm.begin(), tm.end());
    op.mass = m;
    op.stiffness = kdiff + config.mu * m;
    op.energy = kdiff + m;
    return op;
}

// Q1 elements on the reference rectangle with Jacobian weight r(x) and the
// chain-rule metric terms, so the natural condition of the rescaled problem
// is enforced weakly. For r = const the transverse block decouples exactly.
inline DiscreteOperator assemble_channel_operator(const MappedGrid& grid,
                                                  const OperatorConfig& config) {
    config.validate();
    if (!config.epsilon)
        throw std::invalid_argument("assemble_channel_operator: config.epsilon required");
    const double eps = *config.epsilon;
    const int nzn = grid.nz + 1;
    const int nn = grid.num_nodes();
    const double inv_eps2 = 1.0 / (eps * eps);

    std::vector<Triplet> tk, tm;
    tk.reserve(static_cast<std::size_t>(grid.nx) * grid.nz * 16);
    tm.reserve(tk.capacity());
    for (int i = 0; i < grid.nx; ++i) {
        const double hx = grid.x[i + 1] - grid.x[i];
        for (int k = 0; k < grid.nz; ++k) {
            const double hz = grid.z[k + 1] - grid.z[k];
            const int nodes[4] = {grid.node(i, k), grid.node(i + 1, k),
                                  grid.node(i, k + 1), grid.node(i + 1, k + 1)};
            double kloc[4][4] = {}, mloc[4][4] = {};
            for (int qx = 0; qx < 2; ++qx)
                for (int qz = 0; qz < 2; ++qz) {
                    const double xi = (qx == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double et = (qz == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double xg = 0.5 * (grid.x[i] + grid.x[i + 1]) + 0.5 * hx * xi;
                    const double zg = 0.5 * (grid.z[k] + grid.z[k + 1]) + 0.5 * hz * et;
                    const double r = grid.profile.r(xg);
                    const double rp = grid.profile.r_prime(xg);
                    const double c = zg * rp / r;
                    const double w = 0.25 * hx * hz * r;
                    // bilinear shapes in (xi, eta) ordering: (0,0),(1,0),(0,1),(1,1)
                    const double Nx[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                    const double Nz[2] = {0.5 * (1.0 - et), 0.5 * (1.0 + et)};
                    const double dNx[2] = {-1.0 / hx, 1.0 / hx};
                    const double dNz[2] = {-1.0 / hz, 1.0 / hz};
                    double N[4], gx[4], gz[4];
                    for (int a = 0; a < 4; ++a) {
                        const int ax = a & 1, az = a >> 1;
                        N[a] = Nx[ax] * Nz[az];
                        gx[a] = dNx[ax] * Nz[az];
                        gz[a] = Nx[ax] * dNz[az];
                    }
                    for (int a = 0; a < 4; ++a) {
                        const double dax = gx[a] - c * gz[a];
                        const double daz = gz[a] / r;
                        for (int b = 0; b < 4; ++b) {
                            const double dbx = gx[b] - c * gz[b];
                            const double dbz = gz[b] / r;
                            kloc[a][b] += w * (dax * dbx + inv_eps2 * daz * dbz);
                            mloc[a][b] += w * N[a] * N[b];
                        }
                    }
                }
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    tk.emplace_back(nodes[a], nodes[b], kloc[a][b]);
                    tm.emplace_back(nodes[a], nodes[b], mloc[a][b]);
                }
        }
    }
    DiscreteOperator op;
    op.kind = OperatorKind::channel_2d;
    op.n = nn;
    op.mu = config.mu;
    op.epsilon = eps;
    SpMat kdiff(nn, nn), m(nn, nn);
    kdiff.setFromTriplets(tk.begin(), tk.end());
    m.setFromTriplets(tm.begin(), tm.end());
    op.mass = m;
    op.stiffness = kdiff + config.mu * m;
    op.energy = kdiff + m;
    (void)nzn;
    return op;
}

// quadratic form of the physical transverse gradient, without the 1/eps^2 factor
inline SpMat assemble_transverse_form(const MappedGrid& grid) {
    const int nn = grid.num_nodes();
    std::vector<Triplet> t;
    for (int i = 0; i < grid.nx; ++i) {
        const double hx = grid.x[i + 1] - grid.x[i];
        for (int k = 0; k < grid.nz; ++k) {
            const double hz = grid.z[k + 1] - grid.z[k];
            const int nodes[4] = {grid.node(i, k), grid.node(i + 1, k),
                                  grid.node(i, k + 1), grid.node(i + 1, k + 1)};
            double loc[4][4] = {};
            for (int qx = 0; qx < 2; ++qx)
                for (int qz = 0; qz < 2; ++qz) {
                    const double xi = (qx == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double et = (qz == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double xg = 0.5 * (grid.x[i] + grid.x[i + 1]) + 0.5 * hx * xi;
                    const double r = grid.profile.r(xg);
                    const double w = 0.25 * hx * hz * r;
                    const double Nx[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                    const double dNz[2] = {-1.0 / hz, 1.0 / hz};
                    double gz[4];
                    for (int a = 0; a < 4; ++a) gz[a] = Nx[a & 1] * dNz[a >> 1];
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b)
                            loc[a][b] += w * (gz[a] / r) * (gz[b] / r);
                }
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) t.emplace_back(nodes[a], nodes[b], loc[a][b]);
        }
    }
    SpMat s(nn, nn);
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

// Extension / averaging pair between the matched 1D and 2D nodal spaces.
// `average` is realized as the mass-adjoint of the lift, which makes
// M o E = I and the lift isometries exact at the discrete level.
struct TransferOperators {
    int nx = 0, nz = 0;
    SpMat lift_matrix;   // n2 x n1
    SpMat lift_adjoint;  // E^T M2, n1 x n2
    double kappa = 1.0;

    Vec lift(const Vec& v) const { return lift_matrix * v; }

    Vec average(const Vec& u) const { return mass1_->solve(lift_adjoint * u); }

    std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>> mass1_;
};

inline TransferOperators make_transfer(const MappedGrid& grid, const DiscreteOperator& op1,
                                       const DiscreteOperator& op2) {
    if (op1.kind != OperatorKind::limit_1d || op2.kind != OperatorKind::channel_2d)
        throw std::invalid_argument("make_transfer: expects (limit, channel) operator pair");
    if (op1.n != grid.nx + 1 || op2.n != grid.num_nodes())
        throw std::invalid_argument("make_transfer: operators do not match the grid");
    TransferOperators tr;
    tr.nx = grid.nx;
    tr.nz = grid.nz;
    std::vector<Triplet> t;
    t.reserve(grid.num_nodes());
    for (int i = 0; i <= grid.nx; ++i)
        for (int k = 0; k <= grid.nz; ++k) t.emplace_back(grid.node(i, k), i, 1.0);
    SpMat e(grid.num_nodes(), grid.nx + 1);
    e.setFromTriplets(t.begin(), t.end());
    tr.lift_matrix = e;
    tr.lift_adjoint = SpMat(e.transpose()) * op2.mass;
    auto fac = std::make_shared<Eigen::SimplicialLDLT<SpMat>>();
    fac->compute(op1.mass);
    if (fac->info() != Eigen::Success)
        throw std::runtime_error("make_transfer: 1D mass factorization failed");
    tr.mass1_ = fac;
    return tr;
}

// First eigenpairs of (stiffness, mass), ascending and mass-orthonormal,
// with the fractional-power and weighted-coordinate norm evaluators.
struct EigenBasis {
    Vec values;
    Mat vectors;      // n x K
    Mat mass_vectors; // mass * vectors
    SpMat mass;
    SpMat energy;
    SpMat stiffness; // exact X^{1/2} form, used to bound truncation tails
    double tail_tol = 1e-8;

    int count() const { return static_cast<int>(values.size()); }

    Vec coefficients(const Vec& u) const { return mass_vectors.transpose() * u; }

    Vec reconstruct(const Vec& c) const { return vectors * c; }

    double norm_l2(const Vec& u) const { return std::sqrt(u.dot(mass * u)); }

    double norm_energy(const Vec& u) const { return std::sqrt(u.dot(energy * u)); }

    // Rigorous bound on the squared X^alpha content beyond the computed modes:
    // interpolate the exactly computable L2 and X^{1/2} tails.
    double tail_alpha_sq(const Vec& u, double alpha) const {
        const Vec c = coefficients(u);
        double half = 0.0;
        for (int i = 0; i < count(); ++i) half += values[i] * c[i] * c[i];
        const double tail_l2 = std::max(0.0, u.dot(mass * u) - c.squaredNorm());
        const double tail_half = std::max(0.0, u.dot(stiffness * u) - half);
        return std::pow(tail_l2, 1.0 - 2.0 * alpha) * std::pow(tail_half, 2.0 * alpha);
    }

    // spectral X^alpha norm with truncation-tail monitoring
    double norm_alpha(const Vec& u, double alpha, bool check_tail = true) const {
        const Vec c = coefficients(u);
        double s = 0.0;
        for (int i = 0; i < count(); ++i)
            s += std::pow(values[i], 2.0 * alpha) * c[i] * c[i];
        if (check_tail) {
            const double tail = tail_alpha_sq(u, alpha);
            // fields at roundoff scale are exempt (norm ~ 1e-12)
            if (tail > tail_tol * std::max(s, 1e-300) && tail > 1e-24)
                throw std::runtime_error(
                    "norm_alpha: spectral truncation tail above threshold, increase the mode count "
                    "(tail " + std::to_string(tail) + " vs " + std::to_string(s) + ")");
        }
        return std::sqrt(s);
    }

    // weighted coordinate norm on R^m built from the first m eigenvalues
    double weighted_coord_norm(const Vec& p, double alpha) const {
        double s = 0.0;
        for (int i = 0; i < p.size(); ++i)
            s += std::pow(values[i], 2.0 * alpha) * p[i] * p[i];
        return std::sqrt(s);
    }
};

namespace detail {

inline void align_signs(Mat& v) {
    for (int j = 0; j < v.cols(); ++j) {
        int imax = 0;
        double amax = 0.0;
        for (int i = 0; i < v.rows(); ++i)
            if (std::abs(v(i, j)) > amax) { amax = std::abs(v(i, j)); imax = i; }
        if (v(imax, j) < 0.0) v.col(j) *= -1.0;
    }
}

inline void check_cluster(const Vec& vals) {
    for (int i = 0; i + 1 < vals.size(); ++i)
        if (vals[i + 1] - vals[i] < 1e-8 * std::max(1.0, vals[i]))
            throw std::runtime_error("degenerate cluster: eigenvalues " + std::to_string(i) +
                                     " and " + std::to_string(i + 1) + " coincide to 1e-8");
}

// mass-orthonormalize columns in place (modified Gram-Schmidt, two passes)
inline void m_orthonormalize(Mat& x, const SpMat& m) {
    const int p = static_cast<int>(x.cols());
    Mat mx(x.rows(), p);
    for (int j = 0; j < p; ++j) {
        Vec mxj = m * x.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            for (int i = 0; i < j; ++i) {
                const double d = mx.col(i).dot(x.col(j));
                x.col(j) -= d * x.col(i);
            }
            mxj = m * x.col(j);
        }
        const double nrm = std::sqrt(x.col(j).dot(mxj));
        if (nrm < 1e-300) throw std::runtime_error("m_orthonormalize: rank deficiency");
        x.col(j) /= nrm;
        mx.col(j) = mxj / nrm;
    }
}

} // namespace detail

struct EigsOptions {
    double tol = 1e-10;
    int max_iter = 500;
    bool abort_on_cluster = true;
};

// Dense generalized solve for the 1D operator (desk scale).
inline EigenBasis solve_eigenpairs_dense(const DiscreteOperator& op, int m,
                                         const EigsOptions& opts = {}) {
    if (m > op.n) throw std::invalid_argument("solve_eigenpairs: m exceeds matrix dimension");
    Mat kd = Mat(op.stiffness), md = Mat(op.mass);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(kd, md,
                                                     Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("solve_eigenpairs: dense generalized solver failed");
    EigenBasis b;
    b.values = es.eigenvalues().head(m);
    b.vectors = es.eigenvectors().leftCols(m);
    detail::align_signs(b.vectors);
    if (opts.abort_on_cluster) detail::check_cluster(b.values);
    b.mass = op.mass;
    b.energy = op.energy;
    b.stiffness = op.stiffness;
    b.mass_vectors = op.mass * b.vectors;
    return b;
}

inline Vec limit_eigenvalues_dense(const DiscreteOperator& op) {
    Mat kd = Mat(op.stiffness), md = Mat(op.mass);
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(kd, md, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("limit_eigenvalues_dense: solver failed");
    return es.eigenvalues();
}

// Shift-invert subspace iteration with mass-orthogonalization for the 2D
// operator. Start vectors combine lifted longitudinal modes and transverse
// products, which covers both spectral families.
inline EigenBasis solve_eigenpairs_shift_invert(const DiscreteOperator& op, const MappedGrid& grid,
                                                int m, const EigsOptions& opts = {}) {
    if (m > op.n) throw std::invalid_argument("solve_eigenpairs: m exceeds matrix dimension");
    const int p = std::min(op.n, m + std::max(8, m / 2));
    const int nxn = grid.nx + 1, nzn = grid.nz + 1;
    Mat x(op.n, p);
    // deterministic start: cos(j pi x) x cos(n pi (z+1)/2) products
    int col = 0;
    for (int band = 0; band <= p && col < p; ++band)
        for (int j = 0; j <= band && col < p; ++j) {
            const int nzm = band - j;
            if (nzm >= nzn || j >= nxn) continue;
            for (int ix = 0; ix < nxn; ++ix)
                for (int iz = 0; iz < nzn; ++iz)
                    x(grid.node(ix, iz), col) = std::cos(j * pi * grid.x[ix]) *
                                                std::cos(nzm * pi * (grid.z[iz] + 1.0) / 2.0);
            ++col;
        }
    for (; col < p; ++col)
        for (int i = 0; i < op.n; ++i)
            x(i, col) = std::sin(0.37 * (col + 1) * (i + 1)); // deterministic filler
    detail::m_orthonormalize(x, op.mass);

    const auto& kf = op.stiffness_solver();
    Vec vals(p);
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Mat y = kf.solve(op.mass * x);
        detail::m_orthonormalize(y, op.mass);
        Mat small = y.transpose() * (op.stiffness * y);
        small = 0.5 * (small + small.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(small);
        x = y * es.eigenvectors();
        vals = es.eigenvalues();
        // residual check on the wanted part
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vec r = op.stiffness * x.col(i) - vals[i] * (op.mass * x.col(i));
            worst = std::max(worst, r.norm() / std::max(1.0, vals[i]));
        }
        if (worst <= opts.tol) break;
    }
    if (it == opts.max_iter) {
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vec r = op.stiffness * x.col(i) - vals[i] * (op.mass * x.col(i));
            worst = std::max(worst, r.norm() / std::max(1.0, vals[i]));
        }
        throw std::runtime_error("solve_eigenpairs: iteration budget exhausted, residual " +
                                 std::to_string(worst));
    }
    EigenBasis b;
    b.values = vals.head(m);
    b.vectors = x.leftCols(m);
    detail::align_signs(b.vectors);
    if (opts.abort_on_cluster) detail::check_cluster(b.values);
    b.mass = op.mass;
    b.energy = op.energy;
    b.stiffness = op.stiffness;
    b.mass_vectors = op.mass * b.vectors;
    return b;
}

// flip channel eigenvectors so they pair positively with the lifted limit modes
inline void align_basis_to_limit(EigenBasis& basis_eps, const TransferOperators& tr,
                                 const EigenBasis& basis_0) {
    const int m = std::min(basis_eps.count(), basis_0.count());
    for (int i = 0; i < m; ++i) {
        const double ip = basis_eps.mass_vectors.col(i).dot(tr.lift(basis_0.vectors.col(i)));
        if (ip < 0.0) {
            basis_eps.vectors.col(i) *= -1.0;
            basis_eps.mass_vectors.col(i) *= -1.0;
        }
    }
}

// number of eigenvalues at or below the cutoff (basis sizing policy)
inline int count_below(const Vec& values, double cutoff) {
    int k = 0;
    while (k < values.size() && values[k] <= cutoff) ++k;
    return k;
}

inline Vec solve_resolvent(const DiscreteOperator& op, const Vec& rhs) {
    if (rhs.size() != op.n) throw std::invalid_argument("solve_resolvent: rhs dimension mismatch");
    const Vec b = op.mass * rhs;
    Vec u = op.stiffness_solver().solve(b);
    const double bn = b.norm();
    if (bn == 0.0) return u;
    // iterative refinement, then a normwise backward-error contract; the
    // 1/eps^2 transverse weight puts the plain relative residual at its
    // conditioning floor for the thinnest channels
    double knorm = 0.0;
    for (int k = 0; k < op.stiffness.outerSize(); ++k) {
        double rowsum = 0.0;
        for (SpMat::InnerIterator it(op.stiffness, k); it; ++it) rowsum += std::abs(it.value());
        knorm = std::max(knorm, rowsum);
    }
    auto backward_error = [&](const Vec& x) {
        return (op.stiffness * x - b).norm() / (knorm * x.norm() + bn);
    };
    double res = backward_error(u);
    for (int it = 0; it < 3 && res > 1e-14; ++it) {
        u += op.stiffness_solver().solve(b - op.stiffness * u);
        res = backward_error(u);
    }
    if (res > 1e-10) {
        char msg[96];
        std::snprintf(msg, sizeof msg,
                      "solve_resolvent: solver breakdown, backward error %.3e", res);
        throw std::runtime_error(msg);
    }
    return u;
}

enum class NormKind { l2, energy_eps, x_alpha };

inline double norm_eval(const Vec& u, const EigenBasis& basis, NormKind which,
                        double alpha = 0.25) {
    switch (which) {
    case NormKind::l2: return basis.norm_l2(u);
    case NormKind::energy_eps: return basis.norm_energy(u);
    case NormKind::x_alpha: return basis.norm_alpha(u, alpha);
    }
    return 0.0;
}

// sup over the right-hand-side set of the lifted-resolvent mismatch in the
// eps-weighted energy norm; inputs are normalized in L2(Q) unless zero.
inline double resolvent_distance(const DiscreteOperator& op_eps, const DiscreteOperator& op_lim,
                                 const TransferOperators& tr, const std::vector<Vec>& rhs_set) {
    double worst = 0.0;
    for (const Vec& f : rhs_set) {
        const double nf = std::sqrt(f.dot(op_eps.mass * f));
        if (nf == 0.0) continue;
        const Vec fn = f / nf;
        const Vec u = solve_resolvent(op_eps, fn);
        const Vec v = solve_resolvent(op_lim, tr.average(fn));
        const Vec d = u - tr.lift(v);
        worst = std::max(worst, std::sqrt(d.dot(op_eps.energy * d)));
    }
    return worst;
}

// sup over probes of || P_m^eps E v - E P_m^0 v || / ||v||_{L2_g}. With
// alpha = 1/2 the fractional norm is the weighted energy form, evaluated
// exactly; below 1/2 the spectral evaluator reports the within-basis content
// (curved-channel lifts spread mass across every transverse family, so a
// truncation-free value only exists at the energy level).
inline double projection_distance(const EigenBasis& basis_eps, const EigenBasis& basis_0,
                                  const TransferOperators& tr, int m,
                                  const std::vector<Vec>& probes, double alpha) {
    if (m >= basis_eps.count() || m >= basis_0.count())
        throw std::invalid_argument("projection_distance: m must lie below both basis counts");
    if (!(alpha > 0.0 && alpha <= 0.5))
        throw std::invalid_argument("projection_distance: alpha must lie in (0, 1/2]");
    const double gap = basis_0.values[m] - basis_0.values[m - 1];
    if (gap <= 1e-8 * std::max(1.0, basis_0.values[m - 1]))
        throw std::runtime_error("near-degenerate gap: limit eigenvalues " + std::to_string(m - 1) +
                                 " and " + std::to_string(m));
    double worst = 0.0;
    for (const Vec& v : probes) {
        const double nv = basis_0.norm_l2(v);
        if (nv == 0.0) continue;
        const Vec ev = tr.lift(v);
        const Vec c_eps = basis_eps.mass_vectors.leftCols(m).transpose() * ev;
        const Vec proj_eps = basis_eps.vectors.leftCols(m) * c_eps;
        const Vec c0 = basis_0.mass_vectors.leftCols(m).transpose() * v;
        const Vec proj_0 = basis_0.vectors.leftCols(m) * c0;
        const Vec diff = proj_eps - tr.lift(proj_0);
        const double nd = (alpha == 0.5) ? std::sqrt(diff.dot(basis_eps.stiffness * diff))
                                         : basis_eps.norm_alpha(diff, alpha, false);
        worst = std::max(worst, nd / nv);
    }
    return worst;
}

struct PoincareDefect {
    double defect = 0.0; // ||u - E M u||^2_{L2(Q)}
    double bound = 0.0;  // beta ||grad_y u||^2_{L2(Q)}
};

inline PoincareDefect poincare_defect(const Vec& u, const TransferOperators& tr,
                                      const MappedGrid& grid, const DiscreteOperator& op2,
                                      const SpMat& transverse_form) {
    PoincareDefect out;
    const Vec d = u - tr.lift(tr.average(u));
    out.defect = d.dot(op2.mass * d);
    out.bound = poincare_constant(grid.profile) * u.dot(transverse_form * u);
    return out;
}

struct EnergyPair {
    double lambda_eps = 0.0; // minimized channel energy, physical scaling
    double tau_eps = 0.0;    // minimized limit energy
    double margin = 0.0;     // eps^{d-1} tau - lambda >= 0
};

// Minimized quadratic energies of the variational problems behind the
// resolvent comparison; all quantities produced on the reference grid via the
// exact thin-domain rescaling identities.
inline EnergyPair energy_functionals(const DiscreteOperator& op_eps,
                                     const DiscreteOperator& op_lim,
                                     const TransferOperators& tr, int d, const Vec& rhs) {
    if (op_eps.epsilon <= 0.0)
        throw std::invalid_argument("energy_functionals: channel operator required");
    const double scale = std::pow(op_eps.epsilon, d - 1);
    EnergyPair out;
    if (rhs.lpNorm<Eigen::Infinity>() == 0.0) return out;
    const Vec u = solve_resolvent(op_eps, rhs);
    out.lambda_eps = scale * (0.5 * u.dot(op_eps.stiffness * u) - rhs.dot(op_eps.mass * u));
    const Vec mf = tr.average(rhs);
    const Vec v = solve_resolvent(op_lim, mf);
    out.tau_eps = 0.5 * v.dot(op_lim.stiffness * v) - mf.dot(op_lim.mass * v);
    out.margin = scale * out.tau_eps - out.lambda_eps;
    return out;
}

// weighted-mass matrix for a nodal coefficient field (linearization assembly)
inline SpMat assemble_weighted_mass_1d(const ChannelProfile& profile, int n, const Vec& w) {
    const int nn = n + 1;
    if (w.size() != nn) throw std::invalid_argument("assemble_weighted_mass_1d: size mismatch");
    std::vector<Triplet> t;
    const double h = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        for (int q = 0; q < 2; ++q) {
            const double xi = (q == 0 ? -detail::gauss_point : detail::gauss_point);
            const double xg = (i + 0.5) * h + 0.5 * h * xi;
            const double N[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
            const double wg = w[i] * N[0] + w[i + 1] * N[1];
            const double wq = 0.5 * h * profile.g(xg) * wg;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) t.emplace_back(i + a, i + b, wq * N[a] * N[b]);
        }
    }
    SpMat s(nn, nn);
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

inline SpMat assemble_weighted_mass_2d(const MappedGrid& grid, const Vec& w) {
    const int nn = grid.num_nodes();
    if (w.size() != nn) throw std::invalid_argument("assemble_weighted_mass_2d: size mismatch");
    std::vector<Triplet> t;
    for (int i = 0; i < grid.nx; ++i) {
        const double hx = grid.x[i + 1] - grid.x[i];
        for (int k = 0; k < grid.nz; ++k) {
            const double hz = grid.z[k + 1] - grid.z[k];
            const int nodes[4] = {grid.node(i, k), grid.node(i + 1, k),
                                  grid.node(i, k + 1), grid.node(i + 1, k + 1)};
            for (int qx = 0; qx < 2; ++qx)
                for (int qz = 0; qz < 2; ++qz) {
                    const double xi = (qx == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double et = (qz == 0 ? -detail::gauss_point : detail::gauss_point);
                    const double xg = 0.5 * (grid.x[i] + grid.x[i + 1]) + 0.5 * hx * xi;
                    const double r = grid.profile.r(xg);
                    const double Nx[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                    const double Nz[2] = {0.5 * (1.0 - et), 0.5 * (1.0 + et)};
                    double N[4];
                    for (int a = 0; a < 4; ++a) N[a] = Nx[a & 1] * Nz[a >> 1];
                    double wg = 0.0;
                    for (int a = 0; a < 4; ++a) wg += w[nodes[a]] * N[a];
                    const double wq = 0.25 * hx * hz * r * wg;
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b)
                            t.emplace_back(nodes[a], nodes[b], wq * N[a] * N[b]);
                }
        }
    }
    SpMat s(nn, nn);
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

// Smallest eigenpairs of the symmetric pencil (K - W) v = nu M v via a
// positivity shift; used for linearization spectra at equilibria.
inline void pencil_smallest(const SpMat& k_minus_w, const SpMat& mass, double shift, int m,
                            Vec& values, Mat& vectors, int max_iter = 500, double tol = 1e-10) {
    const int n = static_cast<int>(mass.rows());
    m = std::min(m, n);
    SpMat shifted = k_minus_w + shift * mass;
    Eigen::SimplicialLDLT<SpMat> fac(shifted);
    if (fac.info() != Eigen::Success)
        throw std::runtime_error("pencil_smallest: shifted factorization failed (shift too small?)");
    const int p = std::min(n, m + std::max(6, m / 2));
    Mat x(n, p);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i) x(i, j) = std::cos(0.11 * (j + 1) * i) + ((i + j) % 3) * 0.1;
    detail::m_orthonormalize(x, mass);
    Vec vals(p);
    for (int it = 0; it < max_iter; ++it) {
        Mat y = fac.solve(mass * x);
        detail::m_orthonormalize(y, mass);
        Mat small = y.transpose() * (shifted * y);
        small = 0.5 * (small + small.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(small);
        x = y * es.eigenvectors();
        vals = es.eigenvalues();
        double worst = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vec r = shifted * x.col(i) - vals[i] * (mass * x.col(i));
            worst = std::max(worst, r.norm() / std::max(1.0, std::abs(vals[i])));
        }
        if (worst <= tol) break;
        if (it + 1 == max_iter)
            throw std::runtime_error("pencil_smallest: iteration budget exhausted");
    }
    values = vals.head(m).array() - shift;
    vectors = x.leftCols(m);
    detail::align_signs(vectors);
}

} // namespace thindyn

#endif
