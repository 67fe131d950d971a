#ifndef THINDYN_GEOMETRY_HPP
#define THINDYN_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace thindyn {

inline constexpr double pi = std::numbers::pi;

// First root of J1'; second Neumann eigenvalue of the unit disk is its square.
inline constexpr double disk_neumann_root = 1.8411837813406593;

enum class ProfileKind { constant, sine, polynomial };

// measure of the unit ball in R^{d-1}
inline double unit_ball_measure(int d) {
    const double k = 0.5 * (d - 1);
    return std::pow(pi, k) / std::tgamma(k + 1.0);
}

// Channel described by scaled-ball cross sections of radius r(x), x in [0,1].
// Profiles are closed-form descriptors so r' is exact.
struct ChannelProfile {
    int d = 2;
    ProfileKind kind = ProfileKind::constant;
    std::vector<double> params;
    double omega = 2.0;
    double r_min = 0.0; // cached fine-grid minimum of r

    double r(double x) const {
        switch (kind) {
        case ProfileKind::constant: return params[0];
        case ProfileKind::sine:     return 1.0 + params[0] * std::sin(pi * x);
        case ProfileKind::polynomial: {
            double v = 0.0;
            for (std::size_t i = params.size(); i-- > 0;) v = v * x + params[i];
            return v;
        }
        }
        return 0.0;
    }

    double r_prime(double x) const {
        switch (kind) {
        case ProfileKind::constant: return 0.0;
        case ProfileKind::sine:     return params[0] * pi * std::cos(pi * x);
        case ProfileKind::polynomial: {
            double v = 0.0;
            for (std::size_t i = params.size(); i-- > 1;)
                v = v * x + static_cast<double>(i) * params[i];
            return v;
        }
        }
        return 0.0;
    }

    double g(double x) const { return omega * std::pow(r(x), d - 1); }

    double g_prime(double x) const {
        return omega * (d - 1) * std::pow(r(x), d - 2) * r_prime(x);
    }

    bool straight() const { return kind == ProfileKind::constant; }
};

inline ChannelProfile build_profile(ProfileKind kind, const std::vector<double>& params, int d) {
    if (d < 2) throw std::invalid_argument("build_profile: d must be >= 2");
    if (params.empty()) throw std::invalid_argument("build_profile: empty parameter list");
    ChannelProfile p;
    p.d = d;
    p.kind = kind;
    p.params = params;
    p.omega = unit_ball_measure(d);
    // reject non-diffeomorphic channels (min r <= 0), sampled on a fine grid
    const int ns = 4096;
    double rmin = p.r(0.0);
    for (int i = 1; i <= ns; ++i) rmin = std::min(rmin, p.r(static_cast<double>(i) / ns));
    if (rmin <= 0.0)
        throw std::invalid_argument("build_profile: profile has min r <= 0 (channel is not a diffeomorphic image)");
    p.r_min = rmin;
    return p;
}

// Second Neumann eigenvalue of the cross section at station x.
// d=2: interval of length 2r; d=3: disk of radius r.
inline double cross_section_poincare(const ChannelProfile& p, double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("cross_section_poincare: x outside [0,1]");
    const double rx = p.r(x);
    if (p.d == 2) {
        const double v = pi / (2.0 * rx);
        return v * v;
    }
    if (p.d == 3) {
        const double v = disk_neumann_root / rx;
        return v * v;
    }
    throw std::invalid_argument("cross_section_poincare: closed form only for d = 2, 3");
}

// min over x of the cross-section eigenvalue (grid scan); beta = 1/min.
inline double min_cross_section_eigenvalue(const ChannelProfile& p, int samples = 2048) {
    double lo = cross_section_poincare(p, 0.0);
    for (int i = 1; i <= samples; ++i)
        lo = std::min(lo, cross_section_poincare(p, static_cast<double>(i) / samples));
    return lo;
}

inline double poincare_constant(const ChannelProfile& p) {
    return 1.0 / min_cross_section_eigenvalue(p);
}

enum class BoundaryTag { interior, lid_left, lid_right, lateral };

// Tensor grid on the reference rectangle [0,1] x [-1,1] carrying the
// Jacobian of (x,z) -> (x, r(x) z) and the chain-rule metric coefficients.
struct MappedGrid {
    ChannelProfile profile;
    int nx = 0, nz = 0;           // cell counts
    std::vector<double> x;        // nx+1 nodes
    std::vector<double> z;        // nz+1 nodes
    std::vector<double> jac_cell; // r at x-cell midpoints
    std::vector<double> metric_cross; // per node: z r'(x)/r(x)
    std::vector<double> metric_trans; // per node: 1/r(x)

    int node(int ix, int iz) const { return ix * (nz + 1) + iz; }
    int num_nodes() const { return (nx + 1) * (nz + 1); }

    BoundaryTag tag(int ix, int iz) const {
        if (ix == 0) return BoundaryTag::lid_left;
        if (ix == nx) return BoundaryTag::lid_right;
        if (iz == 0 || iz == nz) return BoundaryTag::lateral;
        return BoundaryTag::interior;
    }

    double hx() const { return 1.0 / nx; }
    double hz() const { return 2.0 / nz; }

    // integral of the per-cell Jacobian over x in [0,1] (2-point Gauss)
    double integrate_jacobian_x() const {
        double s = 0.0;
        const double gq = 0.5 / std::sqrt(3.0);
        for (int i = 0; i < nx; ++i) {
            const double xm = (x[i] + x[i + 1]) / 2.0, h = x[i + 1] - x[i];
            s += 0.5 * h * (profile.r(xm - gq * h) + profile.r(xm + gq * h));
        }
        return s;
    }

    // total reference-weighted area, equals the integral of g for d = 2
    double weighted_area() const {
        return integrate_jacobian_x() * 2.0 * (profile.omega / 2.0);
    }
};

inline MappedGrid build_mapped_grid(const ChannelProfile& profile, int nx, int nz) {
    if (nx < 4 || nz < 4) throw std::invalid_argument("build_mapped_grid: nx, nz must be >= 4");
    if (profile.d != 2)
        throw std::invalid_argument("build_mapped_grid: grid assembly is implemented for d = 2 only");
    MappedGrid g;
    g.profile = profile;
    g.nx = nx;
    g.nz = nz;
    g.x.resize(nx + 1);
    g.z.resize(nz + 1);
    for (int i = 0; i <= nx; ++i) g.x[i] = static_cast<double>(i) / nx;
    for (int k = 0; k <= nz; ++k) g.z[k] = -1.0 + 2.0 * static_cast<double>(k) / nz;
    g.jac_cell.resize(nx);
    for (int i = 0; i < nx; ++i) {
        const double xm = 0.5 * (g.x[i] + g.x[i + 1]);
        const double j = profile.r(xm);
        if (j <= 0.0) throw std::invalid_argument("build_mapped_grid: non-positive Jacobian");
        g.jac_cell[i] = j;
    }
    g.metric_cross.resize(g.num_nodes());
    g.metric_trans.resize(g.num_nodes());
    for (int i = 0; i <= nx; ++i) {
        const double rx = profile.r(g.x[i]), rp = profile.r_prime(g.x[i]);
        for (int k = 0; k <= nz; ++k) {
            g.metric_cross[g.node(i, k)] = g.z[k] * rp / rx;
            g.metric_trans[g.node(i, k)] = 1.0 / rx;
        }
    }
    return g;
}

// Unit outward normal of the physical thin channel at a tagged boundary node.
// Lateral normals carry the thinness scaling; lids are (-1,0)/(1,0).
inline std::array<double, 2> outward_normal(const MappedGrid& g, int ix, int iz, double eps) {
    const BoundaryTag t = g.tag(ix, iz);
    if (t == BoundaryTag::interior)
        throw std::invalid_argument("outward_normal: interior node");
    if (t == BoundaryTag::lid_left) return {-1.0, 0.0};
    if (t == BoundaryTag::lid_right) return {1.0, 0.0};
    const double rp = g.profile.r_prime(g.x[ix]);
    const double side = (iz == g.nz) ? 1.0 : -1.0;
    const double den = std::sqrt(eps * eps * rp * rp + 1.0);
    return {-eps * rp / den, side / den};
}

} // namespace thindyn

#endif
