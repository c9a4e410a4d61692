#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mf2pop/errors.hpp"

namespace mf2pop {

// Uniform space-time mesh on a truncated interval [x_min, x_max] x [0, T].
// Spatial nodes x_j = x_min + j*dx, j = 0..nx-1; time slices t_k = k*dt, k = 0..nt.
struct Grid1D {
    double x_min = -1.0;
    double x_max = 1.0;
    int nx = 3;
    double T = 1.0;
    int nt = 1;

    Grid1D() = default;
    Grid1D(double x_min, double x_max, int nx, double T, int nt)
        : x_min(x_min), x_max(x_max), nx(nx), T(T), nt(nt) {
        if (!(x_max > x_min)) throw ParameterError("grid: x_max must exceed x_min");
        if (nx < 3) throw ParameterError("grid: nx must be >= 3");
        if (nt < 1) throw ParameterError("grid: nt must be >= 1");
        if (!(T > 0.0)) throw ParameterError("grid: T must be positive");
    }

    double dx() const { return (x_max - x_min) / (nx - 1); }
    double dt() const { return T / nt; }
    double x(int j) const { return x_min + j * dx(); }
    double t(int k) const { return k * dt(); }

    // Trapezoid weight of node j; boundary nodes own half cells. These are
    // exactly the dual-cell widths of the finite-volume schemes, so the
    // quadrature below is the functional those schemes conserve.
    double weight(int j) const { return (j == 0 || j == nx - 1) ? 0.5 * dx() : dx(); }

    std::vector<double> nodes() const {
        std::vector<double> xs(static_cast<size_t>(nx));
        for (int j = 0; j < nx; ++j) xs[static_cast<size_t>(j)] = x(j);
        return xs;
    }

    bool same_mesh(const Grid1D& o) const {
        return x_min == o.x_min && x_max == o.x_max && nx == o.nx && T == o.T && nt == o.nt;
    }
};

// A grid function: one value per spatial node.
using GridFn = std::vector<double>;
// A time-indexed trajectory of grid functions, nt+1 slices.
using FieldTraj = std::vector<GridFn>;

inline double trapz(std::span<const double> f, const Grid1D& g) {
    double s = 0.0;
    for (int j = 0; j < g.nx; ++j) s += g.weight(j) * f[static_cast<size_t>(j)];
    return s;
}

inline double mass(std::span<const double> m, const Grid1D& g) { return trapz(m, g); }

inline double first_moment(std::span<const double> m, const Grid1D& g) {
    double s = 0.0;
    for (int j = 0; j < g.nx; ++j) s += g.weight(j) * g.x(j) * m[static_cast<size_t>(j)];
    return s;
}

inline double second_moment(std::span<const double> m, const Grid1D& g) {
    double s = 0.0;
    for (int j = 0; j < g.nx; ++j) {
        const double x = g.x(j);
        s += g.weight(j) * x * x * m[static_cast<size_t>(j)];
    }
    return s;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b, const Grid1D& g) {
    double s = 0.0;
    for (int j = 0; j < g.nx; ++j)
        s += g.weight(j) * std::abs(a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]);
    return s;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t j = 0; j < a.size(); ++j) s = std::max(s, std::abs(a[j] - b[j]));
    return s;
}

// Central differences in the interior, one-sided at the boundary nodes.
inline void gradient(std::span<const double> u, const Grid1D& g, std::span<double> du) {
    const double inv2dx = 1.0 / (2.0 * g.dx());
    const double invdx = 1.0 / g.dx();
    const int n = g.nx;
    du[0] = (u[1] - u[0]) * invdx;
    for (int j = 1; j + 1 < n; ++j)
        du[static_cast<size_t>(j)] = (u[static_cast<size_t>(j + 1)] - u[static_cast<size_t>(j - 1)]) * inv2dx;
    du[static_cast<size_t>(n - 1)] = (u[static_cast<size_t>(n - 1)] - u[static_cast<size_t>(n - 2)]) * invdx;
}

// Normalizes a sampled density to unit trapezoid mass (in place).
inline void normalize(GridFn& m, const Grid1D& g) {
    const double total = mass(m, g);
    if (!(total > 0.0)) throw ParameterError("normalize: density has non-positive mass");
    const double inv = 1.0 / total;
    for (double& v : m) v *= inv;
}

} // namespace mf2pop
