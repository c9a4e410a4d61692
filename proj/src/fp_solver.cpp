#include "mf2pop/fp_solver.hpp"

#include <algorithm>
#include <cmath>

namespace mf2pop {

namespace {

double minmod(double a, double b) {
    if (a > 0.0 && b > 0.0) return std::min(a, b);
    if (a < 0.0 && b < 0.0) return std::max(a, b);
    return 0.0;
}

} // namespace

FpStepper::FpStepper(double sigma, const Grid1D& grid) : grid_(grid), sigma_(sigma) {
    if (sigma < 0.0) throw ParameterError("fp: sigma must be >= 0");
    const int n = grid.nx;
    const double dt = grid.dt();
    const double dx = grid.dx();
    const double nu = 0.5 * sigma * sigma * dt / dx;  // diffusive flux factor
    std::vector<double> lo(static_cast<size_t>(n), 0.0), di(static_cast<size_t>(n), 0.0),
        up(static_cast<size_t>(n), 0.0);
    // Row j of (I + dt L): w_j m_j + nu * (interface differences), zero flux at
    // the domain ends. Dividing by w_j keeps the matrix rows O(1).
    for (int j = 0; j < n; ++j) {
        const double w = grid.weight(j);
        double diag = 1.0;
        if (j > 0) {
            lo[static_cast<size_t>(j)] = -nu / w;
            diag += nu / w;
        }
        if (j + 1 < n) {
            up[static_cast<size_t>(j)] = -nu / w;
            diag += nu / w;
        }
        di[static_cast<size_t>(j)] = diag;
    }
    diffusion_ = TridiagSolver(std::move(lo), std::move(di), std::move(up));
    flux_.assign(static_cast<size_t>(n), 0.0);
    slope_.assign(static_cast<size_t>(n), 0.0);
    work_.assign(static_cast<size_t>(n), 0.0);
}

void FpStepper::step(std::span<const double> m_in, std::span<const double> drift,
                     std::span<double> m_out, int time_index) {
    const int n = grid_.nx;
    const double dx = grid_.dx();
    const double dt = grid_.dt();

    double max_b = 0.0;
    for (int j = 0; j < n; ++j) {
        const double b = drift[static_cast<size_t>(j)];
        if (!std::isfinite(b)) throw StepError("fp: non-finite drift", time_index);
        max_b = std::max(max_b, std::abs(b));
    }
    if (dt * max_b > dx)
        throw StepError("fp: CFL violation, dt * max|drift| = " + std::to_string(dt * max_b) +
                            " exceeds dx = " + std::to_string(dx) +
                            " (max|drift| = " + std::to_string(max_b) + ")",
                        time_index);

    // Limited linear reconstruction inside each dual cell.
    slope_[0] = 0.0;
    slope_[static_cast<size_t>(n - 1)] = 0.0;
    for (int j = 1; j + 1 < n; ++j)
        slope_[static_cast<size_t>(j)] =
            minmod(m_in[static_cast<size_t>(j)] - m_in[static_cast<size_t>(j - 1)],
                   m_in[static_cast<size_t>(j + 1)] - m_in[static_cast<size_t>(j)]) /
            dx;

    // Upwind flux at interface j+1/2 (between nodes j and j+1).
    for (int j = 0; j + 1 < n; ++j) {
        const double b = 0.5 * (drift[static_cast<size_t>(j)] + drift[static_cast<size_t>(j + 1)]);
        const double mL = m_in[static_cast<size_t>(j)] + 0.5 * dx * slope_[static_cast<size_t>(j)];
        const double mR =
            m_in[static_cast<size_t>(j + 1)] - 0.5 * dx * slope_[static_cast<size_t>(j + 1)];
        flux_[static_cast<size_t>(j)] = b > 0.0 ? b * mL : b * mR;
    }

    for (int j = 0; j < n; ++j) {
        const double fin = (j > 0) ? flux_[static_cast<size_t>(j - 1)] : 0.0;
        const double fout = (j + 1 < n) ? flux_[static_cast<size_t>(j)] : 0.0;
        work_[static_cast<size_t>(j)] =
            m_in[static_cast<size_t>(j)] - dt * (fout - fin) / grid_.weight(j);
    }

    diffusion_.solve(work_, m_out);

    for (int j = 0; j < n; ++j) {
        double& v = m_out[static_cast<size_t>(j)];
        if (!std::isfinite(v)) throw StepError("fp: non-finite density", time_index);
        if (v < 0.0) {
            clipped_mass_ += -v * grid_.weight(j);
            v = 0.0;
        }
    }
}

GridFn step_fp(std::span<const double> m, std::span<const double> drift, double sigma,
               const Grid1D& grid) {
    FpStepper stepper(sigma, grid);
    GridFn out(static_cast<size_t>(grid.nx));
    stepper.step(m, drift, out, 0);
    return out;
}

DensityField solve_fp(const std::array<GridFn, 2>& rho0,
                      const std::array<FieldTraj, 2>& controls, const ModelFamily& model,
                      const Grid1D& grid) {
    const int n = grid.nx;
    const int nt = grid.nt;
    for (int i = 0; i < 2; ++i) {
        if (static_cast<int>(rho0[static_cast<size_t>(i)].size()) != n)
            throw ParameterError("solve_fp: rho0 size does not match the grid");
        if (static_cast<int>(controls[static_cast<size_t>(i)].size()) < nt)
            throw ParameterError("solve_fp: controls must cover every step");
    }

    DensityField out;
    std::array<FpStepper, 2> steppers{FpStepper(model.sigma(0), grid),
                                      FpStepper(model.sigma(1), grid)};
    for (int i = 0; i < 2; ++i) {
        out.m[static_cast<size_t>(i)].assign(static_cast<size_t>(nt + 1),
                                             GridFn(static_cast<size_t>(n)));
        out.m[static_cast<size_t>(i)][0] = rho0[static_cast<size_t>(i)];
        normalize(out.m[static_cast<size_t>(i)][0], grid);
    }

    MSummary summary;
    GridFn drift_buf(static_cast<size_t>(n));
    for (int k = 0; k < nt; ++k) {
        model.summarize(out.m[0][static_cast<size_t>(k)], out.m[1][static_cast<size_t>(k)],
                        summary);
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            const auto& v = controls[si][static_cast<size_t>(k)];
            for (int j = 0; j < n; ++j) {
                const MPoint mp = model.point(summary, j);
                drift_buf[static_cast<size_t>(j)] =
                    model.drift(i, grid.x(j), mp, v[static_cast<size_t>(j)]);
            }
            steppers[si].step(out.m[si][static_cast<size_t>(k)], drift_buf,
                              out.m[si][static_cast<size_t>(k + 1)], k);
        }
    }

    for (int i = 0; i < 2; ++i) {
        const auto si = static_cast<size_t>(i);
        out.clipped_mass += steppers[si].clipped_mass();
        for (int k = 0; k <= nt; ++k) {
            const auto& slice = out.m[si][static_cast<size_t>(k)];
            out.max_mass_error = std::max(out.max_mass_error, std::abs(mass(slice, grid) - 1.0));
            out.max_boundary_density = std::max(
                {out.max_boundary_density, slice.front(), slice.back()});
        }
    }
    if (out.max_mass_error > 1e-8)
        throw NumericalError("solve_fp: mass drift " + std::to_string(out.max_mass_error) +
                             " exceeds 1e-8");
    return out;
}

} // namespace mf2pop
