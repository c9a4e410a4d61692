#pragma once

#include <array>
#include <span>

#include "mf2pop/model.hpp"
#include "mf2pop/tridiag.hpp"

namespace mf2pop {

// Forward densities for both populations, nt+1 slices each, plus the
// bookkeeping the scheme reports: total clipped (negative) mass, the worst
// per-slice mass deviation from 1, and the largest boundary-node density seen
// (truncation indicator).
struct DensityField {
    std::array<FieldTraj, 2> m;
    double clipped_mass = 0.0;
    double max_mass_error = 0.0;
    double max_boundary_density = 0.0;
};

// One forward step of  dm/dt = (sigma^2/2) m_xx - (b m)_x  on the dual-cell
// finite volumes of the grid (node j owns [x_j - dx/2, x_j + dx/2], halved at
// the ends), with zero-flux boundaries:
//  - advection: explicit conservative upwind flux with minmod-limited linear
//    reconstruction (plain first-order upwinding at this resolution leaks
//    enough numerical diffusion to bias the moments, see tests);
//  - diffusion: backward Euler, tridiagonal solve.
// The trapezoid mass functional is conserved exactly by both substeps.
class FpStepper {
public:
    FpStepper(double sigma, const Grid1D& grid);

    // Advances one slice; `time_index` only labels errors. Throws StepError on
    // CFL violation (dt > dx / max|b|), NumericalError on solver breakdown.
    // Negative values produced by round-off are clipped to zero; the clipped
    // mass is accumulated into `clipped_mass`.
    void step(std::span<const double> m_in, std::span<const double> drift,
              std::span<double> m_out, int time_index);

    double clipped_mass() const { return clipped_mass_; }

private:
    Grid1D grid_;
    double sigma_;
    TridiagSolver diffusion_;
    std::vector<double> flux_, slope_, work_;
    double clipped_mass_ = 0.0;
};

GridFn step_fp(std::span<const double> m, std::span<const double> drift, double sigma,
               const Grid1D& grid);

// Full forward sweep for both populations under the given feedback controls
// (controls[i][k][j] = v_i(x_j, t_k); the slice at index k drives the step
// from t_k to t_{k+1}). Initial densities are renormalized after sampling.
DensityField solve_fp(const std::array<GridFn, 2>& rho0,
                      const std::array<FieldTraj, 2>& controls, const ModelFamily& model,
                      const Grid1D& grid);

} // namespace mf2pop
