#pragma once

#include <optional>

#include "mf2pop/hjb_solver.hpp"

namespace mf2pop {

struct SolveConfig {
    double omega = 0.5;       // damping in (0, 1]
    double tol = 1e-7;        // sup-in-time L1-in-space threshold on densities
    int max_iters = 500;
    std::optional<std::array<FieldTraj, 2>> warm_start;  // initial density trajectory

    void validate() const {
        if (!(omega > 0.0) || omega > 1.0) throw ParameterError("solve: omega must be in (0,1]");
        if (!(tol >= 0.0)) throw ParameterError("solve: tol must be >= 0");
        if (max_iters < 1) throw ParameterError("solve: max_iters must be >= 1");
    }
};

struct Solution {
    DensityField m;
    AdjointField u;
    std::array<FieldTraj, 2> controls;   // v_i(x_j, t_k) at every slice
    int iterations = 0;
    std::vector<double> residual_history;  // undamped fixed-point gaps per iteration
    bool converged = false;
};

// sup over time slices of the L1 spatial distance.
double residual(const DensityField& a, const DensityField& b, const Grid1D& grid);

// Damped Picard iteration on the density trajectory:
//   u    <- backward sweep given m
//   v    <- pointwise Hamiltonian minimizer from (m, Du)
//   m~   <- forward sweep under v
//   gap  <- sup_t L1(m~ - m); stop when gap <= tol
//   m    <- (1 - omega) m + omega m~
// The returned fields are the last (u, v, m~) triple, so the forward sweep is
// satisfied exactly and the backward sweep within O(gap). Non-convergence
// within max_iters returns data with converged == false rather than throwing.
Solution solve_system(ProblemKind kind, const ModelFamily& model,
                      const std::array<GridFn, 2>& rho0, const Grid1D& grid,
                      const SolveConfig& cfg);

// Discrete operator residuals of a returned Solution, in sup norm per unit
// time: the forward-scheme defect of m under the stored controls and the
// backward-scheme defect of u given m. Both are <= O(tol) for accepted runs.
struct PdeResiduals {
    double fp = 0.0;
    double hjb = 0.0;
};
PdeResiduals discrete_residuals(ProblemKind kind, const Solution& sol, const ModelFamily& model,
                                const Grid1D& grid);

// Extracts the feedback controls v_i(x_j, t_k) from adjoint gradients.
std::array<FieldTraj, 2> extract_controls(const DensityField& m, const AdjointField& u,
                                          const ModelFamily& model, const Grid1D& grid);

} // namespace mf2pop
