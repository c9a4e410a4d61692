#pragma once

#include <array>
#include <optional>
#include <span>

#include "mf2pop/fp_solver.hpp"
#include "mf2pop/model.hpp"
#include "mf2pop/tridiag.hpp"

namespace mf2pop {

// Unknowns of the backward systems. U1/U2 are the population adjoints; AUX1
// (resp. AUX2) is the auxiliary adjoint u_{-1} (resp. u_{-2}) of NMFC_SC1,
// tracking the impact of player i's choice on the opponent's density.
enum class Unknown { U1 = 0, U2 = 1, AUX1 = 2, AUX2 = 3 };

// Which unknowns a regime carries for a given family. Auxiliary adjoints are
// allocated only under NMFC_SC1 with nonzero cross drift kernels; otherwise
// they never feed back into u_i and the system reduces to NMFC_SC2.
bool regime_has_aux(ProblemKind kind, const ModelFamily& model);

// NMFC_SC2 is valid only when the cross drift kernels vanish identically.
void validate_regime(ProblemKind kind, const ModelFamily& model);

struct AdjointField {
    std::array<FieldTraj, 2> u;      // u_1, u_2
    std::array<FieldTraj, 2> u_aux;  // u_{-1}, u_{-2} (empty unless allocated)
    bool has_aux = false;
};

// Everything the right-hand sides need from one time slice: the density
// summary, adjoint gradients, and the slice constants
//   du_m_int[j]  = integral of Du_j m_j,
//   aux_m_int[i] = integral of Du_{-i} m_{-i}.
struct HjbSliceCtx {
    MSummary m;
    std::array<GridFn, 2> du;
    std::array<GridFn, 2> du_aux;
    std::array<double, 2> du_m_int{0.0, 0.0};
    std::array<double, 2> aux_m_int{0.0, 0.0};
    bool has_aux = false;

    void prepare(const ModelFamily& model, const Grid1D& grid, std::span<const double> m1,
                 std::span<const double> m2, std::span<const double> u1,
                 std::span<const double> u2, std::span<const double> ua1 = {},
                 std::span<const double> ua2 = {});
};

// Right-hand side of the backward equation  -du/dt - (sigma^2/2) u_xx = rhs
// for one unknown at one node. Throws DomainError if the unknown does not
// exist under `kind` (e.g. an auxiliary adjoint under MFG).
double assemble_rhs(ProblemKind kind, Unknown which, int node, const HjbSliceCtx& ctx,
                    const ModelFamily& model, const Grid1D& grid);

// One semi-implicit backward step: diffusion implicit (tridiagonal, Neumann
// boundaries), Hamiltonian right-hand side explicit with gradients lagged
// from the known slice.
class HjbStepper {
public:
    HjbStepper(ProblemKind kind, const ModelFamily& model, const Grid1D& grid);

    // u_next: slices at t_{k+1} for every unknown this regime carries
    // (U1, U2[, AUX1, AUX2]); m1/m2: density slices the rhs is evaluated on;
    // u_out receives the slices at t_k. Throws StepError on NaN blow-up.
    void step(std::span<const GridFn> u_next, std::span<const double> m1,
              std::span<const double> m2, std::span<GridFn> u_out, int time_index);

    int n_unknowns() const { return n_unknowns_; }

private:
    ProblemKind kind_;
    const ModelFamily& model_;
    Grid1D grid_;
    int n_unknowns_;
    std::array<TridiagSolver, 4> solvers_;
    HjbSliceCtx ctx_;
    GridFn rhs_buf_;
};

// Terminal slice for one unknown: h_i plus the regime's terminal couplings.
GridFn terminal_slice(ProblemKind kind, Unknown which, const MSummary& mT,
                      const ModelFamily& model, const Grid1D& grid);

// Full backward sweep given a frozen density trajectory.
AdjointField solve_hjb(ProblemKind kind, const DensityField& m_traj, const ModelFamily& model,
                       const Grid1D& grid);

} // namespace mf2pop
