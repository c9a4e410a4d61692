#include "mf2pop/coupled_solver.hpp"

#include <algorithm>
#include <cmath>

namespace mf2pop {

double residual(const DensityField& a, const DensityField& b, const Grid1D& grid) {
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
        const auto& fa = a.m[static_cast<size_t>(i)];
        const auto& fb = b.m[static_cast<size_t>(i)];
        if (fa.size() != fb.size()) throw DomainError("residual: trajectory shape mismatch");
        for (size_t k = 0; k < fa.size(); ++k) {
            if (fa[k].size() != fb[k].size())
                throw DomainError("residual: slice shape mismatch");
            worst = std::max(worst, l1_distance(fa[k], fb[k], grid));
        }
    }
    return worst;
}

std::array<FieldTraj, 2> extract_controls(const DensityField& m, const AdjointField& u,
                                          const ModelFamily& model, const Grid1D& grid) {
    const int nt = grid.nt;
    const int n = grid.nx;
    std::array<FieldTraj, 2> v;
    for (auto& traj : v)
        traj.assign(static_cast<size_t>(nt + 1), GridFn(static_cast<size_t>(n)));

    MSummary summary;
    GridFn du(static_cast<size_t>(n));
    for (int k = 0; k <= nt; ++k) {
        const auto sk = static_cast<size_t>(k);
        model.summarize(m.m[0][sk], m.m[1][sk], summary);
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            gradient(u.u[si][sk], grid, du);
            for (int j = 0; j < n; ++j) {
                const MPoint mp = model.point(summary, j);
                v[si][sk][static_cast<size_t>(j)] =
                    model.optimal_control(i, grid.x(j), mp, du[static_cast<size_t>(j)]);
            }
        }
    }
    return v;
}

Solution solve_system(ProblemKind kind, const ModelFamily& model,
                      const std::array<GridFn, 2>& rho0, const Grid1D& grid,
                      const SolveConfig& cfg) {
    cfg.validate();
    validate_regime(kind, model);

    Solution sol;
    const int nt = grid.nt;

    // Initial trajectory: warm start when provided, otherwise a forward solve
    // with zero controls.
    DensityField current;
    if (cfg.warm_start) {
        current.m = *cfg.warm_start;
        for (int i = 0; i < 2; ++i)
            if (static_cast<int>(current.m[static_cast<size_t>(i)].size()) != nt + 1)
                throw ParameterError("solve: warm start trajectory has wrong length");
    } else {
        std::array<FieldTraj, 2> zero;
        for (auto& traj : zero)
            traj.assign(static_cast<size_t>(nt + 1), GridFn(static_cast<size_t>(grid.nx), 0.0));
        current = solve_fp(rho0, zero, model, grid);
    }

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        AdjointField u = solve_hjb(kind, current, model, grid);
        std::array<FieldTraj, 2> controls = extract_controls(current, u, model, grid);
        DensityField proposed = solve_fp(rho0, controls, model, grid);

        const double gap = residual(proposed, current, grid);
        sol.residual_history.push_back(gap);
        sol.iterations = iter;

        if (gap <= cfg.tol) {
            sol.converged = true;
            sol.m = std::move(proposed);
            sol.u = std::move(u);
            sol.controls = std::move(controls);
            return sol;
        }

        if (iter == cfg.max_iters) {
            sol.converged = false;
            sol.m = std::move(proposed);
            sol.u = std::move(u);
            sol.controls = std::move(controls);
            return sol;
        }

        // Damped update of the fixed-point variable.
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            for (int k = 0; k <= nt; ++k) {
                auto& cur = current.m[si][static_cast<size_t>(k)];
                const auto& prop = proposed.m[si][static_cast<size_t>(k)];
                for (size_t j = 0; j < cur.size(); ++j)
                    cur[j] = (1.0 - cfg.omega) * cur[j] + cfg.omega * prop[j];
            }
        }
    }
    return sol;  // unreachable
}

PdeResiduals discrete_residuals(ProblemKind kind, const Solution& sol, const ModelFamily& model,
                                const Grid1D& grid) {
    PdeResiduals out;
    const int nt = grid.nt;
    const int n = grid.nx;

    // Forward defect: re-apply the scheme step to each stored slice.
    {
        std::array<FpStepper, 2> steppers{FpStepper(model.sigma(0), grid),
                                          FpStepper(model.sigma(1), grid)};
        MSummary summary;
        GridFn drift(static_cast<size_t>(n)), stepped(static_cast<size_t>(n));
        for (int k = 0; k < nt; ++k) {
            const auto sk = static_cast<size_t>(k);
            model.summarize(sol.m.m[0][sk], sol.m.m[1][sk], summary);
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                for (int j = 0; j < n; ++j) {
                    const MPoint mp = model.point(summary, j);
                    drift[static_cast<size_t>(j)] = model.drift(
                        i, grid.x(j), mp, sol.controls[si][sk][static_cast<size_t>(j)]);
                }
                steppers[si].step(sol.m.m[si][sk], drift, stepped, k);
                out.fp = std::max(out.fp,
                                  sup_distance(stepped, sol.m.m[si][sk + 1]) / grid.dt());
            }
        }
    }

    // Backward defect: re-apply the backward step to each stored slice pair.
    {
        const bool aux = sol.u.has_aux;
        const int nu = aux ? 4 : 2;
        HjbStepper stepper(kind, model, grid);
        std::vector<GridFn> next(static_cast<size_t>(nu)), stepped(static_cast<size_t>(nu));
        for (int k = 0; k < nt; ++k) {
            const auto sk = static_cast<size_t>(k);
            next[0] = sol.u.u[0][sk + 1];
            next[1] = sol.u.u[1][sk + 1];
            if (aux) {
                next[2] = sol.u.u_aux[0][sk + 1];
                next[3] = sol.u.u_aux[1][sk + 1];
            }
            stepper.step(next, sol.m.m[0][sk + 1], sol.m.m[1][sk + 1], stepped, k);
            out.hjb = std::max(out.hjb, sup_distance(stepped[0], sol.u.u[0][sk]) / grid.dt());
            out.hjb = std::max(out.hjb, sup_distance(stepped[1], sol.u.u[1][sk]) / grid.dt());
            if (aux) {
                out.hjb =
                    std::max(out.hjb, sup_distance(stepped[2], sol.u.u_aux[0][sk]) / grid.dt());
                out.hjb =
                    std::max(out.hjb, sup_distance(stepped[3], sol.u.u_aux[1][sk]) / grid.dt());
            }
        }
    }
    return out;
}

} // namespace mf2pop
