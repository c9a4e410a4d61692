#include "mf2pop/hjb_solver.hpp"

#include <algorithm>
#include <cmath>

namespace mf2pop {

bool regime_has_aux(ProblemKind kind, const ModelFamily& model) {
    return kind == ProblemKind::NMFC_SC1 && model.has_cross_drift_kernels();
}

void validate_regime(ProblemKind kind, const ModelFamily& model) {
    if (kind == ProblemKind::NMFC_SC2 && model.has_cross_drift_kernels())
        throw DomainError(
            "NMFC_SC2 requires the cross drift kernels to vanish; use NMFC_SC1 for this model");
}

void HjbSliceCtx::prepare(const ModelFamily& model, const Grid1D& grid,
                          std::span<const double> m1, std::span<const double> m2,
                          std::span<const double> u1, std::span<const double> u2,
                          std::span<const double> ua1, std::span<const double> ua2) {
    model.summarize(m1, m2, m);
    const auto n = static_cast<size_t>(grid.nx);
    for (auto& g : du) g.resize(n);
    gradient(u1, grid, du[0]);
    gradient(u2, grid, du[1]);
    du_m_int[0] = du_m_int[1] = 0.0;
    for (int j = 0; j < grid.nx; ++j) {
        const auto sj = static_cast<size_t>(j);
        du_m_int[0] += grid.weight(j) * du[0][sj] * m1[sj];
        du_m_int[1] += grid.weight(j) * du[1][sj] * m2[sj];
    }
    has_aux = !ua1.empty();
    if (has_aux) {
        for (auto& g : du_aux) g.resize(n);
        gradient(ua1, grid, du_aux[0]);
        gradient(ua2, grid, du_aux[1]);
        aux_m_int[0] = aux_m_int[1] = 0.0;
        for (int j = 0; j < grid.nx; ++j) {
            const auto sj = static_cast<size_t>(j);
            aux_m_int[0] += grid.weight(j) * du_aux[0][sj] * m2[sj];
            aux_m_int[1] += grid.weight(j) * du_aux[1][sj] * m1[sj];
        }
    }
}

double assemble_rhs(ProblemKind kind, Unknown which, int node, const HjbSliceCtx& ctx,
                    const ModelFamily& model, const Grid1D& grid) {
    const int idx = static_cast<int>(which);
    const bool is_aux = idx >= 2;
    const int i = is_aux ? idx - 2 : idx;
    const double x = grid.x(node);
    const MPoint mp = model.point(ctx.m, node);

    if (is_aux) {
        if (kind != ProblemKind::NMFC_SC1)
            throw DomainError("auxiliary adjoints exist only under NMFC_SC1");
        if (!ctx.has_aux) throw DomainError("auxiliary adjoint requested but not allocated");
        const int o = 1 - i;
        const auto si = static_cast<size_t>(i);
        const auto sn = static_cast<size_t>(node);
        // Transport along the opponent's optimal drift, the cross density
        // derivative of the own Hamiltonian, and the opponent's drift kernel.
        const double q_o = ctx.du[static_cast<size_t>(o)][sn];
        const double drift_o = model.drift(o, x, mp, model.optimal_control(o, x, mp, q_o));
        double rhs = ctx.du_aux[si][sn] * drift_o;
        rhs += model.coupling_dm(o, i, node, ctx.m, ctx.du_m_int[si]);
        rhs += model.drift_kernel_coupling(o, o, node, ctx.m, ctx.aux_m_int[si]);
        return rhs;
    }

    const auto si = static_cast<size_t>(i);
    const double q = ctx.du[si][static_cast<size_t>(node)];
    double rhs = model.hamiltonian(i, x, mp, q);
    switch (kind) {
        case ProblemKind::MFG:
            break;
        case ProblemKind::CMFC:
            for (int j = 0; j < 2; ++j)
                rhs += model.coupling_dm(i, j, node, ctx.m, ctx.du_m_int[static_cast<size_t>(j)]);
            break;
        case ProblemKind::NMFC_SC2:
            rhs += model.coupling_dm(i, i, node, ctx.m, ctx.du_m_int[si]);
            break;
        case ProblemKind::NMFC_SC1:
            rhs += model.coupling_dm(i, i, node, ctx.m, ctx.du_m_int[si]);
            if (ctx.has_aux)
                rhs += model.drift_kernel_coupling(i, 1 - i, node, ctx.m, ctx.aux_m_int[si]);
            break;
    }
    return rhs;
}

namespace {

// (I - dt (sigma^2/2) D2) with reflecting (Neumann) boundary rows.
TridiagSolver make_u_diffusion(double sigma, const Grid1D& grid) {
    const int n = grid.nx;
    const double mu = 0.5 * sigma * sigma * grid.dt() / (grid.dx() * grid.dx());
    std::vector<double> lo(static_cast<size_t>(n), 0.0), di(static_cast<size_t>(n), 1.0 + 2.0 * mu),
        up(static_cast<size_t>(n), 0.0);
    for (int j = 1; j < n; ++j) lo[static_cast<size_t>(j)] = -mu;
    for (int j = 0; j + 1 < n; ++j) up[static_cast<size_t>(j)] = -mu;
    up[0] = -2.0 * mu;
    lo[static_cast<size_t>(n - 1)] = -2.0 * mu;
    return TridiagSolver(std::move(lo), std::move(di), std::move(up));
}

// sigma of the operator attached to an unknown: main adjoints diffuse with
// their own population, auxiliary adjoints with the opponent's.
double unknown_sigma(Unknown which, const ModelFamily& model) {
    switch (which) {
        case Unknown::U1: return model.sigma(0);
        case Unknown::U2: return model.sigma(1);
        case Unknown::AUX1: return model.sigma(1);
        case Unknown::AUX2: return model.sigma(0);
    }
    throw DomainError("invalid unknown");
}

} // namespace

HjbStepper::HjbStepper(ProblemKind kind, const ModelFamily& model, const Grid1D& grid)
    : kind_(kind), model_(model), grid_(grid) {
    validate_regime(kind, model);
    n_unknowns_ = regime_has_aux(kind, model) ? 4 : 2;
    for (int u = 0; u < n_unknowns_; ++u)
        solvers_[static_cast<size_t>(u)] =
            make_u_diffusion(unknown_sigma(static_cast<Unknown>(u), model), grid_);
    rhs_buf_.resize(static_cast<size_t>(grid.nx));
}

void HjbStepper::step(std::span<const GridFn> u_next, std::span<const double> m1,
                      std::span<const double> m2, std::span<GridFn> u_out, int time_index) {
    const int n = grid_.nx;
    const double dt = grid_.dt();
    if (static_cast<int>(u_next.size()) != n_unknowns_ ||
        static_cast<int>(u_out.size()) != n_unknowns_)
        throw DomainError("hjb step: unknown count mismatch");

    if (n_unknowns_ == 4)
        ctx_.prepare(model_, grid_, m1, m2, u_next[0], u_next[1], u_next[2], u_next[3]);
    else
        ctx_.prepare(model_, grid_, m1, m2, u_next[0], u_next[1]);

    for (int u = 0; u < n_unknowns_; ++u) {
        const auto su = static_cast<size_t>(u);
        for (int j = 0; j < n; ++j)
            rhs_buf_[static_cast<size_t>(j)] =
                u_next[su][static_cast<size_t>(j)] +
                dt * assemble_rhs(kind_, static_cast<Unknown>(u), j, ctx_, model_, grid_);
        u_out[su].resize(static_cast<size_t>(n));
        solvers_[su].solve(rhs_buf_, u_out[su]);
        for (int j = 0; j < n; ++j)
            if (!std::isfinite(u_out[su][static_cast<size_t>(j)]))
                throw StepError("hjb: numerical blow-up in unknown " + std::to_string(u),
                                time_index);
    }
}

GridFn terminal_slice(ProblemKind kind, Unknown which, const MSummary& mT,
                      const ModelFamily& model, const Grid1D& grid) {
    const int idx = static_cast<int>(which);
    const bool is_aux = idx >= 2;
    const int i = is_aux ? idx - 2 : idx;
    GridFn out(static_cast<size_t>(grid.nx));

    if (is_aux) {
        if (kind != ProblemKind::NMFC_SC1)
            throw DomainError("auxiliary adjoints exist only under NMFC_SC1");
        for (int j = 0; j < grid.nx; ++j)
            out[static_cast<size_t>(j)] = model.terminal_coupling_dm(1 - i, i, j, mT);
        return out;
    }

    for (int j = 0; j < grid.nx; ++j) {
        double v = model.terminal_cost(i, j, mT);
        switch (kind) {
            case ProblemKind::MFG:
                break;
            case ProblemKind::CMFC:
                for (int p = 0; p < 2; ++p) v += model.terminal_coupling_dm(i, p, j, mT);
                break;
            case ProblemKind::NMFC_SC1:
            case ProblemKind::NMFC_SC2:
                v += model.terminal_coupling_dm(i, i, j, mT);
                break;
        }
        out[static_cast<size_t>(j)] = v;
    }
    return out;
}

AdjointField solve_hjb(ProblemKind kind, const DensityField& m_traj, const ModelFamily& model,
                       const Grid1D& grid) {
    validate_regime(kind, model);
    const int nt = grid.nt;
    const bool aux = regime_has_aux(kind, model);
    const int nu = aux ? 4 : 2;

    AdjointField out;
    out.has_aux = aux;
    for (int i = 0; i < 2; ++i) {
        out.u[static_cast<size_t>(i)].assign(static_cast<size_t>(nt + 1), GridFn());
        if (aux) out.u_aux[static_cast<size_t>(i)].assign(static_cast<size_t>(nt + 1), GridFn());
    }

    MSummary mT;
    model.summarize(m_traj.m[0][static_cast<size_t>(nt)], m_traj.m[1][static_cast<size_t>(nt)],
                    mT);
    out.u[0][static_cast<size_t>(nt)] = terminal_slice(kind, Unknown::U1, mT, model, grid);
    out.u[1][static_cast<size_t>(nt)] = terminal_slice(kind, Unknown::U2, mT, model, grid);
    if (aux) {
        out.u_aux[0][static_cast<size_t>(nt)] =
            terminal_slice(kind, Unknown::AUX1, mT, model, grid);
        out.u_aux[1][static_cast<size_t>(nt)] =
            terminal_slice(kind, Unknown::AUX2, mT, model, grid);
    }

    HjbStepper stepper(kind, model, grid);
    std::vector<GridFn> next(static_cast<size_t>(nu)), prev(static_cast<size_t>(nu));
    for (int k = nt - 1; k >= 0; --k) {
        const auto sk = static_cast<size_t>(k);
        next[0] = out.u[0][sk + 1];
        next[1] = out.u[1][sk + 1];
        if (aux) {
            next[2] = out.u_aux[0][sk + 1];
            next[3] = out.u_aux[1][sk + 1];
        }
        stepper.step(next, m_traj.m[0][sk + 1], m_traj.m[1][sk + 1], prev, k);
        out.u[0][sk] = prev[0];
        out.u[1][sk] = prev[1];
        if (aux) {
            out.u_aux[0][sk] = prev[2];
            out.u_aux[1][sk] = prev[3];
        }
    }
    return out;
}

} // namespace mf2pop
