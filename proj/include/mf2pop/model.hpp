#pragma once

#include <array>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "mf2pop/grid.hpp"

namespace mf2pop {

// The four problem regimes sharing one forward/backward machinery.
//  - CMFC: one planner, common objective; adjoint equations carry the full
//    density-derivative couplings of both Hamiltonians.
//  - NMFC_SC1: per-population objectives, controls feedback on x only; the
//    auxiliary adjoints u_{-1}, u_{-2} track the impact on the opponent's
//    density and couple back through drift kernels when those are nonzero.
//  - NMFC_SC2: as SC1 but each drift is independent of the other population's
//    density, so the auxiliary adjoints decouple and are dropped.
//  - MFG: fixed-point game regime; no density-derivative terms at all. Covers
//    both the Nash and the common-objective game, whose necessary conditions
//    coincide.
enum class ProblemKind { CMFC, NMFC_SC1, NMFC_SC2, MFG };

std::string_view to_string(ProblemKind k);
ProblemKind problem_kind_from_string(std::string_view s);

// Per-slice summary of the density pair, filled by ModelFamily::summarize.
// Families read only what they need: the raw slices (local costs), convolved
// slices (non-local costs), or first moments (mean coupling).
struct MSummary {
    std::span<const double> m1, m2;
    std::array<double, 2> mean{0.0, 0.0};
    // conv[i] = kernel * m_i and conv_rev[i] = reflected-kernel * m_i at nodes.
    std::array<std::vector<double>, 2> conv;
    std::array<std::vector<double>, 2> conv_rev;

    std::span<const double> m(int pop) const { return pop == 0 ? m1 : m2; }
};

// Density information localized at one evaluation point, as consumed by the
// Hamiltonian and costs. The meaning of (v1, v2) is family-specific:
// pointwise values m_i(x), convolved values (phi*m_i)(x), or first moments.
struct MPoint {
    double v1 = 0.0;
    double v2 = 0.0;
    double v(int pop) const { return pop == 0 ? v1 : v2; }
};

// What the McKean-Vlasov simulator must feed the drift as the law argument.
enum class LawSummaryKind { None, Moments };

// Problem data for one two-population model: dynamics g_i, running cost f_i,
// terminal cost h_i, Hamiltonian H_i(x,m,q) = inf_v [f_i + q g_i], its
// minimizer, and the closed-form density-derivative couplings used by the
// backward equations. Population indices are 0 and 1. All evaluations are
// pure and reentrant; no shared mutable state.
class ModelFamily {
public:
    virtual ~ModelFamily() = default;

    virtual std::string_view name() const = 0;
    virtual double sigma(int pop) const = 0;

    // Builds the per-slice summary into `out` (buffers reused across slices).
    virtual void summarize(std::span<const double> m1, std::span<const double> m2,
                           MSummary& out) const = 0;

    // Localized density data at a grid node / at an arbitrary point (linear
    // interpolation, clamped at the domain ends).
    virtual MPoint point(const MSummary& m, int node) const = 0;
    virtual MPoint point_at(const MSummary& m, double x, const Grid1D& grid) const = 0;

    virtual double drift(int pop, double x, const MPoint& m, double v) const = 0;
    virtual double running_cost(int pop, double x, const MPoint& m, double v) const = 0;
    virtual double hamiltonian(int pop, double x, const MPoint& m, double q) const = 0;
    virtual double optimal_control(int pop, double x, const MPoint& m, double q) const = 0;

    // Terminal cost h_i at a grid node.
    virtual double terminal_cost(int pop, int node, const MSummary& mT) const = 0;

    // Running coupling: the value at node `node` of
    //   integral of  d_{m_i} H_j (xi, m, Du_j(xi)) (x_node) m_j(xi) dxi.
    // `du_m_int_j` carries the slice constant  integral of Du_j m_j dxi,
    // which is all the mean-coupled families need; local and convolution
    // families read the summary instead.
    virtual double coupling_dm(int i, int j, int node, const MSummary& m,
                               double du_m_int_j) const = 0;

    // Terminal coupling: value at `node` of
    //   integral of  d_{m_i} h_j (xi, m_T) (x_node) m_j(xi, T) dxi.
    virtual double terminal_coupling_dm(int i, int j, int node, const MSummary& mT) const = 0;

    // Drift kernels d_{m_i}(dH_k/dq_k). `cross` refers to i != k, the ones
    // whose presence forces the auxiliary adjoints of NMFC_SC1.
    virtual bool has_cross_drift_kernels() const { return false; }
    virtual bool has_drift_kernels() const { return false; }

    // Value at `node` of
    //   integral of  w(xi) . d_{m_i}(dH_k/dq_k)(xi, m, Du_k(xi)) (x_node) m_k(xi) dxi
    // where `w_m_int` = integral of w m_k dxi for the slice weight w (an
    // auxiliary adjoint gradient).
    virtual double drift_kernel_coupling(int /*i*/, int /*k*/, int /*node*/, const MSummary& /*m*/,
                                         double /*w_m_int*/) const {
        return 0.0;
    }

    virtual LawSummaryKind law_summary_kind() const { return LawSummaryKind::None; }

    void check_pop(int pop) const {
        if (pop != 0 && pop != 1) throw DomainError("population index must be 0 or 1");
    }
};

// Crowd-aversion model parameters. LocalLW uses pointwise congestion costs
// m_i(x) + lambda m_{-i}(x); NonlocalAD uses convolved costs
// sum_k Lambda[i][k] (phi * m_k)(x) with a mollified-indicator kernel phi.
struct CrowdParams {
    enum class Variant { LocalLW, NonlocalAD };
    Variant variant = Variant::LocalLW;
    double lambda = 0.0;                     // LocalLW aversion weight, >= 0
    double sigma = 1.0;                      // volatility, same for both populations
    std::array<std::array<double, 2>, 2> Lambda{{{0.0, 0.0}, {0.0, 0.0}}};
    double kernel_radius = 0.0;              // r > 0 (NonlocalAD)
    double mollifier_width = 0.0;            // delta > 0 (NonlocalAD)
    std::array<GridFn, 2> psi;               // terminal potentials on the grid
};

std::unique_ptr<ModelFamily> make_local_lw(const CrowdParams& p, const Grid1D& grid);
std::unique_ptr<ModelFamily> make_nonlocal_ad(const CrowdParams& p, const Grid1D& grid);

// Mollified indicator kernel phi = gamma_delta * 1_{[-r,r]}/(2r) tabulated at
// offsets k*dx, k = -K..K, with K*dx covering r + delta. gamma is the standard
// unit-mass bump supported on [-1,1]. The table is even bitwise (built from
// |offset|) and returned as the 2K+1 values in offset order.
std::vector<double> tabulate_mollified_kernel(double r, double delta, double dx);

struct GradientCheck {
    double analytic;   // envelope value dH/dq = g(x, m, v_hat(x,m,q))
    double fd;         // central difference of H in q
    double rel_error;  // |analytic - fd| / (1 + |analytic|)
};

GradientCheck check_hamiltonian_gradient(const ModelFamily& model, int pop, double x,
                                         const MPoint& m, double q, double h);

} // namespace mf2pop
