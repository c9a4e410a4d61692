#pragma once

#include <cstdint>
#include <vector>

#include "mf2pop/model.hpp"

namespace mf2pop {

struct ParticleEnsemble {
    std::array<std::vector<double>, 2> positions;
    std::uint64_t rng_seed = 0;
    int N = 0;
};

// Per-slice empirical moments of each population.
struct MomentRecord {
    double mean = 0.0;
    double second = 0.0;
};

struct SimResult {
    // moments[i][k]: population i at time slice k, k = 0..nt.
    std::array<std::vector<MomentRecord>, 2> moments;
    ParticleEnsemble final_state;
    // Snapshots at the requested slice indices, in request order.
    std::vector<int> snapshot_slices;
    std::vector<ParticleEnsemble> snapshots;
};

struct SimOptions {
    int threads = 0;                   // 0: hardware concurrency
    std::vector<int> snapshot_slices;  // slice indices to capture
};

// Euler-Maruyama for the two-population dynamics
//   dX_i = g_i(X_i, law summary, v_i(X_i, t)) dt + sigma_i dW_i,
// with the time step of `grid` and the feedback controls of a solved system
// (linear interpolation in x, clamped outside the domain). The law argument
// is the summary the family declares, computed from the ensemble itself
// (empirical first moments for mean-coupled models; the crowd drifts do not
// read the law). Initial positions are drawn from rho0 by inverse-CDF
// sampling of the piecewise-linear grid density.
//
// Randomness is counter-based: each (population, particle, step) triple hashes
// the seed independently, so identical seeds give bit-identical trajectories
// and the parallel partition cannot change the result. Reductions (moments,
// empirical means) are summed over fixed-size chunks combined in fixed order,
// which keeps them bitwise stable across thread counts.
//
// Throws StepError when a particle leaves the domain by more than one domain
// width.
SimResult simulate(const ModelFamily& model, const std::array<FieldTraj, 2>& controls,
                   const std::array<GridFn, 2>& rho0, int N, std::uint64_t seed,
                   const Grid1D& grid, const SimOptions& opts = {});

// Gaussian kernel density estimate at the grid nodes, renormalized to unit
// trapezoid mass. bandwidth <= 0 selects Silverman's rule (falling back to dx
// for degenerate ensembles).
GridFn kde(std::span<const double> particles, const Grid1D& grid, double bandwidth = 0.0);

double silverman_bandwidth(std::span<const double> particles, const Grid1D& grid);

} // namespace mf2pop
