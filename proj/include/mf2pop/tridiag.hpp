#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mf2pop/errors.hpp"

namespace mf2pop {

// Tridiagonal solver with a cached LU factorization (Thomas algorithm).
// The diffusion matrices here are constant across time steps, so we factor
// once and reuse the factors for every solve.
class TridiagSolver {
public:
    TridiagSolver() = default;

    // lower[i] multiplies x[i-1] in row i (lower[0] unused),
    // upper[i] multiplies x[i+1] in row i (upper[n-1] unused).
    TridiagSolver(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper)
        : lo_(std::move(lower)), di_(std::move(diag)), up_(std::move(upper)) {
        const size_t n = di_.size();
        for (size_t i = 1; i < n; ++i) {
            const double denom = di_[i - 1];
            if (std::abs(denom) < 1e-300)
                throw NumericalError("tridiagonal solve breakdown: zero pivot");
            lo_[i] /= denom;
            di_[i] -= lo_[i] * up_[i - 1];
        }
        if (std::abs(di_[n - 1]) < 1e-300)
            throw NumericalError("tridiagonal solve breakdown: zero pivot");
    }

    void solve(std::span<const double> rhs, std::span<double> x) const {
        const size_t n = di_.size();
        x[0] = rhs[0];
        for (size_t i = 1; i < n; ++i) x[i] = rhs[i] - lo_[i] * x[i - 1];
        x[n - 1] /= di_[n - 1];
        for (size_t i = n - 1; i-- > 0;) x[i] = (x[i] - up_[i] * x[i + 1]) / di_[i];
    }

    size_t size() const { return di_.size(); }

private:
    std::vector<double> lo_, di_, up_;
};

} // namespace mf2pop
