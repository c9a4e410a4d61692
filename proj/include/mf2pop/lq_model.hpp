#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>

#include "mf2pop/model.hpp"

namespace mf2pop {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Linear-quadratic problem data for two populations, state dimension n and
// control dimension d:
//   g_i(x,m,v)  = A[i] x + sum_j Abar[i][j] mbar_j + B[i] v
//   f_i(x,m,v)  = 1/2 [ x'Q[i]x + v'R[i]v + sum_j (x - S[i][j] mbar_j)' Qbar[i][j] (...) ]
//   h_i(x,m)    = 1/2 [ x'QT[i]x + sum_j (x - ST[i][j] mbar_j)' QbarT[i][j] (...) ]
// where mbar_j is the first moment of m_j. Matrices are constant in time.
// Q, Qbar and their terminal counterparts must be symmetric PSD; R must be
// symmetric positive definite (validated by `validate`, which also caches
// R^{-1} B' per population).
struct LQParams {
    int n = 1;
    int d = 1;
    std::array<Mat, 2> A;
    std::array<std::array<Mat, 2>, 2> Abar;
    std::array<Mat, 2> B;
    std::array<Mat, 2> Q;
    std::array<std::array<Mat, 2>, 2> Qbar;
    std::array<Mat, 2> R;
    std::array<std::array<Mat, 2>, 2> S;
    std::array<Mat, 2> QT;
    std::array<std::array<Mat, 2>, 2> QbarT;
    std::array<std::array<Mat, 2>, 2> ST;
    std::array<double, 2> sigma{1.0, 1.0};
    double T = 1.0;
    std::array<Vec, 2> m0;   // initial first moments

    // Cached by validate():
    std::array<Mat, 2> Rinv_Bt;   // R^{-1} B'
    std::array<Mat, 2> Btilde;    // B R^{-1} B'

    void validate();

    double a_coeff(int i) const { return 0.5 * sigma[static_cast<size_t>(i)] * sigma[static_cast<size_t>(i)]; }

    // Convenience scalar constructor (n = d = 1); matrices passed as numbers.
    static LQParams scalar(double A, double Abar_diag, double Abar_off, double B, double Q,
                           double Qbar, double R, double S, double QT, double QbarT, double ST,
                           double sigma, double T, double m0_1, double m0_2);
};

// Scalar-state LQ model family for the PDE path (requires n = d = 1).
std::unique_ptr<ModelFamily> make_lq_family(const LQParams& p, const Grid1D& grid);

} // namespace mf2pop
