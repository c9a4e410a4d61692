#include "mf2pop/lq_riccati.hpp"

#include <cmath>

namespace mf2pop {

namespace {

constexpr double kPicardTol = 1e-10;
constexpr int kPicardMaxIters = 10000;
constexpr double kMbarFloor = 1e-12;

// Cubic Hermite midpoint of a trajectory segment from its endpoint values and
// endpoint derivatives: O(dt^4) accurate, so RK4 stages that read other
// trajectories at half steps keep their order.
template <typename T>
T hermite_mid(const T& y0, const T& y1, const T& f0, const T& f1, double dt) {
    return 0.5 * (y0 + y1) + (dt / 8.0) * (f0 - f1);
}

struct PopTraj {
    std::vector<Mat> node, mid;  // mid[k] approximates the value at t_k + dt/2
};
struct VecTraj {
    std::vector<Vec> node, mid;
};

} // namespace

RiccatiBlocks build_riccati_blocks(LQRegime regime, const LQParams& p) {
    const int n = p.n;
    RiccatiBlocks out;
    out.B = Mat::Zero(2 * n, 2 * n);
    out.A = Mat::Zero(2 * n, 2 * n);
    out.Abar = Mat::Zero(2 * n, 2 * n);
    out.G = Mat::Zero(2 * n, 2 * n);
    out.G_T = Mat::Zero(2 * n, 2 * n);

    for (int i = 0; i < 2; ++i) {
        const auto si = static_cast<size_t>(i);
        const auto so = static_cast<size_t>(1 - i);
        const int o = 1 - i;
        out.B.block(i * n, i * n, n, n) = p.Btilde[si];
        out.A.block(i * n, i * n, n, n) = p.A[si];
        for (int j = 0; j < 2; ++j)
            out.Abar.block(i * n, j * n, n, n) = p.Abar[si][static_cast<size_t>(j)];

        // Diagonal running block.
        Mat Gd = -p.Q[si];
        for (int j = 0; j < 2; ++j) Gd -= p.Qbar[si][static_cast<size_t>(j)];
        if (regime == LQRegime::CMFC) {
            Gd += p.Qbar[si][si] * p.S[si][si] + p.S[si][si].transpose() * p.Qbar[si][si];
            for (int j = 0; j < 2; ++j) {
                const auto sj = static_cast<size_t>(j);
                Gd -= p.S[sj][si].transpose() * p.Qbar[sj][si] * p.S[sj][si];
            }
        } else {
            Gd += 0.5 * (p.Qbar[si][si] * p.S[si][si] + p.S[si][si].transpose() * p.Qbar[si][si]);
        }
        out.G.block(i * n, i * n, n, n) = Gd;

        // Off-diagonal running block (row i, column o).
        Mat Go;
        if (regime == LQRegime::CMFC)
            Go = p.S[so][si].transpose() * p.Qbar[so][si] + p.Qbar[si][so] * p.S[si][so];
        else
            Go = 0.5 * (p.Qbar[si][so] * p.S[si][so] + p.S[si][so].transpose() * p.Qbar[si][so]);
        out.G.block(i * n, o * n, n, n) = Go;

        // Terminal blocks: the values K(T) must take for
        // K(T) mbar(T) = P(T) mbar(T) + nu(T) to hold for every mbar(T).
        Mat KTd = p.QT[si];
        for (int j = 0; j < 2; ++j) KTd += p.QbarT[si][static_cast<size_t>(j)];
        KTd -= p.QbarT[si][si] * p.ST[si][si];
        if (regime == LQRegime::CMFC) {
            KTd -= p.ST[si][si].transpose() * p.QbarT[si][si];
            for (int j = 0; j < 2; ++j) {
                const auto sj = static_cast<size_t>(j);
                KTd += p.ST[sj][si].transpose() * p.QbarT[sj][si] * p.ST[sj][si];
            }
        }
        out.G_T.block(i * n, i * n, n, n) = KTd;

        Mat KTo = -p.QbarT[si][so] * p.ST[si][so];
        if (regime == LQRegime::CMFC) KTo -= p.ST[so][si].transpose() * p.QbarT[so][si];
        out.G_T.block(i * n, o * n, n, n) = KTo;
    }
    return out;
}

namespace {

// Forward-time right-hand sides of the component ODE systems.

Mat p_rhs(const LQParams& p, int i, const Mat& P) {
    const auto si = static_cast<size_t>(i);
    Mat rhs = P * p.Btilde[si] * P - P * p.A[si] - p.A[si].transpose() * P - p.Q[si];
    for (int j = 0; j < 2; ++j) rhs -= p.Qbar[si][static_cast<size_t>(j)];
    return rhs;
}

Mat p_terminal(const LQParams& p, int i) {
    const auto si = static_cast<size_t>(i);
    Mat PT = p.QT[si];
    for (int j = 0; j < 2; ++j) PT += p.QbarT[si][static_cast<size_t>(j)];
    return PT;
}

Vec nu_terminal(LQRegime regime, const LQParams& p, int i, const std::array<Vec, 2>& mT) {
    const auto si = static_cast<size_t>(i);
    Vec out = Vec::Zero(p.n);
    for (int j = 0; j < 2; ++j) {
        const auto sj = static_cast<size_t>(j);
        out -= p.QbarT[si][sj] * p.ST[si][sj] * mT[sj];
    }
    if (regime == LQRegime::CMFC) {
        for (int k = 0; k < 2; ++k) {
            const auto sk = static_cast<size_t>(k);
            out -= p.ST[sk][si].transpose() * p.QbarT[sk][si] * (mT[sk] - p.ST[sk][si] * mT[si]);
        }
    }
    return out;
}

// d(nu^i)/dt given the slice values of P, nu (both populations), mbar.
Vec nu_rhs(LQRegime regime, const LQParams& p, int i, const std::array<Mat, 2>& P,
           const std::array<Vec, 2>& nu, const std::array<Vec, 2>& mbar) {
    const auto si = static_cast<size_t>(i);
    Vec minus_dot = (p.A[si].transpose() - P[si] * p.Btilde[si]) * nu[si];
    for (int j = 0; j < 2; ++j) {
        const auto sj = static_cast<size_t>(j);
        minus_dot += 0.5 *
                     (P[si] * p.Abar[si][sj] + p.Abar[si][sj].transpose() * P[si] -
                      p.Qbar[si][sj] * p.S[si][sj] - p.S[si][sj].transpose() * p.Qbar[si][sj]) *
                     mbar[sj];
    }
    if (regime == LQRegime::CMFC) {
        for (int k = 0; k < 2; ++k) {
            const auto sk = static_cast<size_t>(k);
            minus_dot += p.Abar[sk][si].transpose() * (P[sk] * mbar[sk] + nu[sk]);
            minus_dot -= p.S[sk][si].transpose() * p.Qbar[sk][si] *
                         (mbar[sk] - p.S[sk][si] * mbar[si]);
        }
    }
    return -minus_dot;
}

Vec mbar_rhs(const LQParams& p, int i, const std::array<Mat, 2>& P, const std::array<Vec, 2>& nu,
             const std::array<Vec, 2>& mbar) {
    const auto si = static_cast<size_t>(i);
    Vec dot = p.A[si] * mbar[si] - p.Btilde[si] * (P[si] * mbar[si] + nu[si]);
    for (int j = 0; j < 2; ++j) {
        const auto sj = static_cast<size_t>(j);
        dot += p.Abar[si][sj] * mbar[sj];
    }
    return dot;
}

double tau_rhs(const LQParams& p, int i, const Mat& P, const std::array<Vec, 2>& nu,
               const std::array<Vec, 2>& mbar) {
    const auto si = static_cast<size_t>(i);
    double minus_dot = p.a_coeff(i) * P.trace();
    for (int j = 0; j < 2; ++j) {
        const auto sj = static_cast<size_t>(j);
        minus_dot += nu[si].dot(p.Abar[si][sj] * mbar[sj]);
        const Vec sm = p.S[si][sj] * mbar[sj];
        minus_dot += 0.5 * sm.dot(p.Qbar[si][sj] * sm);
    }
    minus_dot -= 0.5 * nu[si].dot(p.Btilde[si] * nu[si]);
    return -minus_dot;
}

double tau_terminal(const LQParams& p, int i, const std::array<Vec, 2>& mT) {
    const auto si = static_cast<size_t>(i);
    double t = 0.0;
    for (int j = 0; j < 2; ++j) {
        const auto sj = static_cast<size_t>(j);
        const Vec sm = p.ST[si][sj] * mT[sj];
        t += 0.5 * sm.dot(p.QbarT[si][sj] * sm);
    }
    return t;
}

struct SliceRef {
    std::array<Mat, 2> P;
    std::array<Vec, 2> nu;
    std::array<Vec, 2> mbar;
};

// Reads trajectory values at RK4 stage times for a step between nodes k and
// k+1: stage 0 -> node k, stage 1 -> midpoint k, stage 2 -> node k+1.
class StageReader {
public:
    StageReader(const std::array<PopTraj, 2>* P, const std::array<VecTraj, 2>* nu,
                const std::array<VecTraj, 2>* mbar)
        : P_(P), nu_(nu), mbar_(mbar) {}

    SliceRef at(int k, int stage) const {
        SliceRef s;
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            const auto sk = static_cast<size_t>(k);
            if (P_) {
                const auto& t = (*P_)[si];
                s.P[si] = stage == 0 ? t.node[sk] : (stage == 1 ? t.mid[sk] : t.node[sk + 1]);
            }
            if (nu_) {
                const auto& t = (*nu_)[si];
                s.nu[si] = stage == 0 ? t.node[sk] : (stage == 1 ? t.mid[sk] : t.node[sk + 1]);
            }
            if (mbar_) {
                const auto& t = (*mbar_)[si];
                s.mbar[si] = stage == 0 ? t.node[sk] : (stage == 1 ? t.mid[sk] : t.node[sk + 1]);
            }
        }
        return s;
    }

private:
    const std::array<PopTraj, 2>* P_;
    const std::array<VecTraj, 2>* nu_;
    const std::array<VecTraj, 2>* mbar_;
};

} // namespace

RiccatiState integrate_lq(LQRegime regime, const LQParams& params, int nt) {
    if (nt < 10) throw ParameterError("integrate_lq: nt must be >= 10");
    LQParams p = params;
    p.validate();
    const int n = p.n;
    const double dt = p.T / nt;
    const auto nodes = static_cast<size_t>(nt + 1);

    RiccatiState st;
    st.regime = regime;
    st.n = n;
    st.nt = nt;
    st.dt = dt;

    // --- P: backward RK4, autonomous and regime-independent. -------------
    std::array<PopTraj, 2> P;
    for (int i = 0; i < 2; ++i) {
        auto& t = P[static_cast<size_t>(i)];
        t.node.assign(nodes, Mat());
        t.mid.assign(static_cast<size_t>(nt), Mat());
        t.node[static_cast<size_t>(nt)] = p_terminal(p, i);
        const double h = -dt;
        for (int k = nt - 1; k >= 0; --k) {
            const Mat& y = t.node[static_cast<size_t>(k + 1)];
            const Mat k1 = p_rhs(p, i, y);
            const Mat k2 = p_rhs(p, i, y + 0.5 * h * k1);
            const Mat k3 = p_rhs(p, i, y + 0.5 * h * k2);
            const Mat k4 = p_rhs(p, i, y + h * k3);
            Mat next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            next = 0.5 * (next + next.transpose().eval());  // kill symmetry drift
            t.node[static_cast<size_t>(k)] = next;
        }
        for (int k = 0; k < nt; ++k)
            t.mid[static_cast<size_t>(k)] = hermite_mid(
                t.node[static_cast<size_t>(k)], t.node[static_cast<size_t>(k + 1)],
                p_rhs(p, i, t.node[static_cast<size_t>(k)]),
                p_rhs(p, i, t.node[static_cast<size_t>(k + 1)]), dt);
    }

    // --- (mbar, nu): linear forward-backward pair. ------------------------
    std::array<VecTraj, 2> nu, mbar;
    for (int i = 0; i < 2; ++i) {
        nu[static_cast<size_t>(i)].node.assign(nodes, Vec::Zero(n));
        nu[static_cast<size_t>(i)].mid.assign(static_cast<size_t>(nt), Vec::Zero(n));
        mbar[static_cast<size_t>(i)].node.assign(nodes, Vec::Zero(n));
        mbar[static_cast<size_t>(i)].mid.assign(static_cast<size_t>(nt), Vec::Zero(n));
    }

    auto integrate_mbar = [&](const std::array<VecTraj, 2>& nu_in, std::array<VecTraj, 2>& out) {
        StageReader rd(&P, &nu_in, nullptr);
        for (int i = 0; i < 2; ++i)
            out[static_cast<size_t>(i)].node[0] = p.m0[static_cast<size_t>(i)];
        for (int k = 0; k < nt; ++k) {
            const SliceRef s0 = rd.at(k, 0), s1 = rd.at(k, 1), s2 = rd.at(k, 2);
            std::array<Vec, 2> y{out[0].node[static_cast<size_t>(k)],
                                 out[1].node[static_cast<size_t>(k)]};
            auto f = [&](const SliceRef& s, const std::array<Vec, 2>& yy) {
                return std::array<Vec, 2>{mbar_rhs(p, 0, s.P, s.nu, yy),
                                          mbar_rhs(p, 1, s.P, s.nu, yy)};
            };
            const auto k1 = f(s0, y);
            const auto k2 = f(s1, {y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]});
            const auto k3 = f(s1, {y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]});
            const auto k4 = f(s2, {y[0] + dt * k3[0], y[1] + dt * k3[1]});
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                out[si].node[static_cast<size_t>(k + 1)] =
                    y[si] + (dt / 6.0) * (k1[si] + 2.0 * k2[si] + 2.0 * k3[si] + k4[si]);
            }
        }
        // Midpoints from the freshly integrated nodes.
        for (int k = 0; k < nt; ++k) {
            const SliceRef s0 = rd.at(k, 0), s2 = rd.at(k, 2);
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                const auto sk = static_cast<size_t>(k);
                const std::array<Vec, 2> y0{out[0].node[sk], out[1].node[sk]};
                const std::array<Vec, 2> y1{out[0].node[sk + 1], out[1].node[sk + 1]};
                out[si].mid[sk] =
                    hermite_mid(out[si].node[sk], out[si].node[sk + 1],
                                mbar_rhs(p, i, s0.P, s0.nu, y0), mbar_rhs(p, i, s2.P, s2.nu, y1),
                                dt);
            }
        }
    };

    auto integrate_nu = [&](const std::array<VecTraj, 2>& mbar_in, std::array<VecTraj, 2>& out) {
        StageReader rd(&P, nullptr, &mbar_in);
        const std::array<Vec, 2> mT{mbar_in[0].node[static_cast<size_t>(nt)],
                                    mbar_in[1].node[static_cast<size_t>(nt)]};
        out[0].node[static_cast<size_t>(nt)] = nu_terminal(regime, p, 0, mT);
        out[1].node[static_cast<size_t>(nt)] = nu_terminal(regime, p, 1, mT);
        const double h = -dt;
        for (int k = nt - 1; k >= 0; --k) {
            const SliceRef s2 = rd.at(k, 2), s1 = rd.at(k, 1), s0 = rd.at(k, 0);
            std::array<Vec, 2> y{out[0].node[static_cast<size_t>(k + 1)],
                                 out[1].node[static_cast<size_t>(k + 1)]};
            auto f = [&](const SliceRef& s, const std::array<Vec, 2>& yy) {
                return std::array<Vec, 2>{nu_rhs(regime, p, 0, s.P, yy, s.mbar),
                                          nu_rhs(regime, p, 1, s.P, yy, s.mbar)};
            };
            const auto k1 = f(s2, y);
            const auto k2 = f(s1, {y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]});
            const auto k3 = f(s1, {y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]});
            const auto k4 = f(s0, {y[0] + h * k3[0], y[1] + h * k3[1]});
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                out[si].node[static_cast<size_t>(k)] =
                    y[si] + (h / 6.0) * (k1[si] + 2.0 * k2[si] + 2.0 * k3[si] + k4[si]);
            }
        }
        for (int k = 0; k < nt; ++k) {
            const SliceRef s0 = rd.at(k, 0), s2 = rd.at(k, 2);
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                const auto sk = static_cast<size_t>(k);
                const std::array<Vec, 2> y0{out[0].node[sk], out[1].node[sk]};
                const std::array<Vec, 2> y1{out[0].node[sk + 1], out[1].node[sk + 1]};
                out[si].mid[sk] = hermite_mid(out[si].node[sk], out[si].node[sk + 1],
                                              nu_rhs(regime, p, i, s0.P, y0, s0.mbar),
                                              nu_rhs(regime, p, i, s2.P, y1, s2.mbar), dt);
            }
        }
    };

    // Picard over the (mbar, nu) pair; the system is linear so the iteration
    // is a linear fixed point.
    bool converged = false;
    double first_change = -1.0;
    for (int it = 1; it <= kPicardMaxIters; ++it) {
        std::array<VecTraj, 2> mbar_new = mbar, nu_new = nu;
        integrate_mbar(nu, mbar_new);
        integrate_nu(mbar_new, nu_new);
        double change = 0.0;
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            for (size_t k = 0; k < nodes; ++k) {
                change = std::max(change,
                                  (mbar_new[si].node[k] - mbar[si].node[k]).cwiseAbs().maxCoeff());
                change = std::max(change,
                                  (nu_new[si].node[k] - nu[si].node[k]).cwiseAbs().maxCoeff());
            }
        }
        mbar = std::move(mbar_new);
        nu = std::move(nu_new);
        st.picard_iterations = it;
        if (change <= kPicardTol) {
            converged = true;
            break;
        }
        if (first_change < 0.0) first_change = change;
        else if (change > 100.0 * first_change) break;  // clearly not contracting
    }

    if (!converged) {
        // Stacked linear two-point solve on z = (mbar_1, mbar_2, nu^1, nu^2):
        // integrate the fundamental matrix forward and solve the boundary
        // condition nu(T) = L mbar(T) for nu(0).
        st.used_two_point_fallback = true;
        const int m = 4 * n;
        auto system_matrix = [&](const std::array<Mat, 2>& Pv) {
            Mat M = Mat::Zero(m, m);
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                // mbar_i row block.
                M.block(i * n, i * n, n, n) += p.A[si] - p.Btilde[si] * Pv[si];
                for (int j = 0; j < 2; ++j)
                    M.block(i * n, j * n, n, n) += p.Abar[si][static_cast<size_t>(j)];
                M.block(i * n, (2 + i) * n, n, n) = -p.Btilde[si];
                // nu^i row block.
                M.block((2 + i) * n, (2 + i) * n, n, n) =
                    -(p.A[si].transpose() - Pv[si] * p.Btilde[si]);
                for (int j = 0; j < 2; ++j) {
                    const auto sj = static_cast<size_t>(j);
                    M.block((2 + i) * n, j * n, n, n) -=
                        0.5 * (Pv[si] * p.Abar[si][sj] + p.Abar[si][sj].transpose() * Pv[si] -
                               p.Qbar[si][sj] * p.S[si][sj] -
                               p.S[si][sj].transpose() * p.Qbar[si][sj]);
                }
                if (regime == LQRegime::CMFC) {
                    for (int k = 0; k < 2; ++k) {
                        const auto sk = static_cast<size_t>(k);
                        M.block((2 + i) * n, k * n, n, n) -=
                            p.Abar[sk][si].transpose() * Pv[sk];
                        M.block((2 + i) * n, (2 + k) * n, n, n) -= p.Abar[sk][si].transpose();
                        M.block((2 + i) * n, k * n, n, n) +=
                            p.S[sk][si].transpose() * p.Qbar[sk][si];
                        M.block((2 + i) * n, i * n, n, n) -= p.S[sk][si].transpose() *
                                                             p.Qbar[sk][si] * p.S[sk][si];
                    }
                }
            }
            return M;
        };

        std::vector<Mat> Phi(nodes, Mat::Identity(m, m));
        for (int k = 0; k < nt; ++k) {
            const auto sk = static_cast<size_t>(k);
            const Mat M0 = system_matrix({P[0].node[sk], P[1].node[sk]});
            const Mat M1 = system_matrix({P[0].mid[sk], P[1].mid[sk]});
            const Mat M2 = system_matrix({P[0].node[sk + 1], P[1].node[sk + 1]});
            const Mat& y = Phi[sk];
            const Mat k1 = M0 * y;
            const Mat k2 = M1 * (y + 0.5 * dt * k1);
            const Mat k3 = M1 * (y + 0.5 * dt * k2);
            const Mat k4 = M2 * (y + dt * k3);
            Phi[sk + 1] = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }

        // Terminal map nu_T = L mbar_T (linear for both regimes).
        Mat L = Mat::Zero(2 * n, 2 * n);
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            for (int j = 0; j < 2; ++j) {
                const auto sj = static_cast<size_t>(j);
                L.block(i * n, j * n, n, n) -= p.QbarT[si][sj] * p.ST[si][sj];
            }
            if (regime == LQRegime::CMFC) {
                for (int k = 0; k < 2; ++k) {
                    const auto sk = static_cast<size_t>(k);
                    L.block(i * n, k * n, n, n) -= p.ST[sk][si].transpose() * p.QbarT[sk][si];
                    L.block(i * n, i * n, n, n) +=
                        p.ST[sk][si].transpose() * p.QbarT[sk][si] * p.ST[sk][si];
                }
            }
        }

        const Mat& PhiT = Phi[static_cast<size_t>(nt)];
        const Mat Pmm = PhiT.topLeftCorner(2 * n, 2 * n);
        const Mat Pmv = PhiT.topRightCorner(2 * n, 2 * n);
        const Mat Pvm = PhiT.bottomLeftCorner(2 * n, 2 * n);
        const Mat Pvv = PhiT.bottomRightCorner(2 * n, 2 * n);
        Vec m0(2 * n);
        m0 << p.m0[0], p.m0[1];
        Eigen::FullPivLU<Mat> lu(Pvv - L * Pmv);
        if (!lu.isInvertible())
            throw NumericalError("integrate_lq: two-point boundary system is singular");
        const Vec nu0 = lu.solve((L * Pmm - Pvm) * m0);

        Vec z0(m);
        z0 << m0, nu0;
        for (size_t k = 0; k < nodes; ++k) {
            const Vec z = Phi[k] * z0;
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                mbar[si].node[k] = z.segment(i * n, n);
                nu[si].node[k] = z.segment((2 + i) * n, n);
            }
        }
        // Rebuild the midpoints from the exact nodes (Hermite, not another
        // Picard pass, which would reintroduce the non-contracting error).
        for (int k = 0; k < nt; ++k) {
            const auto sk = static_cast<size_t>(k);
            const std::array<Mat, 2> P0{P[0].node[sk], P[1].node[sk]};
            const std::array<Mat, 2> P1{P[0].node[sk + 1], P[1].node[sk + 1]};
            const std::array<Vec, 2> nu0{nu[0].node[sk], nu[1].node[sk]};
            const std::array<Vec, 2> nu1{nu[0].node[sk + 1], nu[1].node[sk + 1]};
            const std::array<Vec, 2> mb0{mbar[0].node[sk], mbar[1].node[sk]};
            const std::array<Vec, 2> mb1{mbar[0].node[sk + 1], mbar[1].node[sk + 1]};
            for (int i = 0; i < 2; ++i) {
                const auto si = static_cast<size_t>(i);
                mbar[si].mid[sk] =
                    hermite_mid(mb0[si], mb1[si], mbar_rhs(p, i, P0, nu0, mb0),
                                mbar_rhs(p, i, P1, nu1, mb1), dt);
                nu[si].mid[sk] =
                    hermite_mid(nu0[si], nu1[si], nu_rhs(regime, p, i, P0, nu0, mb0),
                                nu_rhs(regime, p, i, P1, nu1, mb1), dt);
            }
        }
    }

    // --- tau: backward RK4 given everything else. --------------------------
    std::array<std::vector<double>, 2> tau;
    {
        StageReader rd(&P, &nu, &mbar);
        const std::array<Vec, 2> mT{mbar[0].node[static_cast<size_t>(nt)],
                                    mbar[1].node[static_cast<size_t>(nt)]};
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            tau[si].assign(nodes, 0.0);
            tau[si][static_cast<size_t>(nt)] = tau_terminal(p, i, mT);
            const double h = -dt;
            for (int k = nt - 1; k >= 0; --k) {
                const SliceRef s2 = rd.at(k, 2), s1 = rd.at(k, 1), s0 = rd.at(k, 0);
                // The tau rhs does not involve tau itself, so RK4 collapses
                // to Simpson quadrature (k2 == k3).
                const double k1 = tau_rhs(p, i, s2.P[si], s2.nu, s2.mbar);
                const double k2 = tau_rhs(p, i, s1.P[si], s1.nu, s1.mbar);
                const double k3 = k2;
                const double k4 = tau_rhs(p, i, s0.P[si], s0.nu, s0.mbar);
                tau[si][static_cast<size_t>(k)] = tau[si][static_cast<size_t>(k + 1)] +
                                                  (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
    }

    // --- publish trajectories. --------------------------------------------
    for (int i = 0; i < 2; ++i) {
        const auto si = static_cast<size_t>(i);
        st.P[si] = P[si].node;
        st.nu[si] = nu[si].node;
        st.mbar[si] = mbar[si].node;
        st.tau[si] = tau[si];
    }

    // --- K. ----------------------------------------------------------------
    if (n == 1) {
        st.k_valid = true;
        for (int i = 0; i < 2 && st.k_valid; ++i)
            for (size_t k = 0; k < nodes; ++k)
                if (std::abs(st.mbar[static_cast<size_t>(i)][k](0)) < kMbarFloor) {
                    st.k_valid = false;
                    break;
                }
        if (st.k_valid) {
            st.K.assign(nodes, Mat::Zero(2, 2));
            for (size_t k = 0; k < nodes; ++k)
                for (int i = 0; i < 2; ++i) {
                    const auto si = static_cast<size_t>(i);
                    st.K[k](i, i) =
                        st.P[si][k](0, 0) + st.nu[si][k](0) / st.mbar[si][k](0);
                }
        }
    } else {
        st.K = integrate_block_riccati(regime, p, nt);
        st.k_valid = true;
    }
    if (st.k_valid) st.nu_relation_error = nu_relation_error(p, st, st.K);
    return st;
}

std::vector<Mat> integrate_block_riccati(LQRegime regime, const LQParams& params, int nt) {
    LQParams p = params;
    p.validate();
    const RiccatiBlocks blocks = build_riccati_blocks(regime, p);
    const double dt = p.T / nt;
    const Mat ApA = blocks.A + blocks.Abar;

    auto rhs = [&](const Mat& K) -> Mat {
        if (regime == LQRegime::CMFC)
            return K * blocks.B * K - ApA.transpose() * K - K * ApA + blocks.G;
        return K * blocks.B * K - blocks.A.transpose() * K - K * blocks.A - K * blocks.Abar +
               blocks.G;
    };

    std::vector<Mat> K(static_cast<size_t>(nt + 1));
    K[static_cast<size_t>(nt)] = blocks.G_T;
    const double h = -dt;
    for (int k = nt - 1; k >= 0; --k) {
        const Mat& y = K[static_cast<size_t>(k + 1)];
        const Mat k1 = rhs(y);
        const Mat k2 = rhs(y + 0.5 * h * k1);
        const Mat k3 = rhs(y + 0.5 * h * k2);
        const Mat k4 = rhs(y + h * k3);
        K[static_cast<size_t>(k)] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return K;
}

double riccati_residual(LQRegime regime, const LQParams& params, const std::vector<Mat>& K_traj,
                        const std::array<std::vector<Vec>, 2>& mbar_traj, double dt) {
    LQParams p = params;
    p.validate();
    const RiccatiBlocks blocks = build_riccati_blocks(regime, p);
    const Mat ApA = blocks.A + blocks.Abar;
    const int n = p.n;
    const int last = static_cast<int>(K_traj.size()) - 1;

    double worst = 0.0;
    for (int k = 1; k < last; ++k) {
        const auto sk = static_cast<size_t>(k);
        Vec mb(2 * n);
        mb << mbar_traj[0][sk], mbar_traj[1][sk];
        const double scale = mb.cwiseAbs().maxCoeff();
        if (scale < kMbarFloor)
            throw DomainError("riccati residual: mean vector vanished, K is ill-defined");
        const Mat Kdot = (K_traj[sk + 1] - K_traj[sk - 1]) / (2.0 * dt);
        const Mat& K = K_traj[sk];
        Mat rhs;
        if (regime == LQRegime::CMFC)
            rhs = K * blocks.B * K - ApA.transpose() * K - K * ApA + blocks.G;
        else
            rhs = K * blocks.B * K - blocks.A.transpose() * K - K * blocks.A - K * blocks.Abar +
                  blocks.G;
        worst = std::max(worst, ((Kdot - rhs) * mb).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

double riccati_residual(const LQParams& params, const RiccatiState& state) {
    if (!state.k_valid)
        throw DomainError("riccati residual: K was flagged ill-defined for this trajectory");
    return riccati_residual(state.regime, params, state.K, state.mbar, state.dt);
}

double nu_relation_error(const LQParams& params, const RiccatiState& state,
                         const std::vector<Mat>& K_traj) {
    const int n = params.n;
    double worst = 0.0;
    for (size_t k = 0; k < K_traj.size(); ++k) {
        Vec mb(2 * n), nu(2 * n), pm(2 * n);
        mb << state.mbar[0][k], state.mbar[1][k];
        nu << state.nu[0][k], state.nu[1][k];
        pm << state.P[0][k] * state.mbar[0][k], state.P[1][k] * state.mbar[1][k];
        const Vec resid = nu - (K_traj[k] * mb - pm);
        worst = std::max(worst, resid.cwiseAbs().maxCoeff());
    }
    return worst;
}

double reconstruct_value(const RiccatiState& state, const Vec& x, double t, int pop) {
    if (pop != 0 && pop != 1) throw DomainError("population index must be 0 or 1");
    const auto si = static_cast<size_t>(pop);
    double s = t / state.dt;
    s = std::min(std::max(s, 0.0), static_cast<double>(state.nt));
    const int k = std::min(static_cast<int>(s), state.nt - 1);
    const double w = s - k;
    const auto sk = static_cast<size_t>(k);
    const Mat P = (1.0 - w) * state.P[si][sk] + w * state.P[si][sk + 1];
    const Vec nu = (1.0 - w) * state.nu[si][sk] + w * state.nu[si][sk + 1];
    const double tau = (1.0 - w) * state.tau[si][sk] + w * state.tau[si][sk + 1];
    return 0.5 * x.dot(P * x) + x.dot(nu) + tau;
}

double reconstruct_value(const RiccatiState& state, double x, double t, int pop) {
    Vec xv(1);
    xv << x;
    return reconstruct_value(state, xv, t, pop);
}

} // namespace mf2pop
