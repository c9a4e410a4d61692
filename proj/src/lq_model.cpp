#include "mf2pop/lq_model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace mf2pop {

namespace {

void require_shape(const Mat& M, int rows, int cols, const char* what) {
    if (M.rows() != rows || M.cols() != cols)
        throw ParameterError(std::string("lq: ") + what + " has wrong shape");
}

void require_sym_psd(const Mat& M, const char* what) {
    if (!M.isApprox(M.transpose(), 1e-12))
        throw ParameterError(std::string("lq: ") + what + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw ParameterError(std::string("lq: ") + what + " must be positive semi-definite");
}

} // namespace

void LQParams::validate() {
    if (n < 1 || d < 1) throw ParameterError("lq: n and d must be >= 1");
    if (!(T > 0.0)) throw ParameterError("lq: T must be positive");
    for (int i = 0; i < 2; ++i) {
        const auto si = static_cast<size_t>(i);
        if (!(sigma[si] > 0.0)) throw ParameterError("lq: sigma must be > 0");
        require_shape(A[si], n, n, "A");
        require_shape(B[si], n, d, "B");
        require_shape(Q[si], n, n, "Q");
        require_shape(R[si], d, d, "R");
        require_shape(QT[si], n, n, "QT");
        require_sym_psd(Q[si], "Q");
        require_sym_psd(QT[si], "QT");
        if (!R[si].isApprox(R[si].transpose(), 1e-12))
            throw ParameterError("lq: R must be symmetric");
        Eigen::LLT<Mat> llt(R[si]);
        if (llt.info() != Eigen::Success)
            throw ParameterError("lq: R must be positive definite");
        if (m0[si].size() != n) throw ParameterError("lq: m0 has wrong size");
        for (int j = 0; j < 2; ++j) {
            const auto sj = static_cast<size_t>(j);
            require_shape(Abar[si][sj], n, n, "Abar");
            require_shape(Qbar[si][sj], n, n, "Qbar");
            require_shape(S[si][sj], n, n, "S");
            require_shape(QbarT[si][sj], n, n, "QbarT");
            require_shape(ST[si][sj], n, n, "ST");
            require_sym_psd(Qbar[si][sj], "Qbar");
            require_sym_psd(QbarT[si][sj], "QbarT");
        }
        Rinv_Bt[si] = llt.solve(B[si].transpose());
        Btilde[si] = B[si] * Rinv_Bt[si];
    }
}

LQParams LQParams::scalar(double A_, double Abar_diag, double Abar_off, double B_, double Q_,
                          double Qbar_, double R_, double S_, double QT_, double QbarT_,
                          double ST_, double sigma_, double T_, double m0_1, double m0_2) {
    LQParams p;
    p.n = 1;
    p.d = 1;
    auto one = [](double v) { return Mat::Constant(1, 1, v); };
    for (int i = 0; i < 2; ++i) {
        const auto si = static_cast<size_t>(i);
        p.A[si] = one(A_);
        p.B[si] = one(B_);
        p.Q[si] = one(Q_);
        p.R[si] = one(R_);
        p.QT[si] = one(QT_);
        p.sigma[si] = sigma_;
        for (int j = 0; j < 2; ++j) {
            const auto sj = static_cast<size_t>(j);
            p.Abar[si][sj] = one(i == j ? Abar_diag : Abar_off);
            p.Qbar[si][sj] = one(Qbar_);
            p.S[si][sj] = one(S_);
            p.QbarT[si][sj] = one(QbarT_);
            p.ST[si][sj] = one(ST_);
        }
    }
    p.T = T_;
    p.m0[0] = Vec::Constant(1, m0_1);
    p.m0[1] = Vec::Constant(1, m0_2);
    p.validate();
    return p;
}

namespace {

// Scalar-state specialization of the LQ data for the PDE solvers. The density
// enters only through first moments; the coupling integrals reduce to slice
// constants times x:
//   d_{m_i} H_j integrated against m_j
//     = [ (int Du_j m_j) Abar[j][i] - (mbar_j - S[j][i] mbar_i) Qbar[j][i] S[j][i] ] x
//   d_{m_i} h_j integrated against m_j(T)
//     = -  (mbar_j - ST[j][i] mbar_i) QbarT[j][i] ST[j][i] x
//   d_{m_i} (dH_k/dq_k) kernel = Abar[k][i] x.
class LQFamily1D final : public ModelFamily {
public:
    LQFamily1D(const LQParams& p, const Grid1D& grid) : p_(p), grid_(grid) {
        if (p_.n != 1 || p_.d != 1)
            throw ParameterError("lq family for the PDE path requires n = d = 1");
        p_.validate();
        for (int i = 0; i < 2; ++i) {
            const auto si = static_cast<size_t>(i);
            a_[si] = p_.A[si](0, 0);
            b_[si] = p_.B[si](0, 0);
            q_[si] = p_.Q[si](0, 0);
            qT_[si] = p_.QT[si](0, 0);
            btilde_[si] = p_.Btilde[si](0, 0);
            rinv_bt_[si] = p_.Rinv_Bt[si](0, 0);
            r_[si] = p_.R[si](0, 0);
            for (int j = 0; j < 2; ++j) {
                const auto sj = static_cast<size_t>(j);
                abar_[si][sj] = p_.Abar[si][sj](0, 0);
                qbar_[si][sj] = p_.Qbar[si][sj](0, 0);
                s_[si][sj] = p_.S[si][sj](0, 0);
                qbarT_[si][sj] = p_.QbarT[si][sj](0, 0);
                sT_[si][sj] = p_.ST[si][sj](0, 0);
            }
        }
    }

    std::string_view name() const override { return "lq"; }
    double sigma(int pop) const override {
        check_pop(pop);
        return p_.sigma[static_cast<size_t>(pop)];
    }

    void summarize(std::span<const double> m1, std::span<const double> m2,
                   MSummary& out) const override {
        out.m1 = m1;
        out.m2 = m2;
        out.mean[0] = first_moment(m1, grid_);
        out.mean[1] = first_moment(m2, grid_);
    }

    MPoint point(const MSummary& m, int) const override { return {m.mean[0], m.mean[1]}; }
    MPoint point_at(const MSummary& m, double, const Grid1D&) const override {
        return {m.mean[0], m.mean[1]};
    }

    double drift(int pop, double x, const MPoint& m, double v) const override {
        check_pop(pop);
        const auto i = static_cast<size_t>(pop);
        return a_[i] * x + abar_[i][0] * m.v1 + abar_[i][1] * m.v2 + b_[i] * v;
    }

    double running_cost(int pop, double x, const MPoint& m, double v) const override {
        check_pop(pop);
        const auto i = static_cast<size_t>(pop);
        double s = x * q_[i] * x + v * r_[i] * v;
        for (int j = 0; j < 2; ++j) {
            const auto sj = static_cast<size_t>(j);
            const double dev = x - s_[i][sj] * m.v(j);
            s += dev * qbar_[i][sj] * dev;
        }
        return 0.5 * s;
    }

    double hamiltonian(int pop, double x, const MPoint& m, double q) const override {
        check_pop(pop);
        const auto i = static_cast<size_t>(pop);
        double s = q * (a_[i] * x + abar_[i][0] * m.v1 + abar_[i][1] * m.v2) -
                   0.5 * q * btilde_[i] * q;
        double cost = x * q_[i] * x;
        for (int j = 0; j < 2; ++j) {
            const auto sj = static_cast<size_t>(j);
            const double dev = x - s_[i][sj] * m.v(j);
            cost += dev * qbar_[i][sj] * dev;
        }
        return s + 0.5 * cost;
    }

    double optimal_control(int pop, double, const MPoint&, double q) const override {
        check_pop(pop);
        return -rinv_bt_[static_cast<size_t>(pop)] * q;
    }

    double terminal_cost(int pop, int node, const MSummary& mT) const override {
        check_pop(pop);
        const auto i = static_cast<size_t>(pop);
        const double x = grid_.x(node);
        double s = x * qT_[i] * x;
        for (int j = 0; j < 2; ++j) {
            const auto sj = static_cast<size_t>(j);
            const double dev = x - sT_[i][sj] * mT.mean[sj];
            s += dev * qbarT_[i][sj] * dev;
        }
        return 0.5 * s;
    }

    double coupling_dm(int i, int j, int node, const MSummary& m,
                       double du_m_int_j) const override {
        check_pop(i);
        check_pop(j);
        const auto si = static_cast<size_t>(i), sj = static_cast<size_t>(j);
        const double x = grid_.x(node);
        const double c = du_m_int_j * abar_[sj][si] -
                         (m.mean[sj] - s_[sj][si] * m.mean[si]) * qbar_[sj][si] * s_[sj][si];
        return c * x;
    }

    double terminal_coupling_dm(int i, int j, int node, const MSummary& mT) const override {
        check_pop(i);
        check_pop(j);
        const auto si = static_cast<size_t>(i), sj = static_cast<size_t>(j);
        const double x = grid_.x(node);
        return -(mT.mean[sj] - sT_[sj][si] * mT.mean[si]) * qbarT_[sj][si] * sT_[sj][si] * x;
    }

    bool has_cross_drift_kernels() const override {
        return abar_[0][1] != 0.0 || abar_[1][0] != 0.0;
    }
    bool has_drift_kernels() const override {
        return has_cross_drift_kernels() || abar_[0][0] != 0.0 || abar_[1][1] != 0.0;
    }

    double drift_kernel_coupling(int i, int k, int node, const MSummary&,
                                 double w_m_int) const override {
        check_pop(i);
        check_pop(k);
        return abar_[static_cast<size_t>(k)][static_cast<size_t>(i)] * grid_.x(node) *
               w_m_int;
    }

    LawSummaryKind law_summary_kind() const override { return LawSummaryKind::Moments; }

private:
    LQParams p_;
    Grid1D grid_;
    std::array<double, 2> a_{}, b_{}, q_{}, qT_{}, btilde_{}, rinv_bt_{}, r_{};
    std::array<std::array<double, 2>, 2> abar_{}, qbar_{}, s_{}, qbarT_{}, sT_{};
};

} // namespace

std::unique_ptr<ModelFamily> make_lq_family(const LQParams& p, const Grid1D& grid) {
    return std::make_unique<LQFamily1D>(p, grid);
}

} // namespace mf2pop
