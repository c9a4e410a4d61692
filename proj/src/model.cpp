#include "mf2pop/model.hpp"

#include <algorithm>
#include <cmath>

namespace mf2pop {

std::string_view to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::CMFC: return "CMFC";
        case ProblemKind::NMFC_SC1: return "NMFC_SC1";
        case ProblemKind::NMFC_SC2: return "NMFC_SC2";
        case ProblemKind::MFG: return "MFG";
    }
    throw DomainError("invalid problem kind");
}

ProblemKind problem_kind_from_string(std::string_view s) {
    if (s == "CMFC") return ProblemKind::CMFC;
    if (s == "NMFC_SC1") return ProblemKind::NMFC_SC1;
    if (s == "NMFC_SC2") return ProblemKind::NMFC_SC2;
    if (s == "MFG") return ProblemKind::MFG;
    throw DomainError("unknown problem kind: " + std::string(s));
}

GradientCheck check_hamiltonian_gradient(const ModelFamily& model, int pop, double x,
                                         const MPoint& m, double q, double h) {
    if (!(h > 0.0)) throw ParameterError("gradient check: step h must be positive");
    const double v_hat = model.optimal_control(pop, x, m, q);
    const double analytic = model.drift(pop, x, m, v_hat);
    const double fd =
        (model.hamiltonian(pop, x, m, q + h) - model.hamiltonian(pop, x, m, q - h)) / (2.0 * h);
    return GradientCheck{analytic, fd, std::abs(analytic - fd) / (1.0 + std::abs(analytic))};
}

namespace {

double interp_clamped(std::span<const double> f, double x, const Grid1D& g) {
    const double s = (x - g.x_min) / g.dx();
    if (s <= 0.0) return f[0];
    if (s >= g.nx - 1) return f[static_cast<size_t>(g.nx - 1)];
    const int j = static_cast<int>(s);
    const double w = s - j;
    return (1.0 - w) * f[static_cast<size_t>(j)] + w * f[static_cast<size_t>(j + 1)];
}

void validate_crowd_psi(CrowdParams& p, const Grid1D& grid, const char* who) {
    for (auto& psi : p.psi) {
        if (psi.empty()) psi.assign(static_cast<size_t>(grid.nx), 0.0);
        if (static_cast<int>(psi.size()) != grid.nx)
            throw ParameterError(std::string(who) + ": psi size does not match the grid");
    }
}

// -------------------------------------------------------------------------
// Local congestion model: drift is the control, running cost
//   f_i = |v|^2/2 + m_i(x) + lambda m_{-i}(x),  h_i = psi_i(x),
// giving H_i(x,m,q) = -|q|^2/2 + m_i(x) + lambda m_{-i}(x) and v_hat = -q.
// The density-derivative kernels are Dirac deltas, so the couplings evaluate
// pointwise: d_{m_i}H_i -> m_i(x), d_{m_i}H_{-i} -> lambda m_{-i}(x).
// -------------------------------------------------------------------------
class LocalLWFamily final : public ModelFamily {
public:
    LocalLWFamily(const CrowdParams& p, const Grid1D& grid) : p_(p), grid_(grid) {
        if (p_.lambda < 0.0) throw ParameterError("local_lw: lambda must be >= 0");
        if (!(p_.sigma > 0.0)) throw ParameterError("local_lw: sigma must be > 0");
        validate_crowd_psi(p_, grid, "local_lw");
    }

    std::string_view name() const override { return "local_lw"; }
    double sigma(int pop) const override {
        check_pop(pop);
        return p_.sigma;
    }

    void summarize(std::span<const double> m1, std::span<const double> m2,
                   MSummary& out) const override {
        out.m1 = m1;
        out.m2 = m2;
    }

    MPoint point(const MSummary& m, int node) const override {
        return {m.m1[static_cast<size_t>(node)], m.m2[static_cast<size_t>(node)]};
    }

    MPoint point_at(const MSummary& m, double x, const Grid1D& g) const override {
        return {interp_clamped(m.m1, x, g), interp_clamped(m.m2, x, g)};
    }

    double drift(int pop, double, const MPoint&, double v) const override {
        check_pop(pop);
        return v;
    }

    double running_cost(int pop, double, const MPoint& m, double v) const override {
        return 0.5 * v * v + congestion(pop, m);
    }

    double hamiltonian(int pop, double, const MPoint& m, double q) const override {
        return -0.5 * q * q + congestion(pop, m);
    }

    double optimal_control(int pop, double, const MPoint&, double q) const override {
        check_pop(pop);
        return -q;
    }

    double terminal_cost(int pop, int node, const MSummary&) const override {
        check_pop(pop);
        return p_.psi[static_cast<size_t>(pop)][static_cast<size_t>(node)];
    }

    double coupling_dm(int i, int j, int node, const MSummary& m, double) const override {
        check_pop(i);
        check_pop(j);
        const double mj = m.m(j)[static_cast<size_t>(node)];
        return (i == j) ? mj : p_.lambda * mj;
    }

    double terminal_coupling_dm(int, int, int, const MSummary&) const override { return 0.0; }

private:
    double congestion(int pop, const MPoint& m) const {
        check_pop(pop);
        return m.v(pop) + p_.lambda * m.v(1 - pop);
    }

    CrowdParams p_;
    Grid1D grid_;
};

// -------------------------------------------------------------------------
// Non-local aversion model: drift is the control, running cost
//   f_i = |v|^2/2 + sum_k Lambda[i][k] (phi * m_k)(x),  h_i = psi_i(x),
// with phi the mollified indicator kernel. The couplings involve the
// reflected kernel: d_{m_i}H_j integrated against m_j gives
// Lambda[j][i] (phibar * m_j)(x) with phibar(x) = phi(-x). phi is even here,
// so phibar = phi; both tables are kept and the construction asserts their
// convolutions agree.
// -------------------------------------------------------------------------
class NonlocalADFamily final : public ModelFamily {
public:
    NonlocalADFamily(const CrowdParams& p, const Grid1D& grid) : p_(p), grid_(grid) {
        if (!(p_.sigma > 0.0)) throw ParameterError("nonlocal_ad: sigma must be > 0");
        if (!(p_.kernel_radius > 0.0)) throw ParameterError("nonlocal_ad: kernel_radius must be > 0");
        if (!(p_.mollifier_width > 0.0))
            throw ParameterError("nonlocal_ad: mollifier_width must be > 0");
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k)
                if (p_.Lambda[static_cast<size_t>(i)][static_cast<size_t>(k)] < 0.0)
                    throw ParameterError("nonlocal_ad: Lambda entries must be >= 0");
        validate_crowd_psi(p_, grid, "nonlocal_ad");

        kernel_ = tabulate_mollified_kernel(p_.kernel_radius, p_.mollifier_width, grid.dx());
        kernel_rev_.assign(kernel_.rbegin(), kernel_.rend());
        assert_even_kernel();
    }

    std::string_view name() const override { return "nonlocal_ad"; }
    double sigma(int pop) const override {
        check_pop(pop);
        return p_.sigma;
    }

    void summarize(std::span<const double> m1, std::span<const double> m2,
                   MSummary& out) const override {
        out.m1 = m1;
        out.m2 = m2;
        convolve(m1, kernel_, out.conv[0]);
        convolve(m2, kernel_, out.conv[1]);
        convolve(m1, kernel_rev_, out.conv_rev[0]);
        convolve(m2, kernel_rev_, out.conv_rev[1]);
    }

    MPoint point(const MSummary& m, int node) const override {
        return {m.conv[0][static_cast<size_t>(node)], m.conv[1][static_cast<size_t>(node)]};
    }

    MPoint point_at(const MSummary& m, double x, const Grid1D& g) const override {
        return {interp_clamped(m.conv[0], x, g), interp_clamped(m.conv[1], x, g)};
    }

    double drift(int pop, double, const MPoint&, double v) const override {
        check_pop(pop);
        return v;
    }

    double running_cost(int pop, double, const MPoint& m, double v) const override {
        return 0.5 * v * v + aversion(pop, m);
    }

    double hamiltonian(int pop, double, const MPoint& m, double q) const override {
        return -0.5 * q * q + aversion(pop, m);
    }

    double optimal_control(int pop, double, const MPoint&, double q) const override {
        check_pop(pop);
        return -q;
    }

    double terminal_cost(int pop, int node, const MSummary&) const override {
        check_pop(pop);
        return p_.psi[static_cast<size_t>(pop)][static_cast<size_t>(node)];
    }

    double coupling_dm(int i, int j, int node, const MSummary& m, double) const override {
        check_pop(i);
        check_pop(j);
        return p_.Lambda[static_cast<size_t>(j)][static_cast<size_t>(i)] *
               m.conv_rev[static_cast<size_t>(j)][static_cast<size_t>(node)];
    }

    double terminal_coupling_dm(int, int, int, const MSummary&) const override { return 0.0; }

    // Exposed for the kernel symmetry check.
    const std::vector<double>& kernel() const { return kernel_; }
    void convolve_fwd(std::span<const double> m, std::vector<double>& out) const {
        convolve(m, kernel_, out);
    }
    void convolve_rev(std::span<const double> m, std::vector<double>& out) const {
        convolve(m, kernel_rev_, out);
    }

private:
    double aversion(int pop, const MPoint& m) const {
        check_pop(pop);
        const auto& L = p_.Lambda[static_cast<size_t>(pop)];
        return L[0] * m.v1 + L[1] * m.v2;
    }

    // (kern * m)(x_j) = sum_k kern[K + (j - l)] m_l w_l with trapezoid weights,
    // matching the quadrature used everywhere else.
    void convolve(std::span<const double> m, const std::vector<double>& kern,
                  std::vector<double>& out) const {
        const int nx = grid_.nx;
        const int K = (static_cast<int>(kern.size()) - 1) / 2;
        out.assign(static_cast<size_t>(nx), 0.0);
        for (int j = 0; j < nx; ++j) {
            const int lo = std::max(0, j - K);
            const int hi = std::min(nx - 1, j + K);
            double s = 0.0;
            for (int l = lo; l <= hi; ++l)
                s += kern[static_cast<size_t>(K + j - l)] * m[static_cast<size_t>(l)] *
                     grid_.weight(l);
            out[static_cast<size_t>(j)] = s;
        }
    }

    void assert_even_kernel() const {
        // With an even mollifier, phi * m and phibar * m must agree to
        // round-off on any probe density.
        GridFn probe(static_cast<size_t>(grid_.nx));
        for (int j = 0; j < grid_.nx; ++j) {
            const double x = grid_.x(j);
            probe[static_cast<size_t>(j)] = std::exp(-x * x) * (1.0 + 0.3 * std::sin(3.0 * x));
        }
        std::vector<double> a, b;
        convolve(probe, kernel_, a);
        convolve(probe, kernel_rev_, b);
        for (size_t j = 0; j < a.size(); ++j)
            if (std::abs(a[j] - b[j]) > 1e-12)
                throw NumericalError("nonlocal_ad: kernel convolution symmetry violated");
    }

    CrowdParams p_;
    Grid1D grid_;
    std::vector<double> kernel_, kernel_rev_;
};

// Unit-mass bump on [-1,1]: gamma(x) = C exp(-1/(1-x^2)), C fixed by quadrature.
double bump_mass_constant() {
    static const double c = [] {
        const int n = 20000;
        double s = 0.0;
        const double h = 2.0 / n;  // Simpson on [-1, 1]
        for (int i = 0; i <= n; ++i) {
            const double x = -1.0 + i * h;
            const double x2 = x * x;
            const double f = (x2 < 1.0) ? std::exp(-1.0 / (1.0 - x2)) : 0.0;
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            s += w * f;
        }
        return 1.0 / (s * h / 3.0);
    }();
    return c;
}

double bump(double x) {
    const double x2 = x * x;
    if (x2 >= 1.0) return 0.0;
    return bump_mass_constant() * std::exp(-1.0 / (1.0 - x2));
}

// CDF of the scaled bump gamma_delta on a fine table, for the kernel integral
// phi(x) = (Gamma_delta(x + r) - Gamma_delta(x - r)) / (2 r).
double bump_cdf(double y) {
    if (y <= -1.0) return 0.0;
    if (y >= 1.0) return 1.0;
    const int n = 4000;
    const double h = (y + 1.0) / n;
    double s = bump(-1.0) + bump(y);
    for (int i = 1; i < n; ++i) {
        const double x = -1.0 + i * h;
        s += 2.0 * bump(x);
    }
    return s * h / 2.0;
}

} // namespace

std::vector<double> tabulate_mollified_kernel(double r, double delta, double dx) {
    if (!(r > 0.0) || !(delta > 0.0) || !(dx > 0.0))
        throw ParameterError("mollified kernel: r, delta, dx must be positive");
    const double support = r + delta;
    const int K = static_cast<int>(std::ceil(support / dx));
    std::vector<double> kern(static_cast<size_t>(2 * K + 1), 0.0);
    for (int k = 0; k <= K; ++k) {
        const double x = std::abs(k * dx);  // built from |offset|: even bitwise
        const double val =
            (bump_cdf((x + r) / delta) - bump_cdf((x - r) / delta)) / (2.0 * r);
        kern[static_cast<size_t>(K + k)] = val;
        kern[static_cast<size_t>(K - k)] = val;
    }
    return kern;
}

std::unique_ptr<ModelFamily> make_local_lw(const CrowdParams& p, const Grid1D& grid) {
    return std::make_unique<LocalLWFamily>(p, grid);
}

std::unique_ptr<ModelFamily> make_nonlocal_ad(const CrowdParams& p, const Grid1D& grid) {
    return std::make_unique<NonlocalADFamily>(p, grid);
}

} // namespace mf2pop
