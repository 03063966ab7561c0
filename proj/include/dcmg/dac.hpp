#pragma once

#include "dcmg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

namespace dcmg {

/// Minimal realizations of h(s) = (2as + a^2)/(s + a)^2 and g(s) = (s + a)/s^2.
template <typename Scalar = double>
struct DacRealization {
    Scalar a = 0;
    Scalar gamma = 1;
    Matrix2<Scalar> A1, A2;
    Vector2<Scalar> B1, B2;
    Eigen::Matrix<Scalar, 1, 2> C1, C2;
};

template <typename Scalar = double>
DacRealization<Scalar> dac_realization(Scalar a, Scalar gamma = 1)
{
    if (!(a > 0) || !(gamma > 0))
        throw std::invalid_argument("DAC constants a and gamma must be positive");
    DacRealization<Scalar> d;
    d.a = a;
    d.gamma = gamma;
    d.A1 << -2 * a, -a * a, 1, 0;
    d.B1 << 1, 0;
    d.C1 << 2 * a, a * a;
    d.A2 << 0, 0, 1, 0;
    d.B2 << 1, 0;
    d.C2 << 1, a;
    return d;
}

template <typename Scalar>
std::complex<Scalar> transfer(const Matrix2<Scalar>& A, const Vector2<Scalar>& B,
                              const Eigen::Matrix<Scalar, 1, 2>& C, std::complex<Scalar> s)
{
    using Cx = std::complex<Scalar>;
    const Eigen::Matrix<Cx, 2, 2> M = s * Eigen::Matrix<Cx, 2, 2>::Identity() - A.template cast<Cx>();
    return (C.template cast<Cx>() * M.inverse() * B.template cast<Cx>())(0, 0);
}

template <typename Scalar>
std::complex<Scalar> h_of(Scalar a, std::complex<Scalar> s)
{
    return (Scalar(2) * a * s + a * a) / ((s + a) * (s + a));
}

template <typename Scalar>
std::complex<Scalar> g_of(Scalar a, std::complex<Scalar> s)
{
    return (s + a) / (s * s);
}

/// Derivatives of one estimator. `nbrs` holds (a_cd, X1_j, X2_j) for validated neighbours.
template <typename Scalar>
struct DacNeighbor {
    Scalar weight;
    Vector2<Scalar> X1;
    Vector2<Scalar> X2;
};

template <typename Scalar>
void dac_rates(const DacRealization<Scalar>& d, const Vector2<Scalar>& X1, const Vector2<Scalar>& X2, Scalar V,
               const std::vector<DacNeighbor<Scalar>>& nbrs, Vector2<Scalar>& dX1, Vector2<Scalar>& dX2)
{
    const Scalar eta = d.C2 * X2;
    const Scalar vhat = d.C1 * X1;
    Scalar s_eta = 0, s_v = 0;
    for (const auto& n : nbrs) {
        s_eta += n.weight * (eta - d.C2 * n.X2);
        s_v += n.weight * (vhat - d.C1 * n.X1);
    }
    dX1 = d.A1 * X1 + d.B1 * (V - d.gamma * s_eta);
    dX2 = d.A2 * X2 + d.B2 * (d.gamma * s_v);
}

/// Estimator state equal to its own input in steady state (V_hat = V, eta = 0).
template <typename Scalar>
void dac_warm_start(const DacRealization<Scalar>& d, Scalar V, Vector2<Scalar>& X1, Vector2<Scalar>& X2)
{
    X1 << 0, V / (d.a * d.a);
    X2.setZero();
}

/// Coordinate change applied synchronously when the design constant a switches to a_new:
/// keeps V_hat and eta continuous for steady signals.
template <typename Scalar>
std::pair<Scalar, Scalar> mtd_state_scale(Scalar a_old, Scalar a_new)
{
    const Scalar r = a_old / a_new;
    return {r * r, r};
}

template <typename Scalar>
void mtd_rescale(Scalar a_old, Scalar a_new, Vector2<Scalar>& X1, Vector2<Scalar>& X2)
{
    const auto [s1, s2] = mtd_state_scale(a_old, a_new);
    X1 *= s1;
    X2(1) *= s2;
}

struct MtdDraw {
    double a_factor = 1;
    std::vector<double> weight_factors;
};

/// Uniform draw inside the validated perturbation ranges.
template <typename Rng>
MtdDraw draw_mtd(Rng& rng, std::size_t edges, double a_max = 1.1, double w_max = 20)
{
    auto u01 = [&] { return double(rng() >> 11) * 0x1.0p-53; };
    MtdDraw d;
    d.a_factor = 1 + (a_max - 1) * u01();
    d.weight_factors.resize(edges);
    for (auto& w : d.weight_factors)
        w = 1 + (w_max - 1) * u01();
    return d;
}

/// Positive eigenvalues of a (restricted) Laplacian, ascending.
inline std::vector<double> laplacian_modes(const Eigen::MatrixXd& L)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    const double tol = 1e-9 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    std::vector<double> lam;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        if (es.eigenvalues()(k) > tol)
            lam.push_back(es.eigenvalues()(k));
    return lam;
}

struct RacPoint {
    double lambda = 0;
    double discriminant = 0;       // Cardano discriminant of the cubic factor
    double real_root = 0;          // a real root of the cubic inside (-a, 0)
    std::vector<std::complex<double>> analytic_roots; // cubic roots, closed form
    std::vector<std::complex<double>> numeric_roots;  // quartic roots, companion matrix
    bool analytic_stable = false;
    bool numeric_stable = false;
    double root_mismatch = 0;      // max distance between closed-form and numeric cubic roots
};

struct RacCertificate {
    bool structure_ok = false; // n_h - d_h divisible by s^2, h stable, d_g = s^2
    bool certified = false;
    bool methods_agree = false;
    std::vector<RacPoint> points;
};

namespace detail {

inline std::vector<std::complex<double>> cubic_closed_form(double b, double c, double d, double& disc)
{
    // s^3 + b s^2 + c s + d, s = y - b/3, y^3 + p y + q
    const double p = c - b * b / 3;
    const double q = 2 * b * b * b / 27 - b * c / 3 + d;
    disc = q * q / 4 + p * p * p / 27;
    const double shift = -b / 3;
    std::vector<std::complex<double>> r;
    if (disc > 0) {
        const double sq = std::sqrt(disc);
        const double u = std::cbrt(-q / 2 + sq);
        const double v = std::cbrt(-q / 2 - sq);
        const double y1 = u + v;
        const std::complex<double> w(-(u + v) / 2, std::sqrt(3.0) / 2 * (u - v));
        r = {y1 + shift, w + shift, std::conj(w) + shift};
    } else {
        const double m = 2 * std::sqrt(-p / 3);
        const double arg = p == 0 ? 0 : std::clamp(3 * q / (p * m), -1.0, 1.0);
        const double th = std::acos(arg) / 3;
        for (int k = 0; k < 3; ++k)
            r.emplace_back(m * std::cos(th - 2 * M_PI * k / 3) + shift, 0.0);
    }
    return r;
}

} // namespace detail

/// Robust-average-consensus certificate for the characteristic polynomial
/// (s + a)(s^2 (s + a) + (2as + a^2) gamma^2 lambda^2) of each Laplacian mode lambda > 0.
template <typename Scalar = double>
RacCertificate certify_rac(const DacRealization<Scalar>& d, const std::vector<double>& lambdas)
{
    RacCertificate cert;
    const double a = double(d.a), g = double(d.gamma);

    // h: denominator is the characteristic polynomial of A1, numerator C1 adj(sI - A1) B1.
    auto numden = [](const Matrix2<Scalar>& A, const Vector2<Scalar>& B, const Eigen::Matrix<Scalar, 1, 2>& C,
                     Eigen::Vector3d& num, Eigen::Vector3d& den) {
        den << 1, double(-A.trace()), double(A.determinant());
        Matrix2<Scalar> adj0; // constant part of adj(sI - A)
        adj0 << -A(1, 1), A(0, 1), A(1, 0), -A(0, 0);
        num << 0, double((C * B)(0, 0)), double((C * adj0 * B)(0, 0));
    };
    Eigen::Vector3d nh, dh, ng, dg;
    numden(d.A1, d.B1, d.C1, nh, dh);
    numden(d.A2, d.B2, d.C2, ng, dg);
    const Eigen::Vector3d diff = nh - dh;
    const double scale = std::max(1.0, a * a);
    const bool div_s2 = std::abs(diff(1)) <= 1e-12 * scale && std::abs(diff(2)) <= 1e-12 * scale;
    const bool h_stable = dh(1) > 0 && dh(2) > 0; // monic quadratic
    const bool dg_s2 = std::abs(dg(1)) == 0 && std::abs(dg(2)) == 0;
    cert.structure_ok = div_s2 && h_stable && dg_s2;

    cert.certified = cert.structure_ok;
    cert.methods_agree = true;
    for (double lam : lambdas) {
        RacPoint p;
        p.lambda = lam;
        const double k2 = g * g * lam * lam;
        const double b = a, c = 2 * a * k2, dd = a * a * k2;
        p.analytic_roots = detail::cubic_closed_form(b, c, dd, p.discriminant);
        if (p.discriminant > 0) {
            p.real_root = p.analytic_roots[0].real();
            // one real root in (-a, 0); the pair's real part is (-a - s1)/2 by Vieta
            p.analytic_stable = p.real_root > -a && p.real_root < 0 && (-a - p.real_root) / 2 < 0;
        } else {
            // three real roots with positive elementary symmetric functions: all negative
            p.real_root = p.analytic_roots[0].real();
            p.analytic_stable = b > 0 && c > 0 && dd > 0;
            for (const auto& r : p.analytic_roots)
                p.analytic_stable = p.analytic_stable && r.real() < 0;
        }
        p.analytic_stable = p.analytic_stable && lam > 0;

        // quartic (s + a)(s^3 + a s^2 + 2a k2 s + a^2 k2), expanded
        VectorX<double> quart(5);
        quart << 1, 2 * a, a * a + c, a * c + dd, a * dd;
        const auto nr = poly_roots<double>(quart);
        p.numeric_stable = true;
        for (Eigen::Index k = 0; k < nr.size(); ++k) {
            p.numeric_roots.push_back(nr(k));
            p.numeric_stable = p.numeric_stable && nr(k).real() < 0;
        }
        // match every closed-form cubic root to its nearest numeric root
        const double mag = std::max({1.0, a, std::sqrt(c)});
        for (const auto& r : p.analytic_roots) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : p.numeric_roots)
                best = std::min(best, std::abs(r - q));
            p.root_mismatch = std::max(p.root_mismatch, best / mag);
        }
        const bool agree = (p.analytic_stable == p.numeric_stable) && p.root_mismatch < 1e-6;
        cert.methods_agree = cert.methods_agree && agree;
        cert.certified = cert.certified && p.analytic_stable && p.numeric_stable;
        cert.points.push_back(std::move(p));
    }
    cert.certified = cert.certified && cert.methods_agree;
    return cert;
}

} // namespace dcmg
