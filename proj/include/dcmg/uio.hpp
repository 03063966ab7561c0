#pragma once

#include "dcmg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

namespace dcmg {

/// Unknown-input observer z' = F z + Khat y, xhat = z + H y, r = y - xhat.
template <typename Scalar = double>
struct UioParams {
    MatrixX<Scalar> F, Khat, H, T, K1, K2;
    Scalar kappa = 1; // ||e^{Ft}|| <= kappa e^{-mu t}
    Scalar mu = 0;
};

/// Orthogonal projector onto range(E).
template <typename Scalar>
MatrixX<Scalar> range_projector(const MatrixX<Scalar>& E)
{
    return E * (E.transpose() * E).inverse() * E.transpose();
}

/// H with the DGU structure: first and third columns fixed by H E = E, second column free.
template <typename Scalar = double>
MatrixX<Scalar> dgu_h(Scalar h12, Scalar h22, Scalar h32)
{
    MatrixX<Scalar> H(3, 3);
    H << 1, h12, 0,
         0, h22, 0,
         0, h32, 1;
    return H;
}

namespace detail {

template <typename Scalar>
struct Modal {
    VectorX<std::complex<Scalar>> lambda;
    MatrixX<std::complex<Scalar>> V, Vinv;
    bool diagonal = false;
};

template <typename Scalar>
Modal<Scalar> modal(const MatrixX<Scalar>& F)
{
    Modal<Scalar> m;
    const MatrixX<Scalar> off = F - MatrixX<Scalar>(F.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() == Scalar(0)) {
        m.diagonal = true;
        m.lambda = F.diagonal().template cast<std::complex<Scalar>>();
        m.V = MatrixX<std::complex<Scalar>>::Identity(F.rows(), F.cols());
        m.Vinv = m.V;
        return m;
    }
    Eigen::EigenSolver<MatrixX<Scalar>> es(F);
    m.lambda = es.eigenvalues();
    m.V = es.eigenvectors();
    m.Vinv = m.V.inverse();
    return m;
}

/// e^{M t} for M = V diag(lambda + shift) V^{-1}.
template <typename Scalar>
MatrixX<Scalar> modal_exp(const Modal<Scalar>& m, Scalar t, Scalar shift = 0)
{
    if (m.diagonal) {
        VectorX<Scalar> e(m.lambda.size());
        for (Eigen::Index k = 0; k < e.size(); ++k)
            e(k) = std::exp((m.lambda(k).real() + shift) * t);
        return e.asDiagonal();
    }
    VectorX<std::complex<Scalar>> e(m.lambda.size());
    for (Eigen::Index k = 0; k < e.size(); ++k)
        e(k) = std::exp((m.lambda(k) + shift) * t);
    return (m.V * e.asDiagonal() * m.Vinv).real();
}

} // namespace detail

/// Decay constants for ||e^{Ft}||_2 <= kappa e^{-mu t}, certified by sampling t in [0, 5/mu].
template <typename Scalar>
std::pair<Scalar, Scalar> decay_constants(const MatrixX<Scalar>& F)
{
    const auto m = detail::modal(F);
    Scalar alpha = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < m.lambda.size(); ++k)
        alpha = std::max(alpha, m.lambda(k).real());
    if (!(alpha < 0))
        throw std::invalid_argument("observer matrix F is not Hurwitz");
    const Scalar mu = -alpha;
    Eigen::JacobiSVD<MatrixX<std::complex<Scalar>>> svd(m.V);
    Scalar kappa = svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    for (int pass = 0; pass < 20; ++pass) {
        bool ok = true;
        for (int s = 0; s <= 200 && ok; ++s) {
            const Scalar t = Scalar(5) / mu * Scalar(s) / Scalar(200);
            Eigen::JacobiSVD<MatrixX<Scalar>> es(detail::modal_exp(m, t));
            ok = es.singularValues()(0) <= kappa * std::exp(-mu * t) * (1 + Scalar(1e-12));
        }
        if (ok)
            break;
        kappa *= Scalar(1.1);
    }
    return {kappa, mu};
}

/// Solves the UIO design equations for A (n x n), unknown-input matrix E (n x m) and
/// the requested spectrum of F. H defaults to the orthogonal projector onto range(E).
template <typename Scalar = double>
UioParams<Scalar> synthesize_uio(const MatrixX<Scalar>& A, const MatrixX<Scalar>& E, const VectorX<Scalar>& poles,
                                 const std::optional<MatrixX<Scalar>>& H_in = std::nullopt)
{
    const Eigen::Index n = A.rows();
    if (A.cols() != n || E.rows() != n || poles.size() != n)
        throw std::invalid_argument("synthesize_uio: dimension mismatch");
    Eigen::FullPivLU<MatrixX<Scalar>> lu(E);
    if (lu.rank() < E.cols())
        throw std::invalid_argument("synthesize_uio: unknown-input matrix is rank deficient");
    if ((poles.array() >= 0).any())
        throw std::invalid_argument("synthesize_uio: observer poles must be negative");

    UioParams<Scalar> u;
    u.H = H_in ? *H_in : range_projector<Scalar>(E);
    const Scalar tol = Scalar(1e-12) * std::max(Scalar(1), E.cwiseAbs().maxCoeff());
    if ((u.H * E - E).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("synthesize_uio: H E != E, unknown input is not decoupled");
    const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
    u.T = I - u.H;
    u.F = poles.asDiagonal();
    u.K1 = u.T * A - u.F;
    u.K2 = u.F * u.H;
    u.Khat = u.K1 + u.K2;
    std::tie(u.kappa, u.mu) = decay_constants<Scalar>(u.F);
    return u;
}

template <typename Scalar = double>
VectorX<Scalar> repeated_poles(Eigen::Index n, Scalar p)
{
    return VectorX<Scalar>::Constant(n, p);
}

struct DesignResiduals {
    double TE = 0, T_def = 0, Khat_def = 0, F_def = 0, K2_def = 0, identity = 0;
    double max() const { return std::max({TE, T_def, Khat_def, F_def, K2_def, identity}); }
};

/// Max-abs residuals of the design equations and of F T + Khat = T A.
template <typename Scalar>
DesignResiduals design_residuals(const UioParams<Scalar>& u, const MatrixX<Scalar>& A, const MatrixX<Scalar>& E)
{
    const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(A.rows(), A.cols());
    auto mx = [](const MatrixX<Scalar>& M) { return double(M.cwiseAbs().maxCoeff()); };
    DesignResiduals d;
    d.TE = mx(u.T * E);
    d.T_def = mx(u.T - I + u.H);
    d.Khat_def = mx(u.Khat - u.K1 - u.K2);
    d.F_def = mx(u.F - u.T * A + u.K1);
    d.K2_def = mx(u.K2 - u.F * u.H);
    d.identity = mx(u.F * u.T + u.Khat - u.T * A);
    return d;
}

/// Time-varying residual threshold
///   rbar(t) = kappa e^{-mu t} sigma2 + m(t) + |T| rho_bar,
///   m' = -mu m + kappa |e^{-(F + mu I) t}| n,  m(0) = 0,
/// where n = |T| omega_bar + |T b k^T - Khat| rho_bar. m(t) equals
/// kappa e^{-mu t} times the integral of |e^{-F tau}| n.
template <typename Scalar = double>
struct ThresholdModel {
    VectorX<Scalar> sigma2;
    VectorX<Scalar> n;
    VectorX<Scalar> floor;
    Scalar kappa = 1;
    Scalar mu = 0;
    detail::Modal<Scalar> modes; // of -F

    VectorX<Scalar> rate(Scalar t, const VectorX<Scalar>& m) const
    {
        if (modes.diagonal && (modes.lambda.real().array() - mu).abs().maxCoeff() == 0)
            return -mu * m + kappa * n;
        return -mu * m + kappa * detail::modal_exp(modes, t, -mu).cwiseAbs() * n;
    }

    VectorX<Scalar> bound(Scalar t, const VectorX<Scalar>& m) const
    {
        return kappa * std::exp(-mu * t) * sigma2 + m + floor;
    }

    /// Limit of rbar for t -> infinity when F is a multiple of the identity.
    VectorX<Scalar> asymptote() const { return kappa * n / mu + floor; }
};

template <typename Scalar = double>
ThresholdModel<Scalar> make_threshold(const UioParams<Scalar>& u, const MatrixX<Scalar>& noise_gain,
                                      const VectorX<Scalar>& rho_bar, const VectorX<Scalar>& omega_bar)
{
    const Eigen::Index n = u.F.rows();
    const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
    ThresholdModel<Scalar> th;
    th.kappa = u.kappa;
    th.mu = u.mu;
    th.sigma2 = (I + u.H.cwiseAbs()) * rho_bar;
    th.n = u.T.cwiseAbs() * omega_bar + (noise_gain - u.Khat).cwiseAbs() * rho_bar;
    th.floor = u.T.cwiseAbs() * rho_bar;
    th.modes = detail::modal<Scalar>(MatrixX<Scalar>(-u.F));
    return th;
}

/// DGU observer threshold: the measurement noise enters through T b k^T (primary input).
template <typename Scalar = double>
ThresholdModel<Scalar> make_dgu_threshold(const UioParams<Scalar>& u, const Vector3<Scalar>& b,
                                          const Vector3<Scalar>& k, const Vector3<Scalar>& rho_bar,
                                          const Vector3<Scalar>& omega_bar)
{
    const MatrixX<Scalar> gain = u.T * b * k.transpose();
    return make_threshold<Scalar>(u, gain, rho_bar, omega_bar);
}

/// Observer threshold for exchanged (noise-free) DAC states: kappa e^{-mu t} eps0 plus an
/// absolute floor for round-off.
template <typename Scalar = double>
ThresholdModel<Scalar> make_dac_threshold(const UioParams<Scalar>& u, Scalar eps0, Scalar floor)
{
    const Eigen::Index n = u.F.rows();
    ThresholdModel<Scalar> th;
    th.kappa = u.kappa;
    th.mu = u.mu;
    th.sigma2 = VectorX<Scalar>::Constant(n, eps0);
    th.n = VectorX<Scalar>::Zero(n);
    th.floor = VectorX<Scalar>::Constant(n, floor);
    th.modes = detail::modal<Scalar>(MatrixX<Scalar>(-u.F));
    return th;
}

/// Standalone observer + threshold state for one monitored link.
template <typename Scalar = double>
struct ResidualState {
    Scalar t = 0; // time since observer start
    VectorX<Scalar> z, xhat, r, rbar, m;
};

template <typename Scalar>
ResidualState<Scalar> start_residual(const UioParams<Scalar>& u, const ThresholdModel<Scalar>& th,
                                     const VectorX<Scalar>& y0)
{
    ResidualState<Scalar> s;
    s.z = u.T * y0;
    s.xhat = s.z + u.H * y0;
    s.r = y0 - s.xhat;
    s.m = VectorX<Scalar>::Zero(y0.size());
    s.rbar = th.bound(0, s.m);
    return s;
}

/// One RK4 step of the observer with the received output held over the step.
template <typename Scalar>
void step_residual(ResidualState<Scalar>& s, const VectorX<Scalar>& y, const UioParams<Scalar>& u, Scalar dt)
{
    const VectorX<Scalar> drive = u.Khat * y;
    auto f = [&](const VectorX<Scalar>& z) { return VectorX<Scalar>(u.F * z + drive); };
    const VectorX<Scalar> k1 = f(s.z);
    const VectorX<Scalar> k2 = f(s.z + dt / 2 * k1);
    const VectorX<Scalar> k3 = f(s.z + dt / 2 * k2);
    const VectorX<Scalar> k4 = f(s.z + dt * k3);
    s.z += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    s.xhat = s.z + u.H * y;
    s.r = y - s.xhat;
}

template <typename Scalar>
void step_threshold(ResidualState<Scalar>& s, const ThresholdModel<Scalar>& th, Scalar dt)
{
    const Scalar t = s.t;
    const VectorX<Scalar> k1 = th.rate(t, s.m);
    const VectorX<Scalar> k2 = th.rate(t + dt / 2, s.m + dt / 2 * k1);
    const VectorX<Scalar> k3 = th.rate(t + dt / 2, s.m + dt / 2 * k2);
    const VectorX<Scalar> k4 = th.rate(t + dt, s.m + dt * k3);
    s.m += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!s.m.allFinite())
        s.m.setConstant(std::numeric_limits<Scalar>::infinity());
    s.t = t + dt;
    s.rbar = th.bound(s.t, s.m);
}

template <typename Scalar>
bool crossed(const VectorX<Scalar>& r, const VectorX<Scalar>& rbar)
{
    return (r.cwiseAbs().array() > rbar.array()).any();
}

} // namespace dcmg
