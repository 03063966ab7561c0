#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace dcmg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

/// Monic polynomial coefficients (highest power first) with the given roots.
/// Complex roots must come in conjugate pairs; the imaginary residue is dropped.
template <typename Scalar>
VectorX<Scalar> poly_from_roots(const VectorX<std::complex<Scalar>>& roots)
{
    VectorX<std::complex<Scalar>> c = VectorX<std::complex<Scalar>>::Zero(roots.size() + 1);
    c(0) = 1;
    for (Eigen::Index k = 0; k < roots.size(); ++k) {
        for (Eigen::Index j = k + 1; j >= 1; --j)
            c(j) -= roots(k) * c(j - 1);
    }
    return c.real();
}

template <typename Scalar>
VectorX<Scalar> poly_from_roots(const VectorX<Scalar>& roots)
{
    return poly_from_roots<Scalar>(VectorX<std::complex<Scalar>>(roots.template cast<std::complex<Scalar>>()));
}

/// p(A) for a polynomial given highest power first (Horner).
template <typename Derived>
auto polyvalm(const VectorX<typename Derived::Scalar>& coeffs, const Eigen::MatrixBase<Derived>& A)
{
    using S = typename Derived::Scalar;
    MatrixX<S> P = MatrixX<S>::Zero(A.rows(), A.cols());
    const MatrixX<S> I = MatrixX<S>::Identity(A.rows(), A.cols());
    for (Eigen::Index k = 0; k < coeffs.size(); ++k)
        P = P * A + coeffs(k) * I;
    return P;
}

/// Single-input pole placement (Ackermann). Returns k such that eig(A + b k^T) = poles.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> place_siso(const Eigen::MatrixBase<DerivedA>& A,
                                              const Eigen::MatrixBase<DerivedB>& b,
                                              const VectorX<std::complex<typename DerivedA::Scalar>>& poles)
{
    using S = typename DerivedA::Scalar;
    const Eigen::Index n = A.rows();
    if (poles.size() != n)
        throw std::invalid_argument("place_siso: need one pole per state");
    MatrixX<S> ctrb(n, n);
    VectorX<S> col = b;
    for (Eigen::Index k = 0; k < n; ++k) {
        ctrb.col(k) = col;
        col = A * col;
    }
    Eigen::FullPivLU<MatrixX<S>> lu(ctrb);
    if (lu.rank() < n)
        throw std::invalid_argument("place_siso: pair (A, b) is not controllable");
    const MatrixX<S> pA = polyvalm(poly_from_roots<S>(poles), A);
    VectorX<S> en = VectorX<S>::Zero(n);
    en(n - 1) = 1;
    // Ackermann gives K with eig(A - b K); our convention is u = +k^T x.
    const VectorX<S> K = pA.transpose() * (lu.inverse().transpose() * en);
    return -K;
}

template <typename Derived>
typename Derived::Scalar spectral_abscissa(const Eigen::MatrixBase<Derived>& A)
{
    using S = typename Derived::Scalar;
    Eigen::EigenSolver<MatrixX<S>> es(MatrixX<S>(A), false);
    return es.eigenvalues().real().maxCoeff();
}

template <typename Derived>
bool is_hurwitz(const Eigen::MatrixBase<Derived>& A)
{
    return spectral_abscissa(A) < 0;
}

/// Roots of a real polynomial (highest power first) via companion-matrix eigenvalues.
template <typename Scalar>
VectorX<std::complex<Scalar>> poly_roots(const VectorX<Scalar>& coeffs)
{
    Eigen::Index lead = 0;
    while (lead < coeffs.size() && coeffs(lead) == Scalar(0))
        ++lead;
    const Eigen::Index n = coeffs.size() - lead - 1;
    if (n <= 0)
        return {};
    MatrixX<Scalar> comp = MatrixX<Scalar>::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        comp(0, k) = -coeffs(lead + k + 1) / coeffs(lead);
    for (Eigen::Index k = 1; k < n; ++k)
        comp(k, k - 1) = 1;
    Eigen::EigenSolver<MatrixX<Scalar>> es(comp, false);
    return es.eigenvalues();
}

template <typename Derived>
auto cwise_abs(const Eigen::MatrixBase<Derived>& A)
{
    return A.cwiseAbs().eval();
}

} // namespace dcmg
