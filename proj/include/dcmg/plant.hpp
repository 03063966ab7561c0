#pragma once

#include "dcmg/linalg.hpp"

#include <random>
#include <utility>
#include <vector>

namespace dcmg {

/// Electrical and primary-control constants of one DGU. States are x = [V, I_t, v].
struct DguParams {
    double R = 0;       // filter resistance, ohm
    double L = 0;       // filter inductance, H
    double C = 0;       // shunt capacitance, F
    double I_load = 0;  // load current, A
    double I_rated = 0; // rated current, A
    Eigen::Vector3d k = Eigen::Vector3d::Zero();
};

struct NoiseBounds {
    Eigen::Vector3d rho = Eigen::Vector3d::Zero();   // measurement
    Eigen::Vector3d omega = Eigen::Vector3d::Zero(); // process
};

template <typename Scalar = double>
struct PlantMatrices {
    Matrix3<Scalar> A_ii; // open loop, including the diagonal line-coupling term
    Matrix3<Scalar> A_k;  // A_ii + b k^T
    Vector3<Scalar> b;
    Vector3<Scalar> g;
    Eigen::Matrix<Scalar, 3, 2> E; // unknown-input matrix
};

/// Open-loop DGU matrix. `coupling` is sum_j 1/R_ij over the connected neighbours
/// (zero for an islanded unit).
template <typename Scalar = double>
Matrix3<Scalar> open_loop_matrix(const DguParams& p, Scalar coupling = 0)
{
    const Scalar R = Scalar(p.R), L = Scalar(p.L), C = Scalar(p.C);
    Matrix3<Scalar> A;
    A << -coupling / C, Scalar(1) / C, 0,
         Scalar(-1) / L, -R / L, 0,
         -1, 0, 0;
    return A;
}

template <typename Scalar = double>
PlantMatrices<Scalar> assemble_matrices(const DguParams& p, Scalar coupling = 0, bool require_hurwitz = true)
{
    if (!(p.R > 0 && p.L > 0 && p.C > 0 && p.I_rated > 0))
        throw std::invalid_argument("DGU parameters R, L, C and rated current must be positive");
    PlantMatrices<Scalar> m;
    m.A_ii = open_loop_matrix<Scalar>(p, coupling);
    m.b << 0, Scalar(1) / Scalar(p.L), 0;
    m.g << 0, 0, 1;
    m.E << Scalar(1) / Scalar(p.C), 0,
           0, 0,
           0, 1;
    m.A_k = m.A_ii + m.b * p.k.template cast<Scalar>().transpose();
    if (require_hurwitz && !is_hurwitz(m.A_k))
        throw std::invalid_argument("primary gain does not make A_k Hurwitz");
    return m;
}

/// Primary gain placing the islanded closed-loop poles (u = k^T x).
template <typename Scalar = double>
Vector3<Scalar> synthesize_primary_gain(const DguParams& p, const Vector3<Scalar>& poles)
{
    const Matrix3<Scalar> A = open_loop_matrix<Scalar>(p, 0);
    Vector3<Scalar> b;
    b << 0, Scalar(1) / Scalar(p.L), 0;
    return place_siso(A, b, VectorX<std::complex<Scalar>>(poles.template cast<std::complex<Scalar>>()));
}

/// u_i = k^T y_i
template <typename Derived>
typename Derived::Scalar primary_input(const Eigen::Vector3d& k, const Eigen::MatrixBase<Derived>& y)
{
    return k.template cast<typename Derived::Scalar>().dot(y);
}

/// One term of the secondary consensus sum as seen by DGU i.
struct ReceivedCurrent {
    double a = 0;       // communication weight a_ij
    double current = 0; // second output component received from j, possibly corrupted
    double rated = 0;   // I_s of the sender
};

/// psi_dot_i = -k_I sum_j a_ij (I_i / I_s_i - I_j^c / I_s_j)
inline double secondary_derivative(double k_I, double own_current, double own_rated,
                                   const std::vector<ReceivedCurrent>& received)
{
    double s = 0;
    for (const auto& r : received)
        s += r.a * (own_current / own_rated - r.current / r.rated);
    return -k_I * s;
}

/// Uniform sample on the box [-bound, bound]; components with zero bound are exactly zero.
template <typename Rng>
Eigen::Vector3d sample_noise(const Eigen::Vector3d& bound, Rng& rng)
{
    Eigen::Vector3d out;
    for (int c = 0; c < 3; ++c) {
        if (bound(c) <= 0) {
            out(c) = 0;
            continue;
        }
        // 53 random bits mapped to [-1, 1]; avoids the implementation-defined
        // std::uniform_real_distribution so traces are portable.
        const double u = double(rng() >> 11) * 0x1.0p-53;
        out(c) = bound(c) * (2 * u - 1);
    }
    return out;
}

} // namespace dcmg
