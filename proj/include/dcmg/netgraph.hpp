#pragma once

#include "dcmg/linalg.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace dcmg {

struct Edge {
    int i = 0;
    int j = 0;
    double conductance = 0; // a_ij, siemens
    double dac_weight = 0;  // a_ij^cd
};

enum class Weight { Conductance, Dac };

/// Undirected weighted graph shared by the electrical and communication layers.
/// Node ids are 0-based.
class Topology {
public:
    Topology() = default;
    explicit Topology(int nodes) : n_(nodes) {}

    void add_edge(int i, int j, double conductance, double dac_weight);

    int size() const { return n_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::vector<Edge>& edges() { return edges_; }

    /// Weight of edge (i, j) or 0 if absent.
    double weight(int i, int j, Weight w = Weight::Conductance) const;
    std::vector<int> neighbors(int i) const;
    std::vector<int> neighbors(int i, const std::vector<bool>& active) const;

    /// Connected components of the subgraph induced by `active` (all nodes if empty).
    std::vector<std::vector<int>> components(const std::vector<bool>& active = {}) const;
    bool connected(const std::vector<bool>& active = {}) const { return components(active).size() <= 1; }

    /// Throws std::invalid_argument on bad ids, duplicates, non-positive weights or a
    /// disconnected graph.
    void validate() const;

private:
    int n_ = 0;
    std::vector<Edge> edges_;
};

std::string describe_components(const std::vector<std::vector<int>>& comps);

/// Laplacian restricted to the active nodes (inactive rows/cols are zero).
template <typename Scalar = double>
MatrixX<Scalar> laplacian(const Topology& g, Weight w = Weight::Conductance, const std::vector<bool>& active = {})
{
    const int n = g.size();
    MatrixX<Scalar> L = MatrixX<Scalar>::Zero(n, n);
    for (const Edge& e : g.edges()) {
        if (!active.empty() && (!active[e.i] || !active[e.j]))
            continue;
        const Scalar a = Scalar(w == Weight::Conductance ? e.conductance : e.dac_weight);
        L(e.i, e.j) -= a;
        L(e.j, e.i) -= a;
        L(e.i, e.i) += a;
        L(e.j, e.j) += a;
    }
    return L;
}

/// Incidence matrix P (N x E) with the stored orientation i -> j.
template <typename Scalar = double>
MatrixX<Scalar> incidence(const Topology& g)
{
    MatrixX<Scalar> P = MatrixX<Scalar>::Zero(g.size(), Eigen::Index(g.edges().size()));
    for (std::size_t k = 0; k < g.edges().size(); ++k) {
        P(g.edges()[k].i, Eigen::Index(k)) = 1;
        P(g.edges()[k].j, Eigen::Index(k)) = -1;
    }
    return P;
}

template <typename Scalar = double>
MatrixX<Scalar> edge_weights(const Topology& g, Weight w = Weight::Conductance)
{
    VectorX<Scalar> d(Eigen::Index(g.edges().size()));
    for (std::size_t k = 0; k < g.edges().size(); ++k)
        d(Eigen::Index(k)) = Scalar(w == Weight::Conductance ? g.edges()[k].conductance : g.edges()[k].dac_weight);
    return d.asDiagonal();
}

/// Q = L_tilde D M of the reduced secondary dynamics, with its eigenpairs.
template <typename Scalar = double>
struct SpectralQ {
    MatrixX<Scalar> Q;
    MatrixX<Scalar> L_tilde;
    VectorX<Scalar> D; // diagonal of diag(1 / I_s)
    VectorX<Scalar> lambda; // ascending
    MatrixX<Scalar> V;      // right eigenvectors (columns)
    MatrixX<Scalar> W;      // left eigenvectors (rows), W V = I
};

template <typename Scalar = double>
SpectralQ<Scalar> build_q(const Topology& g, Scalar k_I, const VectorX<Scalar>& rated, Scalar tol = Scalar(1e-8))
{
    if (g.size() < 2)
        throw std::invalid_argument("build_q: need at least two nodes");
    if (rated.size() != g.size() || (rated.array() <= 0).any())
        throw std::invalid_argument("build_q: rated currents must be positive, one per node");
    const auto comps = g.components();
    if (comps.size() > 1)
        throw std::invalid_argument("build_q: topology is disconnected: " + describe_components(comps));

    SpectralQ<Scalar> s;
    const MatrixX<Scalar> L = laplacian<Scalar>(g);
    s.L_tilde = k_I * L;
    s.D = rated.cwiseInverse();
    s.Q = s.L_tilde * s.D.asDiagonal() * L;

    const Scalar scale = std::max(Scalar(1), s.Q.cwiseAbs().maxCoeff());
    if ((s.Q - s.Q.transpose()).cwiseAbs().maxCoeff() <= tol * scale) {
        // L = M makes Q = k_I L D L symmetric positive semidefinite.
        Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(s.Q);
        s.lambda = es.eigenvalues();
        s.V = es.eigenvectors();
        s.W = s.V.transpose();
    } else {
        Eigen::EigenSolver<MatrixX<Scalar>> es(s.Q);
        if ((es.eigenvalues().imag().cwiseAbs().array() > tol * scale).any())
            throw std::runtime_error("build_q: complex spectrum, Q is not diagonalizable over the reals");
        VectorX<Scalar> lam = es.eigenvalues().real();
        MatrixX<Scalar> V = es.eigenvectors().real();
        std::vector<Eigen::Index> order(lam.size());
        for (Eigen::Index k = 0; k < lam.size(); ++k)
            order[k] = k;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lam(a) < lam(b); });
        s.lambda.resize(lam.size());
        s.V.resize(V.rows(), V.cols());
        for (Eigen::Index k = 0; k < lam.size(); ++k) {
            s.lambda(k) = lam(order[k]);
            s.V.col(k) = V.col(order[k]);
        }
        Eigen::FullPivLU<MatrixX<Scalar>> lu(s.V);
        if (lu.rank() < s.V.cols())
            throw std::runtime_error("build_q: eigenvector matrix is singular, Q is defective");
        s.W = lu.inverse();
    }

    const MatrixX<Scalar> res = s.Q * s.V - s.V * s.lambda.asDiagonal();
    if (res.cwiseAbs().maxCoeff() > tol * scale)
        throw std::runtime_error("build_q: eigendecomposition residual above tolerance");
    if (s.lambda(0) < -tol * scale || (s.lambda.size() > 1 && s.lambda(1) <= tol * scale))
        throw std::runtime_error("build_q: zero eigenvalue is not simple");
    return s;
}

} // namespace dcmg
