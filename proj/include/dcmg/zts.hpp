#pragma once

#include "dcmg/linalg.hpp"
#include "dcmg/netgraph.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dcmg {

/// Small algebra of fake-input signals: sums of constant vectors and single-component sinusoids.
struct Waveform {
    struct Term {
        bool sinusoid = false;
        Eigen::VectorXd value; // constant term
        double amp = 0, freq = 0, phase = 0;
        int component = 0;     // 0-based
    };

    int dim = 0;
    std::vector<Term> terms;

    Waveform() = default;
    explicit Waveform(int d) : dim(d) {}

    static Waveform constant(const Eigen::VectorXd& v)
    {
        Waveform w(int(v.size()));
        w.terms.push_back({false, v, 0, 0, 0, 0});
        return w;
    }

    static Waveform sinusoid(int dim, double amp, double freq, int component, double phase = 0)
    {
        Waveform w(dim);
        w.terms.push_back({true, Eigen::VectorXd(), amp, freq, phase, component});
        return w;
    }

    bool empty() const { return terms.empty(); }

    bool is_constant() const
    {
        for (const auto& t : terms)
            if (t.sinusoid && t.amp != 0)
                return false;
        return true;
    }

    Eigen::VectorXd constant_part() const
    {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
        for (const auto& t : terms)
            if (!t.sinusoid)
                v += t.value;
        return v;
    }

    Eigen::VectorXd operator()(double t) const
    {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
        for (const auto& term : terms) {
            if (term.sinusoid)
                v(term.component) += term.amp * std::sin(term.freq * t + term.phase);
            else
                v += term.value;
        }
        return v;
    }

    Waveform& operator+=(const Waveform& o)
    {
        if (dim == 0)
            dim = o.dim;
        terms.insert(terms.end(), o.terms.begin(), o.terms.end());
        return *this;
    }

    Waveform scaled(double c) const
    {
        Waveform w = *this;
        for (auto& t : w.terms) {
            t.amp *= c;
            if (!t.sinusoid)
                t.value *= c;
        }
        return w;
    }
};

/// Which exchanged quantity the injection corrupts.
enum class AttackChannel { Output, DacX1, DacX2 };

/// Injection on the data DGU i receives from DGU j (0-based ids).
/// ZTS form: phi' = A phi + E d(t), phi(start) = 0, with the attacker's copy of (A, E).
/// phi0, converter forcing (through b_j) and bias break the ZTS structure and exist
/// to exercise the detector.
struct AttackSpec {
    int i = 0;
    int j = 0;
    double start = 0;
    Waveform fake_input;
    AttackChannel channel = AttackChannel::Output;
    Eigen::VectorXd phi0;   // phi at the start instant, empty means zero
    Waveform converter;     // scalar forcing through the converter-voltage channel
    Eigen::VectorXd bias;   // static additive offset, empty means zero
    std::optional<double> knowledge_time; // attacker snapshot instant, default: start
    std::string label;

    int state_dim() const { return channel == AttackChannel::Output ? 3 : 2; }

    bool is_zts() const
    {
        return (phi0.size() == 0 || phi0.isZero(0)) && converter.empty() && (bias.size() == 0 || bias.isZero(0));
    }
};

/// phi(t) = e^{A tau} A^{-1} E d - A^{-1} E d for constant d, tau = t - T_a.
template <typename DerivedA, typename DerivedE>
VectorX<typename DerivedA::Scalar> zts_closed_form(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedE>& E,
                                                    const VectorX<typename DerivedA::Scalar>& d, typename DerivedA::Scalar tau)
{
    using S = typename DerivedA::Scalar;
    const MatrixX<S> Ad = A;
    const VectorX<S> x = Ad.partialPivLu().solve(MatrixX<S>(E) * d);
    const MatrixX<S> eAt = (Ad * tau).exp();
    return eAt * x - x;
}

/// Attacked link as needed by the impact formulas: A_kj, E_j at the attacker's knowledge
/// instant, the communication weight a_ij and the sender's rated current.
struct LinkModel {
    int i = 0;
    int j = 0;
    double a = 0;
    double rated = 0;
    Eigen::Matrix3d A_k;
    Eigen::Matrix<double, 3, 2> E;
};

enum class ImpactClass { None, Constant, Ramp };

inline const char* to_string(ImpactClass c)
{
    switch (c) {
    case ImpactClass::Ramp: return "ramp";
    case ImpactClass::Constant: return "constant";
    default: return "none";
    }
}

struct ImpactPrediction {
    double slope = 0;           // d<v>/dt, V/s
    double offset = 0;          // V
    double post_mitigation = 0; // steady <v> with compensation, V
    double coop_residual = 0;   // sum of the ramp coefficients
    bool sharing_violated = false;
    ImpactClass classification = ImpactClass::None;
};

/// k^T A^{-1} E d with k = e_2 (current component).
inline double current_gain(const LinkModel& l, const Eigen::Vector2d& d)
{
    return l.A_k.partialPivLu().solve(l.E * d)(1);
}

/// k^T A^{-2} E d
inline double current_gain2(const LinkModel& l, const Eigen::Vector2d& d)
{
    const auto lu = l.A_k.partialPivLu();
    return lu.solve(lu.solve(l.E * d))(1);
}

/// c_ij = k_I a_ij / I_s_j, the gain from a corrupted current to psi_dot_i.
inline double injection_gain(const LinkModel& l, double k_I) { return k_I * l.a / l.rated; }

namespace detail {
constexpr double kImpactTol = 1e-12;
}

/// Superposed impact of constant fake inputs on the average PCC voltage.
inline ImpactPrediction predict_impact(const std::vector<LinkModel>& links, const std::vector<Eigen::Vector2d>& d,
                                       double k_I, int N, std::optional<double> k_ci = std::nullopt, double v_ref = 0)
{
    if (links.size() != d.size())
        throw std::invalid_argument("predict_impact: one fake input per link");
    ImpactPrediction p;
    Eigen::VectorXd injection = Eigen::VectorXd::Zero(N);
    double scale = 0;
    for (std::size_t k = 0; k < links.size(); ++k) {
        const double c = injection_gain(links[k], k_I);
        const double g1 = current_gain(links[k], d[k]);
        p.coop_residual += c * g1;
        p.slope -= c * g1 / N;
        p.offset -= c * current_gain2(links[k], d[k]) / N;
        injection(links[k].i) += c * g1;
        scale = std::max(scale, std::abs(c * g1));
    }
    const double tol = detail::kImpactTol * std::max(1.0, scale);
    // a nonzero zero-mean injection leaves a nonuniform steady psi: current sharing is lost
    p.sharing_violated = (injection.array() - injection.mean()).abs().maxCoeff() > tol;
    if (std::abs(p.slope) > tol)
        p.classification = ImpactClass::Ramp;
    else if (std::abs(p.offset) > tol)
        p.classification = ImpactClass::Constant;
    if (k_ci)
        p.post_mitigation = v_ref - p.coop_residual / (*k_ci * N);
    return p;
}

inline ImpactPrediction predict_single_impact(const LinkModel& l, const Eigen::Vector2d& d, double k_I, int N)
{
    return predict_impact({l}, {d}, k_I, N);
}

/// Mitigated steady <v>: V_ref - (1/k_ci) sum c_ij k^T A^{-1} E d / N.
inline double predict_mitigated_apvd(const std::vector<LinkModel>& links, const std::vector<Eigen::Vector2d>& d,
                                     double k_I, int N, double k_ci, double v_ref)
{
    if (!(k_ci > 0))
        throw std::invalid_argument("k_ci must be positive");
    return predict_impact(links, d, k_I, N, k_ci, v_ref).post_mitigation;
}

/// Fills in the free fake inputs so the ramp coefficients cancel. Each free link is searched
/// along its given direction; with several free links the minimum-norm solution is taken.
inline std::vector<Eigen::Vector2d> design_cooperative(const std::vector<LinkModel>& links,
                                                       const std::vector<std::optional<Eigen::Vector2d>>& fixed,
                                                       const std::vector<Eigen::Vector2d>& directions, double k_I)
{
    if (links.size() < 2)
        throw std::invalid_argument("cooperative attack needs at least two links");
    if (fixed.size() != links.size() || directions.size() != links.size())
        throw std::invalid_argument("design_cooperative: one entry per link");
    double target = 0;
    std::vector<std::size_t> free;
    std::vector<double> coef;
    for (std::size_t k = 0; k < links.size(); ++k) {
        const double c = injection_gain(links[k], k_I);
        if (fixed[k]) {
            target -= c * current_gain(links[k], *fixed[k]);
        } else {
            free.push_back(k);
            coef.push_back(c * current_gain(links[k], directions[k]));
        }
    }
    if (free.empty())
        throw std::invalid_argument("cooperative attack needs at least one free link");
    double nn = 0;
    for (double c : coef)
        nn += c * c;
    if (nn == 0)
        throw std::invalid_argument("free links cannot influence the average voltage ramp");
    std::vector<Eigen::Vector2d> out(links.size());
    for (std::size_t k = 0; k < links.size(); ++k)
        if (fixed[k])
            out[k] = *fixed[k];
    for (std::size_t f = 0; f < free.size(); ++f)
        out[free[f]] = directions[free[f]] * (coef[f] * target / nn);
    return out;
}

/// psi response to the attacks in the reduced model without compensation:
///   psi' = -Q psi + sum_l c_l phi_l,2(t) e_{i_l},
/// evaluated by modal sums over Q and each A_kj; near-resonant modal pairs fall back to
/// Gauss-Legendre quadrature.
inline Eigen::VectorXd attack_psi(const SpectralQ<double>& q, const std::vector<LinkModel>& links,
                                  const std::vector<Eigen::Vector2d>& d, double k_I, double T_a, double t)
{
    using Cx = std::complex<double>;
    const Eigen::Index N = q.Q.rows();
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(N);
    const double s = t - T_a;
    if (s <= 0)
        return psi;

    // integral over [0, s] of e^{-lam (s - u)} e^{beta u}
    auto kernel = [s](double lam, Cx beta) -> Cx {
        const Cx den = beta + lam;
        if (std::abs(den) >= 1e-6)
            return (std::exp(beta * s) - std::exp(Cx(-lam * s))) / den;
        static const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                    0.9061798459386640};
        static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                    0.2369268850561891};
        const int panels = 64;
        Cx acc = 0;
        const double h = s / panels;
        for (int p = 0; p < panels; ++p) {
            for (int k = 0; k < 5; ++k) {
                const double u = h * p + h / 2 * (x[k] + 1);
                acc += w[k] * h / 2 * std::exp(Cx(-lam * (s - u))) * std::exp(beta * u);
            }
        }
        return acc;
    };

    for (std::size_t l = 0; l < links.size(); ++l) {
        const double c = injection_gain(links[l], k_I);
        const Eigen::Vector3d x = links[l].A_k.partialPivLu().solve(links[l].E * d[l]);
        Eigen::EigenSolver<Eigen::Matrix3d> es(links[l].A_k);
        const Eigen::Matrix3cd V = es.eigenvectors();
        const Eigen::Vector3cd coeff = V.inverse() * x.cast<Cx>();
        for (Eigen::Index r = 0; r < N; ++r) {
            const double lam = q.lambda(r);
            // phi_2(u) = sum_m V(1,m) coeff(m) e^{beta_m u} - x(1)
            Cx acc = -x(1) * kernel(lam, 0.0);
            for (int m = 0; m < 3; ++m)
                acc += V(1, m) * coeff(m) * kernel(lam, es.eigenvalues()(m));
            psi += q.V.col(r) * (q.W(r, links[l].i) * c * acc.real());
        }
    }
    return psi;
}

} // namespace dcmg
