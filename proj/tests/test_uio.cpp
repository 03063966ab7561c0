#include <doctest.h>

#include "dcmg/dac.hpp"
#include "dcmg/plant.hpp"
#include "dcmg/scenario.hpp"
#include "dcmg/uio.hpp"

#include <random>

using namespace dcmg;

namespace {

// scaling and squaring with a 20-term Taylor series, independent of the modal form
Eigen::MatrixXd expm(const Eigen::MatrixXd& A)
{
    const double nrm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (std::ldexp(nrm, -s) > 0.25)
        ++s;
    const Eigen::MatrixXd B = A / std::ldexp(1.0, s);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(A.rows(), A.cols()), sum = term;
    for (int k = 1; k <= 20; ++k) {
        term = term * B / double(k);
        sum += term;
    }
    for (int k = 0; k < s; ++k)
        sum = sum * sum;
    return sum;
}

double norm2(const Eigen::MatrixXd& M)
{
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0);
}

struct Dgu {
    PlantMatrices<double> m;
    DguParams p;
};

Dgu dgu(int i)
{
    const auto cfg = builtin_scenario("paper8");
    return {assemble_matrices<double>(cfg.dgus[i]), cfg.dgus[i]};
}

Eigen::MatrixXd sim_h()
{
    const auto cfg = builtin_scenario("paper8");
    return dgu_h<double>(cfg.uio_h(0), cfg.uio_h(1), cfg.uio_h(2));
}

} // namespace

TEST_CASE("design equations hold on every DGU")
{
    for (int i = 0; i < 8; ++i) {
        const Dgu d = dgu(i);
        const Eigen::MatrixXd A = d.m.A_k, E = d.m.E;
        for (const auto& H : {std::optional<Eigen::MatrixXd>{}, std::optional<Eigen::MatrixXd>{sim_h()}}) {
            const auto u = synthesize_uio<double>(A, E, repeated_poles<double>(3, -50), H);
            const auto r = design_residuals(u, A, E);
            CHECK(r.max() < 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()));
            CHECK((u.F * u.T + u.Khat - u.T * A).cwiseAbs().maxCoeff() < 1e-12 * A.cwiseAbs().maxCoeff());
            CHECK((u.T * E).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("T annihilates range(E) and keeps the current channel")
{
    const Dgu d = dgu(2);
    const auto u = synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), Eigen::MatrixXd(d.m.E),
                                          repeated_poles<double>(3, -50), sim_h());
    CHECK(u.T(0, 0) == 0.0);
    CHECK(u.T(1, 1) == 1.0);
    CHECK(u.T(2, 2) == 0.0);
    CHECK((u.T * u.T - u.T).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("F carries the requested spectrum")
{
    const Dgu d = dgu(0);
    const auto u = synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), Eigen::MatrixXd(d.m.E),
                                          Eigen::Vector3d(-50, -60, -70));
    Eigen::EigenSolver<Eigen::MatrixXd> es(u.F);
    std::vector<double> re;
    for (int k = 0; k < 3; ++k)
        re.push_back(es.eigenvalues()(k).real());
    std::sort(re.begin(), re.end());
    CHECK(re[0] == doctest::Approx(-70));
    CHECK(re[1] == doctest::Approx(-60));
    CHECK(re[2] == doctest::Approx(-50));
    CHECK(u.mu == doctest::Approx(50));
}

TEST_CASE("DAC observer, two states")
{
    for (double a : {1.0, 100.0, 1000.0}) {
        const auto d = dac_realization(a);
        const Eigen::MatrixXd A = d.A1, E = d.B1;
        const auto u = synthesize_uio<double>(A, E, repeated_poles<double>(2, -50));
        CHECK(design_residuals(u, A, E).max() < 1e-12 * std::max(1.0, a * a));
        CHECK((u.T * E).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("rank-deficient or undecoupled designs are rejected")
{
    const Dgu d = dgu(0);
    Eigen::MatrixXd E(3, 2);
    E << 1, 2, 0, 0, 1, 2;
    CHECK_THROWS_AS(synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), E, repeated_poles<double>(3, -50)),
                    std::invalid_argument);
    CHECK_THROWS_AS(synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), Eigen::MatrixXd(d.m.E),
                                           Eigen::Vector3d(-50, 0, -50)),
                    std::invalid_argument);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(3, 3);
    H(0, 0) = 0.5;
    CHECK_THROWS_AS(synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), Eigen::MatrixXd(d.m.E),
                                           repeated_poles<double>(3, -50), H),
                    std::invalid_argument);
}

TEST_CASE("decay constants bound the matrix exponential")
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::Matrix3d V;
        for (int k = 0; k < 9; ++k)
            V(k) = n(rng);
        const Eigen::Vector3d lam(-1 - std::abs(n(rng)), -3 - std::abs(n(rng)), -6 - std::abs(n(rng)));
        const Eigen::MatrixXd F = V * lam.asDiagonal() * V.inverse();
        const auto [kappa, mu] = decay_constants<double>(F);
        CHECK(mu == doctest::Approx(-lam.maxCoeff()).epsilon(1e-8));
        CHECK(kappa >= 1.0);
        for (int s = 0; s <= 100; ++s) {
            const double t = 8.0 / mu * s / 100;
            CHECK(norm2(expm(F * t)) <= kappa * std::exp(-mu * t) * (1 + 1e-9));
        }
    }
    CHECK_THROWS(decay_constants<double>(Eigen::MatrixXd(Eigen::Matrix2d::Identity())));
}

TEST_CASE("residual stays at zero under an arbitrary unknown input")
{
    const Dgu d = dgu(4);
    const Eigen::MatrixXd A = d.m.A_k, E = d.m.E;
    const auto u = synthesize_uio<double>(A, E, repeated_poles<double>(3, -50), sim_h());
    // joint plant and observer integrated on the test side
    auto rhs = [&](double t, const Eigen::VectorXd& s) {
        const Eigen::Vector3d x = s.head<3>();
        const Eigen::Vector3d z = s.tail<3>();
        const Eigen::Vector2d w(300 * std::sin(40 * t) + (t > 0.05 ? 800.0 : 0.0), 48 + 3 * std::cos(7 * t));
        Eigen::VectorXd ds(6);
        ds.head<3>() = A * x + E * w;
        ds.tail<3>() = u.F * z + u.Khat * x;
        return ds;
    };
    Eigen::VectorXd s(6);
    s.head<3>() = Eigen::Vector3d(47, 10, 20);
    s.tail<3>() = u.T * s.head<3>();
    const double dt = 1e-5;
    double worst = 0;
    for (int k = 0; k < 20000; ++k) {
        const double t = k * dt;
        const Eigen::VectorXd k1 = rhs(t, s), k2 = rhs(t + dt / 2, s + dt / 2 * k1),
                              k3 = rhs(t + dt / 2, s + dt / 2 * k2), k4 = rhs(t + dt, s + dt * k3);
        s += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        const Eigen::Vector3d r = u.T * s.head<3>() - s.tail<3>();
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("threshold decays to its asymptote")
{
    const Dgu d = dgu(1);
    const auto u = synthesize_uio<double>(Eigen::MatrixXd(d.m.A_k), Eigen::MatrixXd(d.m.E),
                                          repeated_poles<double>(3, -50), sim_h());
    const Eigen::Vector3d rho(0.01, 0.02, 0), omega(0.1, 0.1, 0);
    const auto th = make_dgu_threshold<double>(u, d.m.b, d.p.k, rho, omega);
    ResidualState<double> s = start_residual<double>(u, th, Eigen::Vector3d(48, 10, 0));
    CHECK((s.rbar - (th.kappa * th.sigma2 + th.floor)).cwiseAbs().maxCoeff() < 1e-15);
    const double dt = 1e-4;
    for (int k = 1; k <= 3000; ++k) {
        step_threshold(s, th, dt);
        // F = -50 I, so m(t) = kappa n (1 - e^{-mu t}) / mu
        const Eigen::VectorXd m = th.kappa * th.n * (1 - std::exp(-th.mu * s.t)) / th.mu;
        REQUIRE((s.m - m).cwiseAbs().maxCoeff() <= 1e-9 * (1 + m.cwiseAbs().maxCoeff()));
    }
    CHECK((s.rbar - th.asymptote()).cwiseAbs().maxCoeff() < 1e-3 * th.asymptote().maxCoeff());
    CHECK((th.asymptote().array() >= th.floor.array()).all());
}

TEST_CASE("sensor bias outside range(E) crosses the threshold quickly")
{
    const Dgu d = dgu(2);
    const Eigen::MatrixXd A = d.m.A_k;
    const auto u = synthesize_uio<double>(A, Eigen::MatrixXd(d.m.E), repeated_poles<double>(3, -50), sim_h());
    const Eigen::Vector3d rho(0.001, 0.003, 0), omega = Eigen::Vector3d::Zero();
    const auto th = make_dgu_threshold<double>(u, d.m.b, d.p.k, rho, omega);
    // equilibrium output, biased current from t = 0.5 s
    const double Vref = 48;
    const double v = (Vref + d.p.R * d.p.I_load - d.p.k(0) * Vref - d.p.k(1) * d.p.I_load) / d.p.k(2);
    const Eigen::Vector3d y0(Vref, d.p.I_load, v);
    ResidualState<double> s = start_residual<double>(u, th, y0);
    const double dt = 5e-5;
    std::optional<double> first;
    for (int k = 1; k <= 20000 && !first; ++k) {
        const double t = k * dt;
        Eigen::Vector3d y = y0;
        if (t >= 0.5)
            y(1) += 0.5;
        step_residual<double>(s, y, u, dt);
        step_threshold<double>(s, th, dt);
        if (t < 0.5) {
            REQUIRE(s.r.cwiseAbs().maxCoeff() < 1e-9);
            continue;
        }
        if (crossed<double>(s.r, s.rbar))
            first = t;
    }
    REQUIRE(first);
    CHECK(*first - 0.5 < 0.2);
}

TEST_CASE("a state jump in range(E) leaves the residual unchanged")
{
    const Dgu d = dgu(6);
    const Eigen::MatrixXd A = d.m.A_k, E = d.m.E;
    const auto u = synthesize_uio<double>(A, E, repeated_poles<double>(3, -50), sim_h());
    const Eigen::Vector2d w(-d.p.I_load, 48); // load current and reference
    auto rhs = [&](const Eigen::VectorXd& s) {
        Eigen::VectorXd ds(6);
        ds.head<3>() = A * s.head<3>() + E * w;
        ds.tail<3>() = u.F * s.tail<3>() + u.Khat * s.head<3>();
        return ds;
    };
    Eigen::VectorXd s(6);
    s.head<3>() = Eigen::Vector3d(48, d.p.I_load, 3);
    s.tail<3>() = u.T * s.head<3>();
    const double dt = 1e-5;
    double worst = 0;
    for (int k = 0; k < 10000; ++k) {
        if (k == 2000)
            s.head<3>() += E * Eigen::Vector2d(0.004, 0.7); // impulsive unknown input
        const Eigen::VectorXd k1 = rhs(s), k2 = rhs(s + dt / 2 * k1), k3 = rhs(s + dt / 2 * k2),
                              k4 = rhs(s + dt * k3);
        s += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        worst = std::max(worst, (u.T * s.head<3>() - s.tail<3>()).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-9);
}
