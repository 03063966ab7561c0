#include <doctest.h>

#include "dcmg/netgraph.hpp"
#include "dcmg/scenario.hpp"
#include "dcmg/zts.hpp"

#include <random>

using namespace dcmg;

namespace {

const ScenarioConfig& grid()
{
    static const ScenarioConfig cfg = builtin_scenario("paper8-attack");
    return cfg;
}

std::vector<bool> all_on() { return std::vector<bool>(8, true); }

LinkModel link(int i, int j) { return link_model(grid(), i, j, all_on()); }

template <typename F>
Eigen::VectorXd rk4(F f, Eigen::VectorXd x, double t0, double t1, int steps)
{
    const double h = (t1 - t0) / steps;
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + k * h;
        const Eigen::VectorXd k1 = f(t, x), k2 = f(t + h / 2, x + h / 2 * k1), k3 = f(t + h / 2, x + h / 2 * k2),
                              k4 = f(t + h, x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

// slope and offset of <v> from explicit inverses
std::pair<double, double> oracle(const std::vector<LinkModel>& ls, const std::vector<Eigen::Vector2d>& d, double k_I)
{
    double slope = 0, offset = 0;
    for (std::size_t k = 0; k < ls.size(); ++k) {
        const Eigen::Matrix3d Ai = ls[k].A_k.inverse();
        const double c = k_I * ls[k].a / ls[k].rated;
        slope -= c * (Ai * ls[k].E * d[k])(1);
        offset -= c * (Ai * Ai * ls[k].E * d[k])(1);
    }
    return {slope / 8, offset / 8};
}

} // namespace

TEST_CASE("closed-form deception trajectory matches integration")
{
    const LinkModel l = link(2, 7);
    for (const Eigen::Vector2d& d : {Eigen::Vector2d(2, 0), Eigen::Vector2d(-1, 0.3), Eigen::Vector2d(0, 0)}) {
        const Eigen::Matrix3d A = l.A_k;
        const Eigen::Matrix<double, 3, 2> E = l.E;
        auto f = [&](double, const Eigen::VectorXd& x) { return Eigen::VectorXd(A * x + E * d); };
        for (double tau : {0.001, 0.01, 0.05}) {
            const Eigen::VectorXd num = rk4(f, Eigen::VectorXd::Zero(3), 0, tau, int(tau / 2e-6));
            const Eigen::VectorXd cf = zts_closed_form(A, E, Eigen::VectorXd(d), tau);
            CHECK((num - cf).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, cf.cwiseAbs().maxCoeff()));
        }
        if (d.isZero())
            CHECK(zts_closed_form(A, E, Eigen::VectorXd(d), 3.0).isZero(0));
    }
}

TEST_CASE("impact formulas against explicit inverses")
{
    const double k_I = grid().k_I;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> node(0, 7);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<LinkModel> ls;
        std::vector<Eigen::Vector2d> d;
        while (ls.size() < 3) {
            const int i = node(rng), j = node(rng);
            if (i == j || grid().topology.weight(i, j) == 0)
                continue;
            ls.push_back(link(i, j));
            d.emplace_back(n(rng), n(rng));
        }
        const auto p = predict_impact(ls, d, k_I, 8);
        const auto [slope, offset] = oracle(ls, d, k_I);
        CHECK(p.slope == doctest::Approx(slope).epsilon(1e-10));
        CHECK(p.offset == doctest::Approx(offset).epsilon(1e-10));
        CHECK(p.classification == ImpactClass::Ramp);

        // linearity in the fake inputs
        std::vector<Eigen::Vector2d> d2 = d;
        for (auto& v : d2)
            v *= -2.5;
        const auto q = predict_impact(ls, d2, k_I, 8);
        CHECK(q.slope == doctest::Approx(-2.5 * p.slope).epsilon(1e-12));
        CHECK(q.offset == doctest::Approx(-2.5 * p.offset).epsilon(1e-12));
        // superposition over links
        double s = 0;
        for (std::size_t k = 0; k < ls.size(); ++k)
            s += predict_impact({ls[k]}, {d[k]}, k_I, 8).slope;
        CHECK(p.slope == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("single constant injection ramps the average voltage")
{
    const LinkModel l = link(2, 7); // DGU 3 receives from DGU 8
    const auto p = predict_single_impact(l, Eigen::Vector2d(2, 0), grid().k_I, 8);
    CHECK(p.classification == ImpactClass::Ramp);
    CHECK(p.sharing_violated);
    // the integrator pins V, so a unit load-channel input moves the converter current by one ampere
    CHECK(current_gain(l, Eigen::Vector2d(1, 0)) == doctest::Approx(1).epsilon(1e-9));
    CHECK(p.slope == doctest::Approx(-grid().k_I * l.a / l.rated * 2 / 8).epsilon(1e-9));
    CHECK(predict_impact({}, {}, grid().k_I, 8).classification == ImpactClass::None);
    CHECK_THROWS(predict_impact({l}, {}, grid().k_I, 8));
}

TEST_CASE("cooperative design cancels the ramp")
{
    const double k_I = grid().k_I;
    // the built-in cooperative set: DGU 2 <- 1 fixed, DGU 3 <- 2 free along the load channel
    const auto set2 = builtin_attacks("set2");
    REQUIRE(set2.size() == 2);
    const std::vector<LinkModel> ls = {link(set2[0].i, set2[0].j), link(set2[1].i, set2[1].j)};
    const auto out = design_cooperative(ls, {Eigen::Vector2d(2, 0), std::nullopt},
                                        {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)}, k_I);
    const auto p = predict_impact(ls, out, k_I, 8);
    CHECK(std::abs(p.coop_residual) < 1e-10);
    CHECK(p.classification == ImpactClass::Constant);
    CHECK(out[1](1) == 0.0);
    CHECK(out[1](0) == doctest::Approx(set2[1].fake_input.constant_part()(0)).epsilon(1e-9));
    // independent of the primary gains: the ratio of injection gains alone
    const double c0 = k_I * ls[0].a / ls[0].rated, c1 = k_I * ls[1].a / ls[1].rated;
    CHECK(out[1](0) == doctest::Approx(-2 * c0 / c1).epsilon(1e-9));

    CHECK_THROWS(design_cooperative({ls[0]}, {std::nullopt}, {Eigen::Vector2d(1, 0)}, k_I));
    CHECK_THROWS(design_cooperative({}, {}, {}, k_I));
    CHECK_THROWS(design_cooperative(ls, {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)},
                                    {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)}, k_I));
}

TEST_CASE("cooperative design with three links")
{
    const double k_I = grid().k_I;
    const std::vector<LinkModel> ls = {link(0, 1), link(3, 2), link(5, 4)};
    const auto one_free = design_cooperative(ls, {Eigen::Vector2d(1.5, 0), Eigen::Vector2d(-0.5, 0.2), std::nullopt},
                                             {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)}, k_I);
    CHECK(std::abs(predict_impact(ls, one_free, k_I, 8).coop_residual) < 1e-10);

    const std::vector<Eigen::Vector2d> dirs = {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(0.6, 0.8)};
    const auto two_free = design_cooperative(ls, {Eigen::Vector2d(2, 0), std::nullopt, std::nullopt}, dirs, k_I);
    CHECK(std::abs(predict_impact(ls, two_free, k_I, 8).coop_residual) < 1e-10);
    // minimum norm: the free scalars are proportional to their ramp coefficients
    const double g1 = k_I * ls[1].a / ls[1].rated * current_gain(ls[1], dirs[1]);
    const double g2 = k_I * ls[2].a / ls[2].rated * current_gain(ls[2], dirs[2]);
    const double s1 = two_free[1].dot(dirs[1]) / dirs[1].squaredNorm();
    const double s2 = two_free[2].dot(dirs[2]) / dirs[2].squaredNorm();
    CHECK(s1 * g2 == doctest::Approx(s2 * g1).epsilon(1e-10));
}

TEST_CASE("opposite injections into one receiver keep current sharing")
{
    const double k_I = grid().k_I;
    const int i = 2;
    std::vector<int> nb = grid().topology.neighbors(i);
    REQUIRE(nb.size() >= 2);
    const std::vector<LinkModel> ls = {link(i, nb[0]), link(i, nb[1])};
    const auto d = design_cooperative(ls, {Eigen::Vector2d(1, 0), std::nullopt},
                                      {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)}, k_I);
    const auto p = predict_impact(ls, d, k_I, 8);
    CHECK_FALSE(p.sharing_violated);
    CHECK(p.classification != ImpactClass::Ramp);
}

TEST_CASE("mitigated steady voltage scales with 1/k_ci")
{
    const double k_I = grid().k_I;
    const std::vector<LinkModel> ls = {link(2, 7)};
    const std::vector<Eigen::Vector2d> d = {Eigen::Vector2d(2, 0)};
    const double v20 = predict_mitigated_apvd(ls, d, k_I, 8, 20, 48);
    const double v40 = predict_mitigated_apvd(ls, d, k_I, 8, 40, 48);
    CHECK((v20 - 48) == doctest::Approx(2 * (v40 - 48)).epsilon(1e-12));
    const auto p = predict_impact(ls, d, k_I, 8);
    CHECK((v20 - 48) == doctest::Approx(p.slope / 20).epsilon(1e-12));
    CHECK_THROWS(predict_mitigated_apvd(ls, d, k_I, 8, 0, 48));
}

TEST_CASE("modal psi response matches integration")
{
    const auto& cfg = grid();
    const auto q = build_q<double>(cfg.topology, cfg.k_I, cfg.rated());
    const std::vector<LinkModel> ls = {link(2, 7), link(1, 0)};
    const std::vector<Eigen::Vector2d> d = {Eigen::Vector2d(2, 0), Eigen::Vector2d(-0.7, 0.4)};
    const double T_a = 0.5;
    // joint psi and deception states: psi' = -Q psi + sum c phi_2 e_i
    auto f = [&](double t, const Eigen::VectorXd& x) {
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.size());
        dx.head(8) = -q.Q * x.head(8);
        for (std::size_t l = 0; l < ls.size(); ++l) {
            const Eigen::Vector3d phi = x.segment<3>(8 + 3 * l);
            dx.segment<3>(8 + 3 * l) = ls[l].A_k * phi + ls[l].E * d[l];
            dx(ls[l].i) += injection_gain(ls[l], cfg.k_I) * phi(1);
        }
        (void)t;
        return dx;
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(8 + 6);
    double t = T_a;
    for (double t1 : {0.52, 0.6, 1.0, 2.0}) {
        x = rk4(f, x, t, t1, int((t1 - t) / 2e-6));
        t = t1;
        const Eigen::VectorXd psi = attack_psi(q, ls, d, cfg.k_I, T_a, t1);
        CHECK((psi - x.head(8)).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, psi.cwiseAbs().maxCoeff()));
    }
    CHECK(attack_psi(q, ls, d, cfg.k_I, T_a, T_a).isZero(0));
}

TEST_CASE("mean psi follows the predicted ramp and offset")
{
    const auto& cfg = grid();
    const auto q = build_q<double>(cfg.topology, cfg.k_I, cfg.rated());
    const std::vector<LinkModel> ls = {link(2, 7)};
    const std::vector<Eigen::Vector2d> d = {Eigen::Vector2d(2, 0)};
    const auto p = predict_impact(ls, d, cfg.k_I, 8);
    // 1^T Q = 0, so mean psi integrates c phi_2 / N exactly
    const Eigen::Matrix3d A = ls[0].A_k;
    const Eigen::Vector3d x = A.inverse() * ls[0].E * d[0];
    const double c = injection_gain(ls[0], cfg.k_I);
    for (double tau : {0.3, 1.0, 5.0}) {
        const double mean = attack_psi(q, ls, d, cfg.k_I, 6, 6 + tau).mean();
        const Eigen::Vector3d integral = A.inverse() * ((A * tau).exp() - Eigen::Matrix3d::Identity()) * x - x * tau;
        CHECK(mean == doctest::Approx(c * integral(1) / 8).epsilon(1e-8));
    }
    // once the fake dynamics settle the mean is the predicted ramp plus offset
    const double mean = attack_psi(q, ls, d, cfg.k_I, 6, 6 + 15).mean();
    CHECK(mean == doctest::Approx(p.slope * 15 + p.offset).epsilon(1e-8));
}
