#include "dcmg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace dcmg {

int Trace::column(const std::string& name) const
{
    for (std::size_t k = 0; k < columns.size(); ++k)
        if (columns[k] == name)
            return int(k);
    return -1;
}

std::vector<double> Trace::series(const std::string& name) const
{
    const int c = column(name);
    if (c < 0)
        throw std::out_of_range("no trace column '" + name + "'");
    std::vector<double> s;
    s.reserve(rows.size());
    for (const auto& r : rows)
        s.push_back(r[c]);
    return s;
}

double round9(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

namespace {

// scratch for stage evaluation; a Simulation is used by one thread at a time
struct Stage {
    std::vector<Eigen::Vector3d> y; // measured outputs
    std::vector<double> V, I, psi_tot, err, comp;
};
thread_local Stage g_stage;

} // namespace

Simulation::Simulation(ScenarioConfig cfg, std::vector<AttackSpec> attacks) : cfg_(std::move(cfg))
{
    finalize(cfg_);
    build();
    for (const auto& a : attacks)
        add_attack(a);
}

void Simulation::build()
{
    const int N = cfg_.size();
    if (!certify_rac(dac_realization<double>(cfg_.dac_a, cfg_.dac_gamma),
                     laplacian_modes(laplacian<double>(cfg_.topology, Weight::Dac)))
             .certified)
        throw ConfigError("DAC parameters fail the robust average consensus certificate");
    n_steps_ = cfg_.t_end > 0 ? std::max<long>(1, std::lround(cfg_.t_end / cfg_.dt)) : 0;
    record_every_ = std::max<long>(1, std::lround(cfg_.record_dt / cfg_.dt));

    el_.assign(N, false);
    comm_.assign(N, false);
    load_.resize(N);
    for (int i = 0; i < N; ++i)
        load_[i] = cfg_.dgus[i].I_load;
    lines_.assign(N, {});
    in_links_.assign(N, {});

    for (std::size_t e = 0; e < cfg_.topology.edges().size(); ++e) {
        const Edge& ed = cfg_.topology.edges()[e];
        for (int dir = 0; dir < 2; ++dir) {
            MonitoredLink l;
            l.i = dir ? ed.j : ed.i;
            l.j = dir ? ed.i : ed.j;
            l.a = ed.conductance;
            l.a_cd = l.a_cd_now = ed.dac_weight;
            l.edge = int(e);
            links_.push_back(l);
        }
    }
    std::sort(links_.begin(), links_.end(),
              [](const MonitoredLink& a, const MonitoredLink& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
    for (std::size_t l = 0; l < links_.size(); ++l)
        in_links_[links_[l].i].push_back(int(l));

    // observers of each sender; T A_k does not depend on the line coupling
    const Eigen::VectorXd poles = repeated_poles<double>(3, cfg_.uio_pole);
    const Eigen::MatrixXd H = dgu_h<double>(cfg_.uio_h(0), cfg_.uio_h(1), cfg_.uio_h(2));
    for (int j = 0; j < N; ++j) {
        const auto m = assemble_matrices<double>(cfg_.dgus[j], 0.0);
        uio_.push_back(synthesize_uio<double>(m.A_k, m.E, poles, H));
        th_.push_back(make_dgu_threshold<double>(uio_.back(), m.b, cfg_.dgus[j].k, cfg_.noise.rho, cfg_.noise.omega));
        th_rate_.push_back(th_.back().kappa * th_.back().n);
    }

    dac_a_nominal_ = cfg_.dac_a;
    dac_ = dac_realization<double>(cfg_.dac_a, cfg_.dac_gamma);
    dac_uio_ = synthesize_uio<double>(dac_.A1, dac_.B1, repeated_poles<double>(2, cfg_.dac_uio_pole));
    dac_th_ = make_dac_threshold<double>(dac_uio_, 0.0, cfg_.dac_uio_floor);

    CountermeasureParams cp = cfg_.cm;
    cp.alarms = cp.alarms && cfg_.countermeasure;
    cm_.assign(N, DguCountermeasure(cp, cfg_.dt));
    max_d_.assign(N, 0.0);

    rng_.seed(cfg_.seed);
    mtd_rng_.seed(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
    rho_.assign(N, Eigen::Vector3d::Zero());
    omega_.assign(N, Eigen::Vector3d::Zero());

    stats_.resize(links_.size());
    dac_stats_.resize(links_.size());
    for (std::size_t l = 0; l < links_.size(); ++l) {
        stats_[l].i = dac_stats_[l].i = links_[l].i;
        stats_[l].j = dac_stats_[l].j = links_[l].j;
    }
    crossing_now_.assign(2 * links_.size(), false);

    x_.assign(std::size_t(9 * N + 10 * int(links_.size())), 0.0);
    for (int i = 0; i < N; ++i) {
        // islanded equilibrium at V_ref with the primary loop alone
        const DguParams& p = cfg_.dgus[i];
        const double V = cfg_.v_ref, I = load_[i];
        x_[off(i)] = V;
        x_[off(i) + 1] = I;
        x_[off(i) + 2] = (V + p.R * I - p.k(0) * V - p.k(1) * I) / p.k(2);
    }

    trace_.columns = {"t", "vavg"};
    for (int i = 1; i <= N; ++i)
        for (const char* c : {"V_", "I_", "psi_", "Vhat_", "Verr_", "d_", "C_", "alarm_"})
            trace_.columns.push_back(c + std::to_string(i));
    for (const auto& l : links_)
        for (const char* c : {"r_", "rbar_"})
            for (int k = 1; k <= 3; ++k)
                trace_.columns.push_back(c + std::to_string(l.i + 1) + "_" + std::to_string(l.j + 1) + "_" +
                                         std::to_string(k));
}

void Simulation::add_attack(const AttackSpec& a)
{
    const int N = cfg_.size();
    if (a.i < 0 || a.i >= N || a.j < 0 || a.j >= N || a.i == a.j)
        throw ConfigError("attack link out of range");
    if (cfg_.topology.weight(a.i, a.j) == 0)
        throw ConfigError("attack on (" + std::to_string(a.i + 1) + "," + std::to_string(a.j + 1) +
                          "): no such communication link");
    if (a.fake_input.dim != (a.channel == AttackChannel::Output ? 2 : 1))
        throw ConfigError("attack fake input has the wrong dimension");
    if (!(a.start >= time() - 0.5 * cfg_.dt))
        throw ConfigError("attack must start in the future");
    AttackRuntime r;
    r.spec = a;
    r.offset = int(x_.size());
    x_.resize(x_.size() + std::size_t(a.state_dim()), 0.0);
    attacks_.push_back(std::move(r));
}

int Simulation::link_index(int i, int j) const
{
    for (std::size_t l = 0; l < links_.size(); ++l)
        if (links_[l].i == i && links_[l].j == j)
            return int(l);
    return -1;
}

double Simulation::V(int i) const { return x_[off(i)]; }
double Simulation::I(int i) const { return x_[off(i) + 1]; }

double Simulation::vhat(int i) const
{
    return dac_.C1(0) * x_[off(i) + 5] + dac_.C1(1) * x_[off(i) + 6];
}

double Simulation::compensation(int i) const
{
    if (!comm_[i] || !cfg_.countermeasure)
        return 0;
    return cm_[i].addend(verr(i), x_[off(i) + 4]);
}

double Simulation::vavg() const
{
    double s = 0;
    int n = 0;
    for (int i = 0; i < size(); ++i)
        if (el_[i]) {
            s += V(i);
            ++n;
        }
    if (n == 0) {
        for (int i = 0; i < size(); ++i)
            s += V(i);
        n = size();
    }
    return s / n;
}

double Simulation::current_spread() const
{
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < size(); ++i)
        if (el_[i]) {
            const double pu = I(i) / cfg_.dgus[i].I_rated;
            lo = std::min(lo, pu);
            hi = std::max(hi, pu);
        }
    return hi >= lo ? hi - lo : 0.0;
}

void Simulation::log(double t, int dgu, const std::string& ev, const std::string& tr, int peer, double value)
{
    LogEvent e;
    e.t = t;
    e.dgu = dgu;
    e.event = ev;
    e.transition = tr;
    e.peer = peer;
    e.value = value;
    log_.push_back(std::move(e));
}

void Simulation::draw_noise()
{
    // fixed draw order regardless of which units are active keeps twins aligned
    for (int i = 0; i < size(); ++i) {
        rho_[i] = sample_noise(cfg_.noise.rho, rng_);
        omega_[i] = sample_noise(cfg_.noise.omega, rng_);
    }
}

// ---- stage evaluation ----------------------------------------------------------------

Eigen::Vector3d Simulation::received_output(int l, double t, const double* x) const
{
    const MonitoredLink& lk = links_[l];
    Eigen::Vector3d y = g_stage.y[lk.j];
    for (const auto& a : attacks_) {
        if (!a.started || a.spec.channel != AttackChannel::Output || a.spec.i != lk.i || a.spec.j != lk.j)
            continue;
        y += Eigen::Map<const Eigen::Vector3d>(x + a.offset);
        if (a.spec.bias.size())
            y += a.spec.bias;
    }
    (void)t;
    return y;
}

Eigen::Vector2d Simulation::received_dac(int l, int channel, double t, const double* x) const
{
    const MonitoredLink& lk = links_[l];
    Eigen::Vector2d X = Eigen::Map<const Eigen::Vector2d>(x + off(lk.j) + 5 + 2 * channel);
    const AttackChannel want = channel == 0 ? AttackChannel::DacX1 : AttackChannel::DacX2;
    for (const auto& a : attacks_) {
        if (!a.started || a.spec.channel != want || a.spec.i != lk.i || a.spec.j != lk.j)
            continue;
        X += Eigen::Map<const Eigen::Vector2d>(x + a.offset);
        if (a.spec.bias.size())
            X += a.spec.bias;
    }
    (void)t;
    return X;
}

void Simulation::deriv(double t, const double* x, double* dx) const
{
    const int N = size();
    const bool reduced = cfg_.fidelity == Fidelity::Reduced;
    Stage& s = g_stage;
    s.y.resize(N);
    s.V.resize(N);
    s.I.resize(N);
    s.psi_tot.resize(N);
    s.err.resize(N);
    s.comp.resize(N);
    std::fill(dx, dx + x_.size(), 0.0);

    for (int i = 0; i < N; ++i) {
        const double* xi = x + off(i);
        const double vh = dac_.C1(0) * xi[5] + dac_.C1(1) * xi[6];
        s.err[i] = comm_[i] ? vh - cfg_.v_ref : 0.0;
        s.comp[i] = comm_[i] && cfg_.countermeasure ? cm_[i].addend(s.err[i], xi[4]) : 0.0;
        s.psi_tot[i] = xi[3] - s.comp[i];
        s.V[i] = reduced ? cfg_.v_ref + s.psi_tot[i] : xi[0];
    }
    for (int i = 0; i < N; ++i) {
        if (reduced) {
            double cur = load_[i];
            for (const auto& [k, g] : lines_[i])
                cur += g * (s.V[i] - s.V[k]);
            s.I[i] = cur;
        } else {
            s.I[i] = x[off(i) + 1];
        }
        s.y[i] = Eigen::Vector3d(s.V[i], s.I[i], x[off(i) + 2]) + rho_[i];
    }

    for (int i = 0; i < N; ++i) {
        const DguParams& p = cfg_.dgus[i];
        const double* xi = x + off(i);
        double* di = dx + off(i);
        if (!reduced) {
            double line = 0;
            for (const auto& [k, g] : lines_[i])
                line += g * (s.V[i] - s.V[k]);
            const double u = p.k.dot(s.y[i]);
            di[0] = (s.I[i] - load_[i] - line) / p.C + omega_[i](0);
            di[1] = (-s.V[i] - p.R * s.I[i] + u) / p.L + omega_[i](1);
            di[2] = cfg_.v_ref + s.psi_tot[i] - s.V[i] + omega_[i](2);
        }
        if (!comm_[i])
            continue;

        double cons = 0;
        for (int l : in_links_[i]) {
            const MonitoredLink& lk = links_[l];
            if (!lk.active)
                continue;
            const Eigen::Vector3d yc = received_output(l, t, x);
            cons += lk.a * (s.y[i](1) / p.I_rated - yc(1) / cfg_.dgus[lk.j].I_rated);
        }
        di[3] = -cfg_.k_I * cons;
        if (cfg_.countermeasure)
            di[4] = cm_[i].acc_rate(s.err[i], xi[4]);

        // DAC estimator with the validated neighbours
        const Eigen::Vector2d X1(xi[5], xi[6]), X2(xi[7], xi[8]);
        const double eta = dac_.C2 * X2;
        const double vh = dac_.C1 * X1;
        double s_eta = 0, s_v = 0;
        for (int l : in_links_[i]) {
            const MonitoredLink& lk = links_[l];
            if (!lk.active || lk.dac_excluded)
                continue;
            const Eigen::Vector2d r1 = received_dac(l, 0, t, x);
            const Eigen::Vector2d r2 = received_dac(l, 1, t, x);
            s_eta += lk.a_cd_now * (eta - dac_.C2 * r2);
            s_v += lk.a_cd_now * (vh - dac_.C1 * r1);
        }
        const Eigen::Vector2d d1 = dac_.A1 * X1 + dac_.B1 * (s.y[i](0) - dac_.gamma * s_eta);
        const Eigen::Vector2d d2 = dac_.A2 * X2 + dac_.B2 * (dac_.gamma * s_v);
        di[5] = d1(0);
        di[6] = d1(1);
        di[7] = d2(0);
        di[8] = d2(1);
    }

    for (std::size_t l = 0; l < links_.size(); ++l) {
        const MonitoredLink& lk = links_[l];
        if (!lk.active)
            continue;
        const double* xl = x + link_off(int(l));
        double* dl = dx + link_off(int(l));
        const UioParams<double>& u = uio_[lk.j];
        const Eigen::Vector3d yc = received_output(int(l), t, x);
        const Eigen::Vector3d z(xl[0], xl[1], xl[2]);
        const Eigen::Vector3d dz = u.F * z + u.Khat * yc;
        const Eigen::Vector3d m(xl[3], xl[4], xl[5]);
        const Eigen::Vector3d dm = -th_[lk.j].mu * m + th_rate_[lk.j];
        for (int k = 0; k < 3; ++k) {
            dl[k] = dz(k);
            dl[3 + k] = dm(k);
        }
        for (int c = 0; c < 2; ++c) {
            const Eigen::Vector2d Xc = received_dac(int(l), c, t, x);
            const Eigen::Vector2d zd(xl[6 + 2 * c], xl[7 + 2 * c]);
            const Eigen::Vector2d dzd = dac_uio_.F * zd + dac_uio_.Khat * Xc;
            dl[6 + 2 * c] = dzd(0);
            dl[7 + 2 * c] = dzd(1);
        }
    }

    for (const auto& a : attacks_) {
        if (!a.started)
            continue;
        const double* xa = x + a.offset;
        double* da = dx + a.offset;
        if (a.spec.channel == AttackChannel::Output) {
            Eigen::Vector3d phi(xa[0], xa[1], xa[2]);
            Eigen::Vector2d d = a.spec.fake_input(t);
            Eigen::Vector3d r = a.A * phi + a.E * d;
            if (!a.spec.converter.empty())
                r += a.b * a.spec.converter(t)(0);
            da[0] = r(0);
            da[1] = r(1);
            da[2] = r(2);
        } else {
            const Eigen::Vector2d phi(xa[0], xa[1]);
            const Eigen::Vector2d r = a.A2 * phi + a.B2 * a.spec.fake_input(t)(0);
            da[0] = r(0);
            da[1] = r(1);
        }
    }
}

void Simulation::rk4()
{
    const std::size_t n = x_.size();
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    tmp_.resize(n);
    const double h = cfg_.dt, t = time();
    deriv(t, x_.data(), k1_.data());
    for (std::size_t k = 0; k < n; ++k)
        tmp_[k] = x_[k] + 0.5 * h * k1_[k];
    deriv(t + 0.5 * h, tmp_.data(), k2_.data());
    for (std::size_t k = 0; k < n; ++k)
        tmp_[k] = x_[k] + 0.5 * h * k2_[k];
    deriv(t + 0.5 * h, tmp_.data(), k3_.data());
    for (std::size_t k = 0; k < n; ++k)
        tmp_[k] = x_[k] + h * k3_[k];
    deriv(t + h, tmp_.data(), k4_.data());
    for (std::size_t k = 0; k < n; ++k)
        x_[k] += h / 6 * (k1_[k] + 2 * k2_[k] + 2 * k3_[k] + k4_[k]);

    if (cfg_.fidelity == Fidelity::Reduced) {
        // store the algebraic voltages and currents of the new state
        deriv(t + h, x_.data(), tmp_.data());
        for (int i = 0; i < size(); ++i) {
            x_[off(i)] = g_stage.V[i];
            x_[off(i) + 1] = g_stage.I[i];
        }
    }
}

// ---- events ----------------------------------------------------------------------------

void Simulation::refresh_links()
{
    const int N = size();
    for (int i = 0; i < N; ++i) {
        lines_[i].clear();
        if (!el_[i])
            continue;
        for (int k : cfg_.topology.neighbors(i))
            if (el_[k])
                lines_[i].push_back({k, cfg_.topology.weight(i, k)});
    }
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const bool on = comm_[links_[l].i] && comm_[links_[l].j];
        if (on && !links_[l].active) {
            links_[l].active = true;
            start_link(int(l));
        } else if (!on) {
            links_[l].active = false;
            links_[l].dac_excluded = false;
        }
    }
}

void Simulation::start_link(int l)
{
    MonitoredLink& lk = links_[l];
    lk.t0 = time();
    lk.dac_excluded = false;
    // outputs at the start instant, with the noise of the coming step
    g_stage.y.resize(size());
    for (int i = 0; i < size(); ++i)
        g_stage.y[i] = Eigen::Vector3d(x_[off(i)], x_[off(i) + 1], x_[off(i) + 2]) + rho_[i];
    const Eigen::Vector3d z = uio_[lk.j].T * received_output(l, time(), x_.data());
    double* xl = x_.data() + link_off(l);
    for (int k = 0; k < 3; ++k) {
        xl[k] = z(k);
        xl[3 + k] = 0;
    }
    for (int c = 0; c < 2; ++c) {
        const Eigen::Vector2d zd = dac_uio_.T * received_dac(l, c, time(), x_.data());
        xl[6 + 2 * c] = zd(0);
        xl[7 + 2 * c] = zd(1);
    }
}

void Simulation::activate_comm(int i)
{
    if (comm_[i])
        return;
    comm_[i] = true;
    Eigen::Vector2d X1, X2;
    dac_warm_start<double>(dac_, x_[off(i)] + rho_[i](0), X1, X2);
    x_[off(i) + 3] = 0;
    x_[off(i) + 4] = 0;
    x_[off(i) + 5] = X1(0);
    x_[off(i) + 6] = X1(1);
    x_[off(i) + 7] = X2(0);
    x_[off(i) + 8] = X2(1);
    cm_[i].activate(time());
}

void Simulation::deactivate(int i)
{
    if (comm_[i] && cfg_.psi_handoff) {
        std::vector<int> to;
        for (int l : in_links_[i])
            if (links_[l].active)
                to.push_back(links_[l].j);
        for (int j : to)
            x_[off(j) + 3] += x_[off(i) + 3] / double(to.size());
    }
    el_[i] = false;
    comm_[i] = false;
    for (int k = 3; k < 9; ++k)
        x_[off(i) + k] = 0;
    cm_[i].deactivate();
}

void Simulation::snapshot_attack(AttackRuntime& a)
{
    a.snapped = true;
    if (a.spec.channel == AttackChannel::Output) {
        const auto m = plant_of(cfg_, a.spec.j, el_);
        a.A = m.A_k;
        a.E = m.E;
        a.b = m.b;
    } else if (a.spec.channel == AttackChannel::DacX1) {
        a.A2 = dac_.A1;
        a.B2 = dac_.B1;
    } else {
        a.A2 = dac_.A2;
        a.B2 = dac_.B2;
    }
}

void Simulation::apply(const Event& e)
{
    const double t = time();
    const int N = size();
    switch (e.kind) {
    case EventKind::PlugIn:
    case EventKind::PlugOut: {
        for (int id : e.dgus) {
            if (e.kind == EventKind::PlugIn) {
                if (el_[id])
                    continue;
                el_[id] = true;
                if (comm_on_)
                    activate_comm(id);
            } else {
                if (!el_[id])
                    continue;
                deactivate(id);
            }
            log(t, id, to_string(e.kind));
        }
        const auto comps = cfg_.topology.components(el_);
        if (comps.size() > 1)
            throw SimulationAborted("event at t=" + std::to_string(t) +
                                        " leaves the grid disconnected: " + describe_components(comps),
                                    t);
        refresh_links();
        break;
    }
    case EventKind::LoadScale:
        for (int i = 0; i < N; ++i)
            if (e.dgus.empty() || std::find(e.dgus.begin(), e.dgus.end(), i) != e.dgus.end())
                load_[i] *= e.factor;
        log(t, -1, "load_scale", "", -1, e.factor);
        break;
    case EventKind::CommActivate:
        comm_on_ = true;
        for (int i = 0; i < N; ++i)
            if (el_[i])
                activate_comm(i);
        refresh_links();
        log(t, -1, "comm_activate");
        break;
    case EventKind::MtdPerturb: {
        MtdDraw d = draw_mtd(mtd_rng_, cfg_.topology.edges().size());
        if (e.a_factor)
            d.a_factor = *e.a_factor;
        if (e.weight_factors.size() == 1)
            std::fill(d.weight_factors.begin(), d.weight_factors.end(), e.weight_factors[0]);
        else if (!e.weight_factors.empty())
            d.weight_factors = e.weight_factors;
        const double a_new = dac_a_nominal_ * d.a_factor;
        Topology g = cfg_.topology;
        for (std::size_t k = 0; k < g.edges().size(); ++k)
            g.edges()[k].dac_weight *= d.weight_factors[k];
        const std::vector<double> lam = laplacian_modes(laplacian<double>(g, Weight::Dac, comm_));
        const auto next = dac_realization<double>(a_new, cfg_.dac_gamma);
        if (!certify_rac(next, lam).certified) {
            log(t, -1, "mtd_rejected", "", -1, a_new);
            break;
        }
        const auto [s1, s2] = mtd_state_scale(dac_.a, a_new);
        for (int i = 0; i < N; ++i) {
            if (!comm_[i])
                continue;
            Eigen::Vector2d X1(x_[off(i) + 5], x_[off(i) + 6]), X2(x_[off(i) + 7], x_[off(i) + 8]);
            mtd_rescale(dac_.a, a_new, X1, X2);
            x_[off(i) + 5] = X1(0);
            x_[off(i) + 6] = X1(1);
            x_[off(i) + 7] = X2(0);
            x_[off(i) + 8] = X2(1);
        }
        for (std::size_t l = 0; l < links_.size(); ++l) {
            links_[l].a_cd_now = links_[l].a_cd * d.weight_factors[links_[l].edge];
            double* xl = x_.data() + link_off(int(l));
            xl[6] *= s1;
            xl[7] *= s1;
            xl[8] *= s2; // X2 rescales only in its second component, tracked by the observer
            xl[9] *= s2;
        }
        dac_ = next;
        dac_uio_ = synthesize_uio<double>(dac_.A1, dac_.B1, repeated_poles<double>(2, cfg_.dac_uio_pole));
        log(t, -1, "mtd", "", -1, a_new);
        break;
    }
    }
}

void Simulation::apply_events()
{
    const double t = time();
    const double eps = 0.5 * cfg_.dt;
    while (next_event_ < cfg_.events.size() && cfg_.events[next_event_].t <= t + eps)
        apply(cfg_.events[next_event_++]);
    for (auto& a : attacks_) {
        const double know = a.spec.knowledge_time ? std::min(*a.spec.knowledge_time, a.spec.start) : a.spec.start;
        if (!a.snapped && know <= t + eps)
            snapshot_attack(a);
        if (!a.started && a.spec.start <= t + eps) {
            a.started = true;
            for (int k = 0; k < a.spec.state_dim(); ++k)
                x_[std::size_t(a.offset + k)] = a.spec.phi0.size() ? a.spec.phi0(k) : 0.0;
            log(t, a.spec.i, "attack_start", "", a.spec.j);
        }
    }
}

// ---- observation -------------------------------------------------------------------

Eigen::Vector3d Simulation::residual(int l) const
{
    const MonitoredLink& lk = links_[l];
    if (!lk.active)
        return Eigen::Vector3d::Zero();
    Stage& s = g_stage;
    s.y.resize(size());
    for (int i = 0; i < size(); ++i)
        s.y[i] = Eigen::Vector3d(x_[off(i)], x_[off(i) + 1], x_[off(i) + 2]) + rho_[i];
    const double* xl = x_.data() + link_off(l);
    return uio_[lk.j].T * received_output(l, time(), x_.data()) - Eigen::Vector3d(xl[0], xl[1], xl[2]);
}

Eigen::Vector3d Simulation::threshold(int l) const
{
    const MonitoredLink& lk = links_[l];
    if (!lk.active)
        return Eigen::Vector3d::Zero();
    const double* xl = x_.data() + link_off(l);
    return th_[lk.j].bound(time() - lk.t0, Eigen::Vector3d(xl[3], xl[4], xl[5]));
}

Eigen::Vector2d Simulation::dac_residual(int l) const
{
    const MonitoredLink& lk = links_[l];
    if (!lk.active)
        return Eigen::Vector2d::Zero();
    const double* xl = x_.data() + link_off(l);
    Eigen::Vector2d r;
    for (int c = 0; c < 2; ++c) {
        const Eigen::Vector2d e =
            dac_uio_.T * received_dac(l, c, time(), x_.data()) - Eigen::Vector2d(xl[6 + 2 * c], xl[7 + 2 * c]);
        Eigen::Index k;
        e.cwiseAbs().maxCoeff(&k);
        r(c) = e(k);
    }
    return r;
}

void Simulation::observe()
{
    const double t = time();
    for (int i = 0; i < size(); ++i) {
        if (!comm_[i])
            continue;
        double& acc = x_[off(i) + 4];
        const std::string before = to_string(cm_[i].detector().phase);
        const auto tr = cm_[i].observe(t, verr(i), acc);
        max_d_[i] = std::max(max_d_[i], cm_[i].detector().d);
        if (tr)
            log(t, i, *tr == Transition::Alarm ? "alarm" : "freeze",
                before + "->" + to_string(cm_[i].detector().phase), -1, cm_[i].detector().d);
    }
    const double dac_floor = cfg_.dac_uio_floor;
    for (std::size_t l = 0; l < links_.size(); ++l) {
        MonitoredLink& lk = links_[l];
        if (!lk.active) {
            crossing_now_[2 * l] = crossing_now_[2 * l + 1] = false;
            continue;
        }
        // the physical UIO models the 3-state DGU, which reduced mode does not integrate
        if (cfg_.fidelity == Fidelity::Reduced) {
            crossing_now_[2 * l] = false;
        } else {
            const Eigen::Vector3d r = residual(int(l));
            const Eigen::Vector3d rb = threshold(int(l));
            LinkStats& st = stats_[l];
            st.max_abs = std::max(st.max_abs, r.cwiseAbs().maxCoeff());
            for (int k = 0; k < 3; ++k)
                if (rb(k) > 0)
                    st.max_ratio = std::max(st.max_ratio, std::abs(r(k)) / rb(k));
            const bool cross = crossed<double>(r, rb);
            if (cross) {
                ++st.crossings;
                if (!st.first_crossing)
                    st.first_crossing = t;
                if (!crossing_now_[2 * l])
                    log(t, lk.i, "residual_crossing", "", lk.j, r.cwiseAbs().maxCoeff());
            }
            crossing_now_[2 * l] = cross;
        }

        const Eigen::Vector2d rd = dac_residual(int(l));
        LinkStats& ds = dac_stats_[l];
        const double rmax = rd.cwiseAbs().maxCoeff();
        ds.max_abs = std::max(ds.max_abs, rmax);
        ds.max_ratio = std::max(ds.max_ratio, rmax / dac_floor);
        const bool dcross = rmax > dac_floor;
        if (dcross) {
            ++ds.crossings;
            if (!ds.first_crossing)
                ds.first_crossing = t;
            if (!lk.dac_excluded) {
                lk.dac_excluded = true; // latched until the link restarts
                log(t, lk.i, "dac_exclusion", "", lk.j, rmax);
            }
        }
        crossing_now_[2 * l + 1] = dcross;
    }
}

void Simulation::record_row()
{
    std::vector<double> row;
    row.reserve(trace_.columns.size());
    row.push_back(time());
    row.push_back(vavg());
    for (int i = 0; i < size(); ++i) {
        row.push_back(V(i));
        row.push_back(I(i));
        row.push_back(psi(i));
        row.push_back(comm_[i] ? vhat(i) : 0.0);
        row.push_back(verr(i));
        row.push_back(cm_[i].detector().d);
        row.push_back(compensation(i));
        row.push_back(cm_[i].mitigating() ? 1.0 : 0.0);
    }
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const Eigen::Vector3d r = residual(int(l)), rb = threshold(int(l));
        for (int k = 0; k < 3; ++k)
            row.push_back(r(k));
        for (int k = 0; k < 3; ++k)
            row.push_back(rb(k));
    }
    for (double& v : row)
        v = round9(v);
    trace_.rows.push_back(std::move(row));
}

void Simulation::check_finite()
{
    for (double v : x_)
        if (!std::isfinite(v))
            throw SimulationAborted("non-finite state at t=" + std::to_string(time()) + "; last good time " +
                                        std::to_string(time() - cfg_.dt),
                                    time() - cfg_.dt);
}

void Simulation::step()
{
    if (done())
        return;
    draw_noise();
    apply_events();
    observe();
    if (record_ && step_ % record_every_ == 0)
        record_row();
    rk4();
    ++step_;
    check_finite();
    if (done()) {
        // final boundary: observe with the last noise held, record the end row
        apply_events();
        observe();
        if (record_)
            record_row();
    }
}

void Simulation::run_until(double t)
{
    while (!done() && time() + 0.5 * cfg_.dt < t)
        step();
}

void Simulation::run()
{
    while (!done())
        step();
}

TwinResult twin_run(const ScenarioConfig& cfg, const std::vector<AttackSpec>& attacks, Simulation* attacked_out,
                    Simulation* twin_out)
{
    Simulation a(cfg, attacks), b(cfg);
    TwinResult res;
    while (!a.done()) {
        a.step();
        b.step();
        for (std::size_t l = 0; l < a.links().size(); ++l) {
            if (!a.links()[l].active && !b.links()[l].active)
                continue;
            res.max_residual_diff =
                std::max(res.max_residual_diff, (a.residual(int(l)) - b.residual(int(l))).cwiseAbs().maxCoeff());
            res.max_dac_residual_diff = std::max(
                res.max_dac_residual_diff, (a.dac_residual(int(l)) - b.dac_residual(int(l))).cwiseAbs().maxCoeff());
        }
        for (int i = 0; i < a.size(); ++i)
            res.max_psi_diff = std::max(res.max_psi_diff, std::abs(a.psi(i) - b.psi(i)));
    }
    for (const auto& s : a.link_stats())
        res.attacked_crossings += s.crossings;
    for (const auto& s : b.link_stats())
        res.twin_crossings += s.crossings;
    if (attacked_out)
        *attacked_out = std::move(a);
    if (twin_out)
        *twin_out = std::move(b);
    return res;
}

} // namespace dcmg
