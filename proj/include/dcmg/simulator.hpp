#pragma once

#include "dcmg/countermeasure.hpp"
#include "dcmg/dac.hpp"
#include "dcmg/scenario.hpp"
#include "dcmg/uio.hpp"
#include "dcmg/zts.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcmg {

class SimulationAborted : public std::runtime_error {
public:
    SimulationAborted(const std::string& what, double last_good)
        : std::runtime_error(what), last_good_time(last_good) {}
    double last_good_time;
};

/// One line of the JSON-lines event log. `dgu` is 0-based, -1 for grid-wide events.
struct LogEvent {
    double t = 0;
    int dgu = -1;
    std::string event;      // alarm, freeze, plug_in, residual_crossing, ...
    std::string transition; // "detecting->mitigating" for phase changes
    int peer = -1;          // other end of a link
    double value = 0;
};

/// Recorded channels; values are stored already rounded to the CSV precision.
struct Trace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const;
    std::vector<double> series(const std::string& name) const;
    bool empty() const { return rows.empty(); }
};

/// Rounds to 9 significant digits exactly as written to the CSV.
double round9(double v);

struct LinkStats {
    int i = 0, j = 0;
    double max_abs = 0;    // max |r| component
    double max_ratio = 0;  // max |r_k| / rbar_k
    long crossings = 0;    // steps with |r| > rbar
    std::optional<double> first_crossing;
};

/// Directed monitored link: DGU i watches the data it receives from DGU j.
struct MonitoredLink {
    int i = 0, j = 0;
    double a = 0;      // a_ij, consensus weight
    double a_cd = 0;   // nominal DAC weight
    double a_cd_now = 0;
    bool active = false;
    bool dac_excluded = false;
    double t0 = 0;     // observer start
    int edge = 0;
};

struct AttackRuntime {
    AttackSpec spec;
    bool started = false;
    bool snapped = false;
    int offset = 0; // into the state vector
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Matrix<double, 3, 2> E = Eigen::Matrix<double, 3, 2>::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    Eigen::Matrix2d A2 = Eigen::Matrix2d::Zero();
    Eigen::Vector2d B2 = Eigen::Vector2d::Zero();
};

/// Fixed-step RK4 simulation of plants, secondary control, DAC estimators, observers,
/// attacks and countermeasure in one state vector.
class Simulation {
public:
    explicit Simulation(ScenarioConfig cfg, std::vector<AttackSpec> attacks = {});

    const ScenarioConfig& config() const { return cfg_; }
    double time() const { return double(step_) * cfg_.dt; }
    long step_index() const { return step_; }
    long total_steps() const { return n_steps_; }
    bool done() const { return step_ >= n_steps_; }

    /// Advances one step. Throws SimulationAborted.
    void step();
    void run_until(double t);
    void run();

    /// Adds an attack before its start instant.
    void add_attack(const AttackSpec& a);

    void set_recording(bool on) { record_ = on; }

    const Trace& trace() const { return trace_; }
    const std::vector<LogEvent>& events() const { return log_; }
    const std::vector<MonitoredLink>& links() const { return links_; }
    const std::vector<LinkStats>& link_stats() const { return stats_; }
    const std::vector<LinkStats>& dac_link_stats() const { return dac_stats_; }
    int link_index(int i, int j) const;

    int size() const { return cfg_.size(); }
    double V(int i) const;
    double I(int i) const;
    double psi(int i) const { return x_[off(i) + 3]; }
    double vhat(int i) const;
    double verr(int i) const { return comm_[i] ? vhat(i) - cfg_.v_ref : 0.0; }
    double compensation(int i) const;
    double vavg() const;
    double current_spread() const;
    const std::vector<bool>& connected() const { return el_; }
    const std::vector<bool>& comm() const { return comm_; }
    const DguCountermeasure& countermeasure(int i) const { return cm_[i]; }
    double max_indicator(int i) const { return max_d_[i]; }
    double dac_a() const { return dac_.a; }

    /// Output residual and threshold of a link at the last step boundary.
    Eigen::Vector3d residual(int link) const;
    Eigen::Vector3d threshold(int link) const;
    Eigen::Vector2d dac_residual(int link) const; // [X1 channel, X2 channel]

    const std::vector<double>& state() const { return x_; }

private:
    int off(int i) const { return 9 * i; }
    int link_off(int l) const { return 9 * cfg_.size() + 10 * l; }

    void build();
    void draw_noise();
    void apply_events();
    void apply(const Event& e);
    void activate_comm(int i);
    void deactivate(int i);
    void start_link(int l);
    void refresh_links();
    void snapshot_attack(AttackRuntime& a);
    void observe();
    void record_row();
    void rk4();
    void deriv(double t, const double* x, double* dx) const;
    Eigen::Vector3d received_output(int l, double t, const double* x) const;
    Eigen::Vector2d received_dac(int l, int channel, double t, const double* x) const;
    void check_finite();
    void log(double t, int dgu, const std::string& ev, const std::string& tr = "", int peer = -1, double value = 0);

    ScenarioConfig cfg_;
    std::vector<AttackRuntime> attacks_;
    long step_ = 0;
    long n_steps_ = 0;
    long record_every_ = 1;
    bool record_ = true;

    std::vector<double> x_;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;

    std::vector<bool> el_, comm_;
    bool comm_on_ = false;
    std::vector<double> load_;
    std::vector<std::vector<std::pair<int, double>>> lines_; // electrical neighbours
    std::vector<MonitoredLink> links_;
    std::vector<std::vector<int>> in_links_; // links monitored by DGU i (i receives)

    // observers
    std::vector<UioParams<double>> uio_;          // per sender j
    std::vector<ThresholdModel<double>> th_;      // per sender j
    std::vector<Eigen::Vector3d> th_rate_;        // kappa n, per sender
    UioParams<double> dac_uio_;
    ThresholdModel<double> dac_th_;

    DacRealization<double> dac_;
    double dac_a_nominal_ = 0;

    std::vector<DguCountermeasure> cm_;
    std::vector<double> max_d_;

    std::mt19937_64 rng_, mtd_rng_;
    std::vector<Eigen::Vector3d> rho_, omega_;
    std::size_t next_event_ = 0;

    std::vector<LinkStats> stats_, dac_stats_;
    std::vector<bool> crossing_now_;
    Trace trace_;
    std::vector<LogEvent> log_;
};

struct TwinResult {
    double max_residual_diff = 0;     // output observers
    double max_dac_residual_diff = 0; // DAC observers
    double max_psi_diff = 0;
    long attacked_crossings = 0;
    long twin_crossings = 0;
};

/// Runs the attacked configuration and its attack-free twin in lockstep with identical noise.
TwinResult twin_run(const ScenarioConfig& cfg, const std::vector<AttackSpec>& attacks, Simulation* attacked_out = nullptr,
                    Simulation* twin_out = nullptr);

/// Integrator tolerance used by the stealth check (difference must stay below 10x this).
inline constexpr double kIntegratorTolerance = 1e-9;

} // namespace dcmg
