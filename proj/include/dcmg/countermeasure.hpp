#pragma once

#include <cmath>
#include <optional>
#include <vector>

namespace dcmg {

/// Trapezoidal integral of uniformly sampled data over the most recent `window` seconds.
class WindowIntegral {
public:
    WindowIntegral() = default;
    WindowIntegral(double window, double dt);

    void reset();
    void push(double sample);
    /// Integral over the last full window (partial window while filling).
    double value() const { return sum_; }
    bool full() const { return count_ > intervals_; }
    double span() const { return intervals_ * dt_; }

private:
    void recompute();

    std::vector<double> buf_; // intervals_ + 1 samples
    std::size_t intervals_ = 0;
    std::size_t head_ = 0;  // slot of the next write
    std::size_t count_ = 0; // samples pushed since reset
    std::size_t since_recompute_ = 0;
    double dt_ = 0;
    double sum_ = 0;
};

struct CountermeasureParams {
    double window = 0.65;      // T, s
    double threshold = 0.0325; // d_bar, V s
    double k_cp = 1;
    double k_ci = 20;
    double delta = 0.005;      // V
    bool alarms = true;        // false: indicator only (used for calibration)
    std::optional<double> windup_limit; // clamp on the integral accumulator, V s
};

enum class Phase { Off, Detecting, Mitigating };
enum class Transition { Alarm, Freeze };

inline const char* to_string(Phase p)
{
    switch (p) {
    case Phase::Detecting: return "detecting";
    case Phase::Mitigating: return "mitigating";
    default: return "off";
    }
}

struct DetectorState {
    Phase phase = Phase::Off;
    double d = 0;
    double t_s = 0;
    std::optional<double> t_alarm;
    WindowIntegral window;
};

struct CompensatorState {
    double acc = 0;  // integral of V_hat_err since the alarm
    double bias = 0; // sum of frozen compensations
    double live = 0; // k_cp err + k_ci acc while mitigating
    double total() const { return bias + live; }
};

/// Detection indicator and PI compensation of one DGU.
class DguCountermeasure {
public:
    DguCountermeasure() = default;
    DguCountermeasure(const CountermeasureParams& p, double dt) : p_(p), dt_(dt) {}

    void activate(double t_s);
    void deactivate();
    bool active() const { return det_.phase != Phase::Off; }
    bool mitigating() const { return det_.phase == Phase::Mitigating; }

    /// Addend to the secondary input for the given estimation error and accumulator.
    double addend(double err, double acc) const
    {
        return comp_.bias + (mitigating() ? p_.k_cp * err + p_.k_ci * acc : 0.0);
    }
    /// Time derivative of the accumulator.
    double acc_rate(double err, double acc) const;

    /// Called once per step boundary with the current error; updates the indicator and
    /// performs the alarm and freeze transitions. `acc` is the accumulator state, reset on
    /// alarm and on freeze.
    std::optional<Transition> observe(double t, double err, double& acc);

    /// Self-contained step for use without an external integrator (trapezoidal accumulator).
    std::optional<Transition> step(double t, double err);

    const DetectorState& detector() const { return det_; }
    const CompensatorState& compensator() const { return comp_; }
    const CountermeasureParams& params() const { return p_; }
    CountermeasureParams& params() { return p_; }

private:
    CountermeasureParams p_;
    double dt_ = 0;
    DetectorState det_;
    CompensatorState comp_;
    double last_err_ = 0;
    double own_acc_ = 0;
};

/// Threshold from per-operation indicator maxima: margin x max (empty set: margin x floor).
double threshold_from_maxima(const std::vector<double>& maxima, double margin, double floor);

} // namespace dcmg
