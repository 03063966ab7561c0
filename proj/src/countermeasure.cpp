#include "dcmg/countermeasure.hpp"

#include <algorithm>
#include <stdexcept>

namespace dcmg {

WindowIntegral::WindowIntegral(double window, double dt) : dt_(dt)
{
    if (!(window > 0) || !(dt > 0))
        throw std::invalid_argument("window and step must be positive");
    intervals_ = std::max<std::size_t>(1, std::size_t(std::llround(window / dt)));
    buf_.assign(intervals_ + 1, 0.0);
}

void WindowIntegral::reset()
{
    std::fill(buf_.begin(), buf_.end(), 0.0);
    head_ = count_ = since_recompute_ = 0;
    sum_ = 0;
}

void WindowIntegral::push(double sample)
{
    const std::size_t n = buf_.size();
    if (count_ > 0) {
        const double prev = buf_[(head_ + n - 1) % n];
        sum_ += 0.5 * dt_ * (prev + sample);
    }
    if (count_ > intervals_) {
        // drop the oldest interval, which starts at the slot about to be overwritten
        const double oldest = buf_[head_];
        const double next = buf_[(head_ + 1) % n];
        sum_ -= 0.5 * dt_ * (oldest + next);
    }
    buf_[head_] = sample;
    head_ = (head_ + 1) % n;
    ++count_;
    if (++since_recompute_ >= 4 * n)
        recompute();
}

void WindowIntegral::recompute()
{
    since_recompute_ = 0;
    const std::size_t n = buf_.size();
    const std::size_t have = std::min(count_, n);
    double s = 0;
    for (std::size_t k = 1; k < have; ++k) {
        const double a = buf_[(head_ + n - k) % n];
        const double b = buf_[(head_ + n - k - 1) % n];
        s += 0.5 * dt_ * (a + b);
    }
    sum_ = s;
}

void DguCountermeasure::activate(double t_s)
{
    det_ = DetectorState{};
    det_.phase = Phase::Detecting;
    det_.t_s = t_s;
    det_.window = WindowIntegral(p_.window, dt_);
    comp_.live = 0;
    comp_.acc = 0;
    own_acc_ = 0;
}

void DguCountermeasure::deactivate()
{
    det_.phase = Phase::Off;
    det_.d = 0;
    comp_ = CompensatorState{};
    own_acc_ = 0;
}

double DguCountermeasure::acc_rate(double err, double acc) const
{
    if (!mitigating())
        return 0;
    if (p_.windup_limit && std::abs(acc) >= *p_.windup_limit && acc * err > 0)
        return 0;
    return err;
}

std::optional<Transition> DguCountermeasure::observe(double t, double err, double& acc)
{
    if (det_.phase == Phase::Off)
        return std::nullopt;
    det_.window.push(std::abs(err));
    det_.d = t + 0.5 * dt_ >= det_.t_s + p_.window ? det_.window.value() : 0.0;
    comp_.acc = acc;
    comp_.live = mitigating() ? p_.k_cp * err + p_.k_ci * acc : 0.0;
    if (!p_.alarms)
        return std::nullopt;
    if (det_.phase == Phase::Detecting && det_.d > p_.threshold) {
        det_.phase = Phase::Mitigating;
        det_.t_alarm = t;
        acc = 0;
        comp_.acc = 0;
        comp_.live = p_.k_cp * err;
        return Transition::Alarm;
    }
    if (det_.phase == Phase::Mitigating && std::abs(det_.d) < p_.window * p_.delta) {
        comp_.bias += comp_.live;
        comp_.live = 0;
        comp_.acc = 0;
        acc = 0;
        det_.phase = Phase::Detecting;
        return Transition::Freeze;
    }
    return std::nullopt;
}

std::optional<Transition> DguCountermeasure::step(double t, double err)
{
    if (mitigating()) {
        own_acc_ += 0.5 * dt_ * (last_err_ + err);
        if (p_.windup_limit)
            own_acc_ = std::clamp(own_acc_, -*p_.windup_limit, *p_.windup_limit);
    }
    last_err_ = err;
    return observe(t, err, own_acc_);
}

double threshold_from_maxima(const std::vector<double>& maxima, double margin, double floor)
{
    double m = floor;
    for (double v : maxima)
        m = std::max(m, v);
    return margin * m;
}

} // namespace dcmg
