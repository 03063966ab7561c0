#include "dcmg/calibration.hpp"

#include "dcmg/simulator.hpp"

#include <algorithm>

namespace dcmg {

namespace {

std::vector<Event> initialisation(const ScenarioConfig& base)
{
    const auto ops = daily_operations(base);
    std::vector<Event> init;
    for (const auto& e : base.events) {
        if (e.kind == EventKind::MtdPerturb)
            continue;
        const bool is_op = std::any_of(ops.begin(), ops.end(), [&](const Event& o) {
            return o.t == e.t && o.kind == e.kind && o.dgus == e.dgus && o.factor == e.factor;
        });
        if (!is_op)
            init.push_back(e);
    }
    return init;
}

double comm_time(const std::vector<Event>& init)
{
    for (const auto& e : init)
        if (e.kind == EventKind::CommActivate)
            return e.t;
    throw ConfigError("calibration needs a communication activation event");
}

OpResult run_one(const ScenarioConfig& base, std::vector<Event> events, double t_end)
{
    ScenarioConfig c = base;
    c.events = std::move(events);
    c.t_end = t_end;
    c.mtd_period = 0;
    c.cm.alarms = false;
    OpResult r;
    try {
        Simulation sim(c);
        sim.set_recording(false);
        sim.run();
        for (int i = 0; i < sim.size(); ++i) {
            r.per_dgu.push_back(sim.max_indicator(i));
            r.max_indicator = std::max(r.max_indicator, sim.max_indicator(i));
        }
    } catch (const SimulationAborted& e) {
        r.excluded = true;
        r.warning = e.what();
        r.per_dgu.assign(base.size(), 0.0);
    }
    return r;
}

} // namespace

CalibrationReport calibrate_threshold(const ScenarioConfig& base, const std::vector<Event>& ops, double margin,
                                      double settle)
{
    if (!(margin > 0))
        throw ConfigError("calibration margin must be positive");
    const auto init = initialisation(base);
    const double t_s = comm_time(init);
    double t_init = 0;
    for (const auto& e : init)
        t_init = std::max(t_init, e.t);

    CalibrationReport rep;
    rep.margin = margin;
    const OpResult floor = run_one(base, init, std::max(t_init, t_s + base.cm.window) + settle);
    rep.noise_floor = floor.max_indicator;
    rep.floor_per_dgu = floor.per_dgu;

    std::vector<double> maxima;
    std::vector<double> per = floor.per_dgu;
    for (const auto& op : ops) {
        auto ev = init;
        ev.push_back(op);
        OpResult r = run_one(base, ev, std::max(op.t, t_s + base.cm.window) + settle);
        r.op = op;
        if (!r.excluded) {
            maxima.push_back(r.max_indicator);
            for (std::size_t i = 0; i < per.size(); ++i)
                per[i] = std::max(per[i], r.per_dgu[i]);
        }
        rep.ops.push_back(std::move(r));
    }
    rep.threshold = threshold_from_maxima(maxima, margin, rep.noise_floor);
    for (double p : per)
        rep.per_dgu.push_back(margin * p);
    return rep;
}

} // namespace dcmg
