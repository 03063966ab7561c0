#include "dcmg/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcmg {

void write_trace_csv(const Trace& tr, std::ostream& os)
{
    for (std::size_t c = 0; c < tr.columns.size(); ++c)
        os << (c ? "," : "") << tr.columns[c];
    os << '\n';
    char buf[32];
    std::string line;
    for (const auto& row : tr.rows) {
        line.clear();
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c)
                line += ',';
            // no negative zero in the file
            std::snprintf(buf, sizeof buf, "%.9g", row[c] == 0 ? 0.0 : row[c]);
            line += buf;
        }
        line += '\n';
        os << line;
    }
}

void write_trace_csv(const Trace& tr, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    write_trace_csv(tr, os);
}

Trace read_trace_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open trace '" + path + "'");
    Trace tr;
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("trace '" + path + "' has no header");
    std::stringstream hs(line);
    for (std::string c; std::getline(hs, c, ',');)
        tr.columns.push_back(c);
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<double> row;
        row.reserve(tr.columns.size());
        const char* p = line.c_str();
        while (*p) {
            char* end = nullptr;
            row.push_back(std::strtod(p, &end));
            if (end == p)
                throw std::runtime_error("trace '" + path + "': malformed number");
            p = end;
            if (*p == ',')
                ++p;
        }
        if (row.size() != tr.columns.size())
            throw std::runtime_error("trace '" + path + "': row width does not match the header");
        tr.rows.push_back(std::move(row));
    }
    return tr;
}

nlohmann::json event_json(const LogEvent& e)
{
    nlohmann::json j;
    j["t"] = e.t;
    j["dgu"] = e.dgu >= 0 ? nlohmann::json(e.dgu + 1) : nlohmann::json(nullptr);
    j["event"] = e.event;
    j["transition"] = e.transition.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.transition);
    if (e.peer >= 0)
        j["peer"] = e.peer + 1;
    if (e.value != 0)
        j["value"] = e.value;
    return j;
}

void write_events_jsonl(const std::vector<LogEvent>& ev, const std::string& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path + "'");
    for (const auto& e : ev)
        os << event_json(e).dump() << '\n';
}

double trace_slope(const Trace& tr, const std::string& column, double t0, double t1)
{
    const int c = tr.column(column);
    if (c < 0)
        throw std::out_of_range("no trace column '" + column + "'");
    double n = 0, st = 0, sv = 0, stt = 0, stv = 0;
    for (const auto& r : tr.rows) {
        if (r[0] < t0 - 1e-9 || r[0] > t1 + 1e-9)
            continue;
        n += 1;
        st += r[0];
        sv += r[c];
        stt += r[0] * r[0];
        stv += r[0] * r[c];
    }
    const double den = n * stt - st * st;
    return n >= 2 && den != 0 ? (n * stv - st * sv) / den : 0.0;
}

TraceMetrics trace_metrics(const Trace& tr, double v_ref, const std::vector<bool>& connected,
                           const std::vector<double>& rated)
{
    TraceMetrics m;
    const int N = int(rated.size());
    m.max_indicator.assign(N, 0.0);
    if (tr.rows.empty())
        return m;
    const double t_end = tr.rows.back()[0];

    double s = 0;
    int n = 0;
    for (const auto& r : tr.rows)
        if (r[0] >= t_end - 1 - 1e-9) {
            s += r[1];
            ++n;
        }
    m.final_apv = s / n;
    m.steady_apvd = m.final_apv - v_ref;
    m.slope_from = std::max(0.0, t_end - 4);
    m.slope_to = t_end;
    m.apvd_slope = trace_slope(tr, "vavg", m.slope_from, m.slope_to);

    const auto& last = tr.rows.back();
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < N; ++i) {
        if (!connected[i])
            continue;
        const double pu = last[tr.column("I_" + std::to_string(i + 1))] / rated[i];
        lo = std::min(lo, pu);
        hi = std::max(hi, pu);
    }
    m.current_spread = hi >= lo ? hi - lo : 0.0;

    for (int i = 0; i < N; ++i) {
        const int c = tr.column("d_" + std::to_string(i + 1));
        for (const auto& r : tr.rows)
            m.max_indicator[i] = std::max(m.max_indicator[i], r[c]);
    }
    for (std::size_t c = 0; c < tr.columns.size(); ++c) {
        if (tr.columns[c].rfind("r_", 0) != 0)
            continue;
        const int cb = tr.column("rbar_" + tr.columns[c].substr(2));
        for (const auto& r : tr.rows)
            if (r[cb] > 0)
                m.max_residual_ratio = std::max(m.max_residual_ratio, std::abs(r[c]) / r[cb]);
    }
    if (std::abs(m.apvd_slope) > 1e-3)
        m.classification = "ramp";
    else if (std::abs(m.steady_apvd) > 1e-3)
        m.classification = "constant";
    return m;
}

nlohmann::json summarize(const Simulation& sim, bool aborted, const std::string& abort_reason)
{
    using nlohmann::json;
    const ScenarioConfig& cfg = sim.config();
    json j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = cfg.name;
    j["seed"] = cfg.seed;
    j["fidelity"] = cfg.fidelity == Fidelity::Full ? "full" : "reduced";
    j["dt"] = cfg.dt;
    j["t_end"] = cfg.t_end;
    j["t_reached"] = sim.time();
    j["v_ref"] = cfg.v_ref;
    j["aborted"] = aborted;
    if (aborted)
        j["abort_reason"] = abort_reason;
    j["threshold"] = cfg.cm.threshold;
    j["countermeasure"] = cfg.countermeasure;

    std::vector<int> conn;
    std::vector<double> rated;
    for (int i = 0; i < sim.size(); ++i) {
        if (sim.connected()[i])
            conn.push_back(i + 1);
        rated.push_back(cfg.dgus[i].I_rated);
    }
    j["connected"] = conn;
    j["rated_current"] = rated;

    const TraceMetrics m = trace_metrics(sim.trace(), cfg.v_ref, sim.connected(), rated);
    json tm;
    tm["final_apv"] = m.final_apv;
    tm["steady_apvd"] = m.steady_apvd;
    tm["apvd_slope"] = m.apvd_slope;
    tm["slope_window"] = {m.slope_from, m.slope_to};
    tm["current_spread"] = m.current_spread;
    tm["max_residual_ratio"] = m.max_residual_ratio;
    tm["max_indicator"] = m.max_indicator;
    tm["classification"] = m.classification;
    j["trace_metrics"] = tm;
    j["classification"] = m.classification;
    j["steady_apvd"] = m.steady_apvd;

    json alarms = json::array(), freezes = json::array(), excl = json::array();
    for (const auto& e : sim.events()) {
        if (e.event == "alarm")
            alarms.push_back({{"dgu", e.dgu + 1}, {"t", e.t}});
        else if (e.event == "freeze")
            freezes.push_back({{"dgu", e.dgu + 1}, {"t", e.t}});
        else if (e.event == "dac_exclusion")
            excl.push_back({{"dgu", e.dgu + 1}, {"peer", e.peer + 1}, {"t", e.t}});
    }
    j["alarms"] = alarms;
    j["freezes"] = freezes;
    j["dac_exclusions"] = excl;

    long crossings = 0;
    double max_ratio = 0;
    json first = nullptr;
    for (const auto& s : sim.link_stats()) {
        crossings += s.crossings;
        max_ratio = std::max(max_ratio, s.max_ratio);
        if (s.first_crossing && (first.is_null() || *s.first_crossing < first.get<double>()))
            first = *s.first_crossing;
    }
    j["residuals"] = {{"crossings", crossings},
                      {"max_ratio", max_ratio},
                      {"first_crossing", first},
                      {"monitored", sim.config().fidelity == Fidelity::Full}};
    std::vector<double> maxd;
    for (int i = 0; i < sim.size(); ++i)
        maxd.push_back(sim.max_indicator(i));
    j["max_indicator"] = maxd;
    return j;
}

} // namespace dcmg
