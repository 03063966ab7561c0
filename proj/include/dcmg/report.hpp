#pragma once

#include "dcmg/simulator.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace dcmg {

/// CSV with a header row and 9 significant digits.
void write_trace_csv(const Trace& tr, std::ostream& os);
void write_trace_csv(const Trace& tr, const std::string& path);
Trace read_trace_csv(const std::string& path);

/// JSON-lines event log; ids are written 1-based.
nlohmann::json event_json(const LogEvent& e);
void write_events_jsonl(const std::vector<LogEvent>& ev, const std::string& path);

/// Metrics recomputable from the trace alone (the round-trip set).
struct TraceMetrics {
    double final_apv = 0;     // mean vavg over the last second
    double steady_apvd = 0;   // final_apv - v_ref
    double apvd_slope = 0;    // least-squares slope of vavg over the last four seconds
    double slope_from = 0, slope_to = 0;
    double current_spread = 0; // per-unit current spread of the connected units, last row
    double max_residual_ratio = 0;
    std::vector<double> max_indicator; // per DGU
    std::string classification = "none";
};

TraceMetrics trace_metrics(const Trace& tr, double v_ref, const std::vector<bool>& connected,
                           const std::vector<double>& rated);

/// Least-squares slope of vavg over [t0, t1] from a trace.
double trace_slope(const Trace& tr, const std::string& column, double t0, double t1);

nlohmann::json summarize(const Simulation& sim, bool aborted = false, const std::string& abort_reason = "");

} // namespace dcmg
