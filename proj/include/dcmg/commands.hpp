#pragma once

#include "dcmg/scenario.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dcmg {

// Library entry points behind every CLI subcommand. Each returns the process exit code
// and writes human-readable output to `out`, diagnostics to `err`.

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitAbort = 2;

/// Output directory: explicit value, else $DCMG_OUT_DIR, else "dcmg-out".
std::string resolve_out_dir(const std::string& explicit_dir);

struct RunOptions {
    std::string scenario = "paper8";
    std::string attack;                    // builtin set or TOML file, empty: none
    std::optional<std::uint64_t> seed;
    std::optional<Fidelity> fidelity;
    std::optional<double> t_end;
    std::optional<double> threshold;
    bool no_countermeasure = false;
    std::string out_dir;                   // resolved with resolve_out_dir
};

/// Writes trace.csv, events.jsonl and summary.json. Nothing is written on a config error.
int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err);

/// Attacked run and its attack-free twin: trace.csv, twin_trace.csv, events.jsonl, twin.json.
int cmd_twin(const RunOptions& o, std::ostream& out, std::ostream& err);

struct CalibrateOptions {
    std::string scenario = "paper8";
    std::string ops;          // operations file; empty: the scenario's daily operations
    double margin = 1.1;
    bool per_dgu = false;
    std::optional<std::uint64_t> seed;
    std::string json_out;     // optional report file
};

int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err);

struct PredictOptions {
    std::string scenario = "paper8-attack";
    std::string attack;
    bool json = false;
};

int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream& err);

struct DesignOptions {
    std::string scenario = "paper8-attack";
    std::string design;       // design TOML
    std::string out_file;     // attack TOML, empty: stdout
};

int cmd_design_coop(const DesignOptions& o, std::ostream& out, std::ostream& err);

struct RacOptions {
    std::string scenario = "paper8";
    std::vector<double> a_values; // empty: the scenario's a
    std::optional<double> gamma;
    bool json = false;
};

int cmd_check_rac(const RacOptions& o, std::ostream& out, std::ostream& err);

struct PlotOptions {
    std::string trace;
    std::vector<std::string> panels;
    std::string out_file;     // empty: next to the trace as plot.svg
    std::string summary;      // empty: summary.json next to the trace if present
    std::optional<double> threshold;
    std::string title;
};

int cmd_plot(const PlotOptions& o, std::ostream& out, std::ostream& err);

struct BatchOptions {
    std::string file;
    std::string out_dir;
    std::optional<int> workers;
};

/// One subdirectory per [[run]] plus batch.json. Exit 1 if any run had a config error,
/// else 2 if any aborted.
int cmd_batch(const BatchOptions& o, std::ostream& out, std::ostream& err);

} // namespace dcmg
