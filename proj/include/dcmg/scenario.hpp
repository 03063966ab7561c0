#pragma once

#include "dcmg/countermeasure.hpp"
#include "dcmg/netgraph.hpp"
#include "dcmg/plant.hpp"
#include "dcmg/zts.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcmg {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Fidelity { Full, Reduced };

enum class EventKind { PlugIn, PlugOut, LoadScale, CommActivate, MtdPerturb };

const char* to_string(EventKind k);

struct Event {
    double t = 0;
    EventKind kind = EventKind::LoadScale;
    std::vector<int> dgus;       // 0-based; empty means all (load scale)
    double factor = 1;           // load scale
    std::optional<double> a_factor;             // MTD; unset means random draw
    std::vector<double> weight_factors;         // MTD; one per edge, or one for all, empty means random
};

struct ScenarioConfig {
    int schema_version = kSchemaVersion;
    std::string name = "custom";

    Topology topology;
    std::vector<DguParams> dgus;
    std::vector<bool> gain_override; // k given explicitly
    NoiseBounds noise;
    double v_ref = 48;
    double k_I = 5;
    Eigen::Vector3d primary_poles{-150, -1000, -3000};

    Fidelity fidelity = Fidelity::Full;
    double dt = 5e-5;
    double t_end = 20;
    std::uint64_t seed = 1;
    double record_dt = 1e-2;

    double uio_pole = -50;
    Eigen::Vector3d uio_h = Eigen::Vector3d::Zero(); // h12, h22, h32
    double dac_uio_pole = -50;
    double dac_uio_floor = 1e-8;

    double dac_a = 100;
    double dac_gamma = 1;
    double mtd_period = 0; // 0: only explicit MTD events
    double mtd_start = 0;

    bool countermeasure = true;
    CountermeasureParams cm;
    bool psi_handoff = true;

    std::vector<Event> events;

    int size() const { return int(dgus.size()); }
    Eigen::VectorXd rated() const;
};

/// Synthesizes missing primary gains, expands periodic MTD, sorts events and checks
/// every invariant. Throws ConfigError.
void finalize(ScenarioConfig& cfg);

/// Built-in scenarios: "paper8" (initialisation plus daily operations) and
/// "paper8-attack" (all units connected at 2 s, no daily operations).
ScenarioConfig builtin_scenario(const std::string& name);
bool is_builtin_scenario(const std::string& name);

/// Scenario from a builtin name or a TOML file path.
ScenarioConfig load_scenario(const std::string& name_or_path);
ScenarioConfig parse_scenario(const std::string& toml_text, const std::string& origin = "<string>");

/// Attack sets of the evaluation ("set1", "set2", "set3") or a TOML file.
std::vector<AttackSpec> builtin_attacks(const std::string& name);
bool is_builtin_attacks(const std::string& name);
std::vector<AttackSpec> load_attacks(const std::string& name_or_path);
std::vector<AttackSpec> parse_attacks(const std::string& toml_text, const std::string& origin = "<string>");
std::string attacks_to_toml(const std::vector<AttackSpec>& specs);

/// Event list files (`schema_version` plus [[event]] tables), e.g. calibration op sets.
std::vector<Event> parse_operations(const std::string& toml_text, int dgus, const std::string& origin = "<string>");
std::vector<Event> load_operations(const std::string& path, int dgus);

/// Cooperative attack design request: fixed inputs plus free links searched along a direction.
struct CoopLinkDesign {
    int i = 0, j = 0; // 0-based receiver, sender
    std::optional<Eigen::Vector2d> input;
    Eigen::Vector2d direction{1, 0};
};

struct CoopDesign {
    double start = 0;
    std::optional<double> knowledge_time;
    std::vector<CoopLinkDesign> links;
};

CoopDesign parse_coop_design(const std::string& toml_text, const std::string& origin = "<string>");
CoopDesign load_coop_design(const std::string& path);

/// Batch file: [[run]] tables executed by a worker pool. Relative paths are resolved
/// against the batch file's directory.
struct BatchRun {
    std::string name;
    std::string scenario;
    std::string attack;
    std::optional<std::uint64_t> seed;
    std::optional<Fidelity> fidelity;
    bool twin = false;
};

struct BatchSpec {
    int workers = 0; // 0: hardware concurrency
    std::vector<BatchRun> runs;
};

BatchSpec parse_batch(const std::string& toml_text, const std::string& origin = "<string>", const std::string& base_dir = "");
BatchSpec load_batch(const std::string& path);

Fidelity parse_fidelity(const std::string& s);

/// The event schedule of the daily operations alone (used by calibration).
std::vector<Event> daily_operations(const ScenarioConfig& cfg);

/// Plant matrices of DGU j with the line coupling of the given connected set.
PlantMatrices<double> plant_of(const ScenarioConfig& cfg, int j, const std::vector<bool>& connected);

/// Attacked-link model for the impact formulas.
LinkModel link_model(const ScenarioConfig& cfg, int i, int j, const std::vector<bool>& connected);

/// Connected set after applying all plug events up to and including time t.
std::vector<bool> connected_at(const ScenarioConfig& cfg, double t);

} // namespace dcmg
