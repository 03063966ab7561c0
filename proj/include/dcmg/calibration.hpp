#pragma once

#include "dcmg/scenario.hpp"

#include <string>
#include <vector>

namespace dcmg {

struct OpResult {
    Event op;
    double max_indicator = 0;
    std::vector<double> per_dgu;
    bool excluded = false;
    std::string warning;
};

struct CalibrationReport {
    std::vector<OpResult> ops;
    double noise_floor = 0;           // indicator maximum without any operation
    std::vector<double> floor_per_dgu;
    double margin = 1;
    double threshold = 0;             // global
    std::vector<double> per_dgu;      // per-DGU thresholds
};

/// Runs the initialisation sequence of `base` once alone and once with each operation,
/// with alarms disabled, and sets d_bar = margin x the largest indicator seen.
/// `settle` is the simulated time kept after each operation.
CalibrationReport calibrate_threshold(const ScenarioConfig& base, const std::vector<Event>& ops, double margin,
                                      double settle = 4.0);

} // namespace dcmg
