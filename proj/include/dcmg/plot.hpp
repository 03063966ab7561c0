#pragma once

#include "dcmg/simulator.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcmg {

class PlotError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Panels: voltages, currents (per unit), apvd, indicators, residuals:<i>,<j>, compensation.
struct PlotSpec {
    std::vector<std::string> panels;
    std::vector<double> rated;        // for per-unit currents
    double v_ref = 48;
    std::optional<double> threshold;  // drawn on the indicator panel
    std::string title;
};

/// Static SVG with one stacked panel per entry. Throws PlotError listing the available
/// channels when a panel needs a column the trace lacks.
std::string render_svg(const Trace& tr, const PlotSpec& spec);

} // namespace dcmg
