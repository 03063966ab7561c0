#include "dcmg/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace dcmg;

namespace {

// CLI11 wants a plain string; fidelity and seed stay unset unless given
struct RunArgs {
    RunOptions o;
    std::string fidelity;
    std::uint64_t seed = 0;
    double t_end = 0, threshold = 0;
};

void add_run_flags(CLI::App* c, RunArgs& a, bool attack_required)
{
    c->add_option("-s,--scenario", a.o.scenario, "builtin name (paper8, paper8-attack) or TOML file")
        ->capture_default_str();
    auto* at = c->add_option("-a,--attack", a.o.attack, "builtin attack set (set1, set2, set3) or TOML file");
    if (attack_required)
        at->required();
    c->add_option("--seed", a.seed, "noise seed");
    c->add_option("--fidelity", a.fidelity, "full or reduced")->check(CLI::IsMember({"full", "reduced"}));
    c->add_option("--t-end", a.t_end, "simulated time [s]");
    c->add_option("--threshold", a.threshold, "detection threshold [V s]");
    c->add_flag("--no-countermeasure", a.o.no_countermeasure, "disable alarms and compensation");
    c->add_option("-o,--out", a.o.out_dir, "output directory (default $DCMG_OUT_DIR, else dcmg-out)");
}

RunOptions finish(CLI::App* c, RunArgs& a)
{
    if (c->count("--seed"))
        a.o.seed = a.seed;
    if (!a.fidelity.empty())
        a.o.fidelity = parse_fidelity(a.fidelity);
    if (c->count("--t-end"))
        a.o.t_end = a.t_end;
    if (c->count("--threshold"))
        a.o.threshold = a.threshold;
    return a.o;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DC microgrid attack, detection and mitigation toolkit"};
    app.require_subcommand(0, 1);
    bool version = false;
    app.add_flag("--version", version, "print the config schema version");

    RunArgs run_args, twin_args;
    auto* run = app.add_subcommand("run", "simulate a scenario and write trace, events and summary");
    add_run_flags(run, run_args, false);
    auto* twin = app.add_subcommand("twin", "attacked run against an attack-free twin with identical noise");
    add_run_flags(twin, twin_args, true);

    CalibrateOptions cal;
    std::uint64_t cal_seed = 0;
    auto* calibrate = app.add_subcommand("calibrate", "detection threshold from daily operations");
    calibrate->add_option("-s,--scenario", cal.scenario, "scenario")->capture_default_str();
    calibrate->add_option("--ops", cal.ops, "operations TOML (default: the scenario's daily operations)");
    calibrate->add_option("--margin", cal.margin, "threshold = margin x max indicator")->capture_default_str();
    calibrate->add_flag("--per-dgu", cal.per_dgu, "also print per-DGU thresholds");
    calibrate->add_option("--seed", cal_seed, "noise seed");
    calibrate->add_option("--json", cal.json_out, "write the report as JSON");

    PredictOptions pred;
    auto* predict = app.add_subcommand("predict-impact", "closed-form impact of constant attack inputs");
    predict->add_option("-s,--scenario", pred.scenario, "scenario")->capture_default_str();
    predict->add_option("-a,--attack", pred.attack, "attack set or TOML file");
    predict->add_flag("--json", pred.json, "JSON output");

    DesignOptions des;
    auto* design = app.add_subcommand("design-coop", "solve free inputs of a cooperative attack");
    design->add_option("-s,--scenario", des.scenario, "scenario")->capture_default_str();
    design->add_option("-d,--design", des.design, "design TOML")->required();
    design->add_option("-o,--out", des.out_file, "attack TOML to write (default: stdout)");

    RacOptions rac;
    auto* check = app.add_subcommand("check-rac", "robust average consensus certificate");
    check->add_option("-s,--scenario", rac.scenario, "scenario")->capture_default_str();
    check->add_option("--a", rac.a_values, "DAC constant(s) to certify");
    double gamma = 0;
    check->add_option("--gamma", gamma, "DAC gain");
    check->add_flag("--json", rac.json, "JSON output");

    PlotOptions plt;
    double plot_threshold = 0;
    auto* plot = app.add_subcommand("plot", "SVG figure from a trace");
    plot->add_option("-t,--trace", plt.trace, "trace CSV")->required();
    plot->add_option("-p,--panels", plt.panels,
                     "voltages, currents, apvd, indicators, residuals:<i>,<j>, compensation")
        ->delimiter(' ');
    plot->add_option("-o,--out", plt.out_file, "SVG file (default: plot.svg next to the trace)");
    plot->add_option("--summary", plt.summary, "summary JSON for rated currents and threshold");
    plot->add_option("--threshold", plot_threshold, "threshold line on the indicator panel");
    plot->add_option("--title", plt.title, "figure title");

    BatchOptions bat;
    int workers = 0;
    auto* batch = app.add_subcommand("batch", "run a batch file on a worker pool");
    batch->add_option("file", bat.file, "batch TOML")->required();
    batch->add_option("-o,--out", bat.out_dir, "output directory");
    batch->add_option("-j,--workers", workers, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    if (version) {
        std::cout << kSchemaVersion << "\n";
        return 0;
    }
    try {
        if (*run)
            return cmd_run(finish(run, run_args), std::cout, std::cerr);
        if (*twin)
            return cmd_twin(finish(twin, twin_args), std::cout, std::cerr);
        if (*calibrate) {
            if (calibrate->count("--seed"))
                cal.seed = cal_seed;
            return cmd_calibrate(cal, std::cout, std::cerr);
        }
        if (*predict)
            return cmd_predict(pred, std::cout, std::cerr);
        if (*design)
            return cmd_design_coop(des, std::cout, std::cerr);
        if (*check) {
            if (check->count("--gamma"))
                rac.gamma = gamma;
            return cmd_check_rac(rac, std::cout, std::cerr);
        }
        if (*plot) {
            if (plot->count("--threshold"))
                plt.threshold = plot_threshold;
            return cmd_plot(plt, std::cout, std::cerr);
        }
        if (*batch) {
            if (batch->count("--workers"))
                bat.workers = workers;
            return cmd_batch(bat, std::cout, std::cerr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    std::cout << app.help();
    return 0;
}
