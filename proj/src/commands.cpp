#include "dcmg/commands.hpp"

#include "dcmg/calibration.hpp"
#include "dcmg/plot.hpp"
#include "dcmg/report.hpp"
#include "dcmg/simulator.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dcmg {

namespace {

std::string fmtg(double v, int digits = 6)
{
    char b[40];
    std::snprintf(b, sizeof b, "%.*g", digits, v);
    return b;
}

std::string link_name(int i, int j) { return "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")"; }

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream os(p, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + p.string() + "'");
    os << s;
}

struct Prepared {
    ScenarioConfig cfg;
    std::vector<AttackSpec> attacks;
};

Prepared prepare(const RunOptions& o)
{
    Prepared p{load_scenario(o.scenario), {}};
    if (o.seed)
        p.cfg.seed = *o.seed;
    if (o.fidelity)
        p.cfg.fidelity = *o.fidelity;
    if (o.t_end)
        p.cfg.t_end = *o.t_end;
    if (o.threshold)
        p.cfg.cm.threshold = *o.threshold;
    if (o.no_countermeasure)
        p.cfg.countermeasure = false;
    finalize(p.cfg);
    if (!o.attack.empty())
        p.attacks = load_attacks(o.attack);
    return p;
}

fs::path make_out_dir(const std::string& dir)
{
    const fs::path p = resolve_out_dir(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec)
        throw ConfigError("cannot create output directory '" + p.string() + "': " + ec.message());
    return p;
}

// output-channel attacks evaluated at each attacker's knowledge instant; ids are remapped
// to ranks in the connected set so the average runs over connected units only
struct LinkPrediction {
    std::vector<LinkModel> models;
    std::vector<Eigen::Vector2d> inputs;
    std::vector<std::string> notes;
    std::vector<int> source; // index into the attack list
    int N = 0;
};

LinkPrediction link_predictions(const ScenarioConfig& cfg, const std::vector<AttackSpec>& attacks)
{
    LinkPrediction lp;
    std::vector<bool> conn_ref;
    for (std::size_t k = 0; k < attacks.size(); ++k) {
        const AttackSpec& a = attacks[k];
        if (a.i < 0 || a.j < 0 || a.i >= cfg.size() || a.j >= cfg.size() || cfg.topology.weight(a.i, a.j) == 0)
            throw ConfigError("attack on " + link_name(a.i, a.j) + ": not a line of the scenario");
        if (a.channel != AttackChannel::Output)
            continue;
        const double tk = a.knowledge_time.value_or(a.start);
        const std::vector<bool> conn = connected_at(cfg, tk);
        if (conn_ref.empty())
            conn_ref = conn;
        LinkModel m = link_model(cfg, a.i, a.j, conn);
        std::vector<int> rank(cfg.size(), -1);
        int r = 0;
        for (int i = 0; i < cfg.size(); ++i)
            if (conn_ref[i])
                rank[i] = r++;
        lp.N = r;
        if (rank[a.i] < 0)
            throw ConfigError("attack on " + link_name(a.i, a.j) + ": receiver not connected at the attack instant");
        m.i = rank[a.i];
        lp.models.push_back(m);
        lp.inputs.push_back(a.fake_input.constant_part());
        lp.notes.push_back(a.fake_input.is_constant() ? "" : "sinusoidal terms excluded");
        lp.source.push_back(int(k));
    }
    if (lp.N == 0) {
        const auto conn = connected_at(cfg, cfg.t_end);
        lp.N = int(std::count(conn.begin(), conn.end(), true));
    }
    return lp;
}

json prediction_json(const ImpactPrediction& p, double v_ref)
{
    return {{"slope", p.slope},
            {"offset", p.offset},
            {"post_mitigation_apv", p.post_mitigation},
            {"post_mitigation_apvd", p.post_mitigation - v_ref},
            {"coop_residual", p.coop_residual},
            {"sharing_violated", p.sharing_violated},
            {"classification", to_string(p.classification)}};
}

} // namespace

std::string resolve_out_dir(const std::string& explicit_dir)
{
    if (!explicit_dir.empty())
        return explicit_dir;
    if (const char* env = std::getenv("DCMG_OUT_DIR"); env && *env)
        return env;
    return "dcmg-out";
}

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err)
{
    std::optional<Simulation> sim;
    fs::path dir;
    try {
        Prepared p = prepare(o);
        sim.emplace(p.cfg, p.attacks);
        dir = make_out_dir(o.out_dir);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    bool aborted = false;
    std::string reason;
    try {
        sim->run();
    } catch (const SimulationAborted& e) {
        aborted = true;
        reason = e.what();
        err << "simulation aborted: " << reason << "\n";
    }
    const json summary = summarize(*sim, aborted, reason);
    try {
        write_trace_csv(sim->trace(), (dir / "trace.csv").string());
        write_events_jsonl(sim->events(), (dir / "events.jsonl").string());
        write_text(dir / "summary.json", summary.dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "output error: " << e.what() << "\n";
        return kExitConfig;
    }
    out << "scenario " << sim->config().name << ", seed " << sim->config().seed << ", t = " << fmtg(sim->time())
        << " s\n";
    out << "steady APVD " << fmtg(summary["steady_apvd"].get<double>()) << " V, slope "
        << fmtg(summary["trace_metrics"]["apvd_slope"].get<double>()) << " V/s, classification "
        << summary["classification"].get<std::string>() << "\n";
    out << "alarms " << summary["alarms"].size() << ", residual crossings ";
    if (summary["residuals"]["monitored"].get<bool>())
        out << summary["residuals"]["crossings"].get<long>() << "\n";
    else
        out << "not monitored (reduced model)\n";
    out << "outputs in " << dir.string() << "\n";
    return aborted ? kExitAbort : kExitOk;
}

int cmd_twin(const RunOptions& o, std::ostream& out, std::ostream& err)
{
    std::optional<Prepared> p;
    fs::path dir;
    try {
        p = prepare(o);
        Simulation probe(p->cfg, p->attacks); // validates the attacks
        dir = make_out_dir(o.out_dir);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    Simulation a(p->cfg, p->attacks), b(p->cfg);
    TwinResult r;
    try {
        r = twin_run(p->cfg, p->attacks, &a, &b);
    } catch (const SimulationAborted& e) {
        err << "simulation aborted: " << e.what() << "\n";
        return kExitAbort;
    }
    const double limit = 10 * kIntegratorTolerance;
    const json j = {{"schema_version", kSchemaVersion},
                    {"scenario", p->cfg.name},
                    {"seed", p->cfg.seed},
                    {"max_residual_diff", r.max_residual_diff},
                    {"max_dac_residual_diff", r.max_dac_residual_diff},
                    {"max_psi_diff", r.max_psi_diff},
                    {"attacked_crossings", r.attacked_crossings},
                    {"twin_crossings", r.twin_crossings},
                    {"limit", limit},
                    {"stealthy", r.max_residual_diff < limit && r.max_dac_residual_diff < limit &&
                                     r.attacked_crossings == 0}};
    try {
        write_trace_csv(a.trace(), (dir / "trace.csv").string());
        write_trace_csv(b.trace(), (dir / "twin_trace.csv").string());
        write_events_jsonl(a.events(), (dir / "events.jsonl").string());
        write_text(dir / "twin.json", j.dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "output error: " << e.what() << "\n";
        return kExitConfig;
    }
    out << "max residual difference " << fmtg(r.max_residual_diff) << " (DAC " << fmtg(r.max_dac_residual_diff)
        << "), limit " << fmtg(limit) << "\n";
    out << "max psi difference " << fmtg(r.max_psi_diff) << "\n";
    out << "threshold crossings: attacked " << r.attacked_crossings << ", twin " << r.twin_crossings << "\n";
    out << (j["stealthy"].get<bool>() ? "stealthy" : "not stealthy") << "; outputs in " << dir.string() << "\n";
    return kExitOk;
}

int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err)
{
    ScenarioConfig cfg;
    std::vector<Event> ops;
    try {
        cfg = load_scenario(o.scenario);
        if (o.seed)
            cfg.seed = *o.seed;
        ops = o.ops.empty() ? daily_operations(cfg) : load_operations(o.ops, cfg.size());
        if (!(o.margin > 0))
            throw ConfigError("margin must be positive");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    CalibrationReport rep;
    try {
        rep = calibrate_threshold(cfg, ops, o.margin);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    json jops = json::array();
    out << "noise floor " << fmtg(rep.noise_floor) << " V s\n";
    for (const auto& r : rep.ops) {
        std::string what = to_string(r.op.kind);
        for (int d : r.op.dgus)
            what += " " + std::to_string(d + 1);
        if (r.op.kind == EventKind::LoadScale)
            what += " x" + fmtg(r.op.factor);
        out << "t = " << fmtg(r.op.t) << "  " << what << "  max indicator ";
        if (r.excluded) {
            out << "excluded (" << r.warning << ")\n";
            err << "warning: operation at t = " << fmtg(r.op.t) << " excluded: " << r.warning << "\n";
        } else {
            out << fmtg(r.max_indicator) << " V s\n";
        }
        json jr = {{"t", r.op.t}, {"op", what}, {"max_indicator", r.max_indicator}, {"excluded", r.excluded}};
        if (r.excluded)
            jr["warning"] = r.warning;
        jops.push_back(jr);
    }
    out << "threshold " << fmtg(rep.threshold) << " V s (margin " << fmtg(o.margin) << ")\n";
    if (o.per_dgu)
        for (std::size_t i = 0; i < rep.per_dgu.size(); ++i)
            out << "  DGU " << i + 1 << ": " << fmtg(rep.per_dgu[i]) << " V s\n";
    if (!o.json_out.empty()) {
        const json j = {{"schema_version", kSchemaVersion}, {"scenario", cfg.name},   {"margin", o.margin},
                        {"noise_floor", rep.noise_floor},   {"ops", jops},            {"threshold", rep.threshold},
                        {"per_dgu", rep.per_dgu},           {"floor_per_dgu", rep.floor_per_dgu}};
        try {
            write_text(o.json_out, j.dump(2) + "\n");
        } catch (const std::exception& e) {
            err << "output error: " << e.what() << "\n";
            return kExitConfig;
        }
    }
    return kExitOk;
}

int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream& err)
{
    ScenarioConfig cfg;
    std::vector<AttackSpec> attacks;
    LinkPrediction lp;
    try {
        cfg = load_scenario(o.scenario);
        if (!o.attack.empty())
            attacks = load_attacks(o.attack);
        lp = link_predictions(cfg, attacks);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    const ImpactPrediction total = predict_impact(lp.models, lp.inputs, cfg.k_I, lp.N, cfg.cm.k_ci, cfg.v_ref);
    json jl = json::array();
    for (std::size_t k = 0; k < lp.models.size(); ++k) {
        const AttackSpec& a = attacks[lp.source[k]];
        const ImpactPrediction p = predict_single_impact(lp.models[k], lp.inputs[k], cfg.k_I, lp.N);
        json e = {{"link", {a.i + 1, a.j + 1}},
                  {"input", {lp.inputs[k](0), lp.inputs[k](1)}},
                  {"slope", p.slope},
                  {"offset", p.offset}};
        if (!lp.notes[k].empty())
            e["note"] = lp.notes[k];
        jl.push_back(e);
    }
    for (const auto& a : attacks)
        if (a.channel != AttackChannel::Output)
            jl.push_back({{"link", {a.i + 1, a.j + 1}}, {"note", "DAC-channel injection, no closed form"}});
    if (o.json) {
        json j = prediction_json(total, cfg.v_ref);
        j["links"] = jl;
        j["dgus"] = lp.N;
        out << j.dump(2) << "\n";
        return kExitOk;
    }
    out << "link      input              slope [V/s]     offset [V]\n";
    for (const auto& e : jl) {
        char line[160];
        const std::string ln = "(" + std::to_string(e["link"][0].get<int>()) + "," +
                               std::to_string(e["link"][1].get<int>()) + ")";
        if (!e.contains("slope")) {
            std::snprintf(line, sizeof line, "%-9s %s\n", ln.c_str(), e["note"].get<std::string>().c_str());
        } else {
            const std::string in = "[" + fmtg(e["input"][0].get<double>()) + ", " + fmtg(e["input"][1].get<double>()) + "]";
            std::snprintf(line, sizeof line, "%-9s %-18s %-15s %-15s%s\n", ln.c_str(), in.c_str(),
                          fmtg(e["slope"].get<double>()).c_str(), fmtg(e["offset"].get<double>()).c_str(),
                          e.contains("note") ? ("  " + e["note"].get<std::string>()).c_str() : "");
        }
        out << line;
    }
    out << "total slope " << fmtg(total.slope) << " V/s, offset " << fmtg(total.offset) << " V\n";
    out << "post-mitigation APVD " << fmtg(total.post_mitigation - cfg.v_ref) << " V (k_ci = " << fmtg(cfg.cm.k_ci)
        << ")\n";
    out << "cooperative residual " << fmtg(total.coop_residual, 3) << "\n";
    out << "current sharing " << (total.sharing_violated ? "violated" : "kept") << "\n";
    out << "classification " << to_string(total.classification) << "\n";
    return kExitOk;
}

int cmd_design_coop(const DesignOptions& o, std::ostream& out, std::ostream& err)
{
    ScenarioConfig cfg;
    CoopDesign d;
    std::vector<AttackSpec> specs;
    try {
        cfg = load_scenario(o.scenario);
        d = load_coop_design(o.design);
        std::vector<LinkModel> models;
        std::vector<std::optional<Eigen::Vector2d>> fixed;
        std::vector<Eigen::Vector2d> dirs;
        const double tk = d.knowledge_time.value_or(d.start);
        const auto conn = connected_at(cfg, tk);
        for (const auto& l : d.links) {
            if (l.i < 0 || l.j < 0 || l.i >= cfg.size() || l.j >= cfg.size() || cfg.topology.weight(l.i, l.j) == 0)
                throw ConfigError("design link " + link_name(l.i, l.j) + " is not a line of the scenario");
            models.push_back(link_model(cfg, l.i, l.j, conn));
            fixed.push_back(l.input);
            dirs.push_back(l.direction);
        }
        std::vector<Eigen::Vector2d> inputs;
        try {
            inputs = design_cooperative(models, fixed, dirs, cfg.k_I);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        for (std::size_t k = 0; k < d.links.size(); ++k) {
            AttackSpec a;
            a.i = d.links[k].i;
            a.j = d.links[k].j;
            a.start = d.start;
            a.knowledge_time = d.knowledge_time;
            a.fake_input = Waveform::constant(inputs[k]);
            a.label = "coop";
            specs.push_back(a);
        }
        Simulation probe(cfg, specs); // start time and links valid for this scenario
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    const LinkPrediction lp = link_predictions(cfg, specs);
    const ImpactPrediction p = predict_impact(lp.models, lp.inputs, cfg.k_I, lp.N, cfg.cm.k_ci, cfg.v_ref);
    std::ostream& report = o.out_file.empty() ? err : out;
    for (const auto& a : specs)
        report << "link " << link_name(a.i, a.j) << " input [" << fmtg(a.fake_input.constant_part()(0), 9) << ", "
               << fmtg(a.fake_input.constant_part()(1), 9) << "]\n";
    report << "cooperative residual " << fmtg(p.coop_residual, 3) << ", predicted offset " << fmtg(p.offset)
           << " V, classification " << to_string(p.classification) << "\n";
    const std::string toml = attacks_to_toml(specs);
    if (o.out_file.empty()) {
        out << toml;
    } else {
        try {
            write_text(o.out_file, toml);
        } catch (const std::exception& e) {
            err << "output error: " << e.what() << "\n";
            return kExitConfig;
        }
        out << "attack file written to " << o.out_file << "\n";
    }
    return kExitOk;
}

int cmd_check_rac(const RacOptions& o, std::ostream& out, std::ostream& err)
{
    ScenarioConfig cfg;
    try {
        cfg = load_scenario(o.scenario);
        for (double a : o.a_values)
            if (!(a > 0))
                throw ConfigError("a must be positive");
        if (o.gamma && !(*o.gamma > 0))
            throw ConfigError("gamma must be positive");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    const std::vector<double> as = o.a_values.empty() ? std::vector<double>{cfg.dac_a} : o.a_values;
    const double gamma = o.gamma.value_or(cfg.dac_gamma);
    const std::vector<double> lam = laplacian_modes(laplacian<double>(cfg.topology, Weight::Dac));
    bool all = true;
    json jall = json::array();
    for (double a : as) {
        const RacCertificate c = certify_rac(dac_realization<double>(a, gamma), lam);
        all = all && c.certified;
        json jp = json::array();
        for (const auto& p : c.points)
            jp.push_back({{"lambda", p.lambda},
                          {"discriminant", p.discriminant},
                          {"real_root", p.real_root},
                          {"analytic_stable", p.analytic_stable},
                          {"numeric_stable", p.numeric_stable},
                          {"root_mismatch", p.root_mismatch}});
        jall.push_back({{"a", a},
                        {"gamma", gamma},
                        {"structure_ok", c.structure_ok},
                        {"methods_agree", c.methods_agree},
                        {"certified", c.certified},
                        {"modes", jp}});
        if (o.json)
            continue;
        out << "a = " << fmtg(a) << ", gamma = " << fmtg(gamma) << ": structure " << (c.structure_ok ? "ok" : "FAILED")
            << ", methods " << (c.methods_agree ? "agree" : "DISAGREE") << ", "
            << (c.certified ? "certified" : "NOT certified") << "\n";
        out << "  lambda        discriminant   real root      analytic  numeric  mismatch\n";
        for (const auto& p : c.points) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-13.6g %-14.6g %-14.6g %-9s %-8s %.2g\n", p.lambda, p.discriminant,
                          p.real_root, p.analytic_stable ? "stable" : "unstable",
                          p.numeric_stable ? "stable" : "unstable", p.root_mismatch);
            out << line;
        }
    }
    if (o.json)
        out << json({{"scenario", cfg.name}, {"certificates", jall}}).dump(2) << "\n";
    return all ? kExitOk : kExitAbort;
}

int cmd_plot(const PlotOptions& o, std::ostream& out, std::ostream& err)
{
    try {
        const Trace tr = read_trace_csv(o.trace);
        PlotSpec spec;
        spec.panels = o.panels;
        spec.title = o.title;
        fs::path summary = o.summary.empty() ? fs::path(o.trace).parent_path() / "summary.json" : fs::path(o.summary);
        if (!o.summary.empty() || fs::exists(summary)) {
            std::ifstream in(summary);
            if (!in)
                throw ConfigError("cannot open summary '" + summary.string() + "'");
            const json j = json::parse(in);
            spec.v_ref = j.value("v_ref", 48.0);
            if (j.contains("rated_current"))
                spec.rated = j["rated_current"].get<std::vector<double>>();
            if (j.contains("threshold"))
                spec.threshold = j["threshold"].get<double>();
        }
        if (o.threshold)
            spec.threshold = o.threshold;
        const std::string svg = render_svg(tr, spec);
        const fs::path dst = o.out_file.empty() ? fs::path(o.trace).parent_path() / "plot.svg" : fs::path(o.out_file);
        write_text(dst, svg);
        out << "wrote " << dst.string() << "\n";
    } catch (const std::exception& e) {
        err << "plot error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

int cmd_batch(const BatchOptions& o, std::ostream& out, std::ostream& err)
{
    BatchSpec spec;
    fs::path dir;
    try {
        spec = load_batch(o.file);
        if (o.workers && *o.workers < 1)
            throw ConfigError("workers must be positive");
        dir = make_out_dir(o.out_dir);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    int workers = o.workers.value_or(spec.workers);
    if (workers <= 0)
        workers = int(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min<int>(workers, int(spec.runs.size()));

    struct Outcome {
        int code = 0;
        std::string log, errors;
    };
    std::vector<Outcome> res(spec.runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < spec.runs.size();) {
            const BatchRun& r = spec.runs[k];
            RunOptions ro;
            ro.scenario = r.scenario;
            ro.attack = r.attack;
            ro.seed = r.seed;
            ro.fidelity = r.fidelity;
            ro.out_dir = (dir / r.name).string();
            std::ostringstream lo, le;
            res[k].code = r.twin ? cmd_twin(ro, lo, le) : cmd_run(ro, lo, le);
            res[k].log = lo.str();
            res[k].errors = le.str();
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back(worker);
    for (auto& t : pool)
        t.join();

    json j = json::array();
    int code = kExitOk;
    for (std::size_t k = 0; k < res.size(); ++k) {
        const char* status = res[k].code == kExitOk ? "ok" : res[k].code == kExitAbort ? "aborted" : "config_error";
        out << spec.runs[k].name << ": " << status << "\n";
        if (!res[k].errors.empty())
            err << spec.runs[k].name << ": " << res[k].errors;
        j.push_back({{"name", spec.runs[k].name}, {"exit", res[k].code}, {"status", status}, {"log", res[k].log},
                     {"errors", res[k].errors}});
        if (res[k].code == kExitConfig)
            code = kExitConfig;
        else if (res[k].code == kExitAbort && code == kExitOk)
            code = kExitAbort;
    }
    try {
        write_text(dir / "batch.json", json({{"schema_version", kSchemaVersion}, {"runs", j}}).dump(2) + "\n");
    } catch (const std::exception& e) {
        err << "output error: " << e.what() << "\n";
        return kExitConfig;
    }
    return code;
}

} // namespace dcmg
