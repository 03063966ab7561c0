#include "dcmg/scenario.hpp"

#include <toml.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace dcmg {

const char* to_string(EventKind k)
{
    switch (k) {
    case EventKind::PlugIn: return "plug_in";
    case EventKind::PlugOut: return "plug_out";
    case EventKind::LoadScale: return "load_scale";
    case EventKind::CommActivate: return "comm_activate";
    case EventKind::MtdPerturb: return "mtd";
    }
    return "?";
}

Eigen::VectorXd ScenarioConfig::rated() const
{
    Eigen::VectorXd r(size());
    for (int i = 0; i < size(); ++i)
        r(i) = dgus[i].I_rated;
    return r;
}

namespace {

struct Paper8Dgu {
    double R, L, C, IL, Is;
};

constexpr Paper8Dgu kPaper8Dgus[8] = {
    {0.2, 1.8e-3, 2.2e-3, 10.0, 20.0},  {0.4, 2.0e-3, 1.7e-3, 10.0, 20.0},
    {0.3, 2.2e-3, 1.9e-3, 15.75, 30.0}, {0.6, 2.5e-3, 2.4e-3, 9.0, 20.0},
    {0.5, 3.0e-3, 2.7e-3, 14.0, 20.0},  {0.4, 1.6e-3, 3.0e-3, 21.0, 30.0},
    {0.2, 1.4e-3, 2.1e-3, 16.25, 25.0}, {0.4, 1.2e-3, 1.6e-3, 18.75, 25.0},
};

struct Paper8Line {
    int i, j;
    double R;
};

constexpr Paper8Line kPaper8Lines[12] = {
    {1, 2, 0.05}, {1, 6, 0.10}, {2, 3, 0.07}, {3, 4, 0.09}, {3, 8, 0.12}, {4, 5, 0.14},
    {4, 8, 0.20}, {5, 6, 0.25}, {5, 7, 0.06}, {6, 7, 0.10}, {1, 7, 0.15}, {8, 7, 0.17},
};

ScenarioConfig paper8_base()
{
    ScenarioConfig c;
    c.topology = Topology(8);
    for (const auto& d : kPaper8Dgus) {
        DguParams p;
        p.R = d.R;
        p.L = d.L;
        p.C = d.C;
        p.I_load = d.IL;
        p.I_rated = d.Is;
        c.dgus.push_back(p);
    }
    c.gain_override.assign(8, false);
    for (const auto& l : kPaper8Lines)
        c.topology.add_edge(l.i - 1, l.j - 1, 1.0 / l.R, 1.0 / l.R);
    c.noise.rho << 0.001, 0.003, 0;
    c.noise.omega << 0.001, 0.003, 0;
    // `dcmg calibrate --scenario paper8` (daily operations, margin 1.1, seed 1)
    c.cm.threshold = 0.0258;
    return c;
}

Event plug(double t, EventKind k, std::vector<int> ids)
{
    Event e;
    e.t = t;
    e.kind = k;
    e.dgus = std::move(ids);
    return e;
}

Event comm(double t)
{
    Event e;
    e.t = t;
    e.kind = EventKind::CommActivate;
    return e;
}

Event load(double t, double f)
{
    Event e;
    e.t = t;
    e.kind = EventKind::LoadScale;
    e.factor = f;
    return e;
}

// ---- TOML helpers --------------------------------------------------------------

[[noreturn]] void fail(const std::string& where, const std::string& what)
{
    throw ConfigError(where + ": " + what);
}

void check_keys(const toml::table& t, std::initializer_list<const char*> allowed, const std::string& where)
{
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : t) {
        (void)v;
        if (!ok.count(std::string(k.str())))
            fail(where, "unknown key '" + std::string(k.str()) + "'");
    }
}

double get_double(const toml::table& t, const char* key, const std::string& where)
{
    const auto v = t[key].value<double>();
    if (!v)
        fail(where, std::string("'") + key + "' must be a number");
    return *v;
}

std::optional<double> opt_double(const toml::table& t, const char* key, const std::string& where)
{
    if (!t.contains(key))
        return std::nullopt;
    return get_double(t, key, where);
}

Eigen::VectorXd get_vector(const toml::node& n, const std::string& where)
{
    const toml::array* a = n.as_array();
    if (!a)
        fail(where, "expected an array of numbers");
    Eigen::VectorXd v(a->size());
    for (std::size_t k = 0; k < a->size(); ++k) {
        const auto x = (*a)[k].value<double>();
        if (!x)
            fail(where, "expected an array of numbers");
        v(Eigen::Index(k)) = *x;
    }
    return v;
}

std::vector<int> get_ids(const toml::node& n, int N, const std::string& where)
{
    std::vector<int> ids;
    if (auto x = n.value<int64_t>()) {
        ids.push_back(int(*x));
    } else if (const toml::array* a = n.as_array()) {
        for (const auto& e : *a) {
            const auto y = e.value<int64_t>();
            if (!y)
                fail(where, "DGU ids must be integers");
            ids.push_back(int(*y));
        }
    } else {
        fail(where, "expected a DGU id or a list of ids");
    }
    for (int& id : ids) {
        if (id < 1 || id > N)
            fail(where, "DGU id " + std::to_string(id) + " out of range 1.." + std::to_string(N));
        --id;
    }
    return ids;
}

Waveform parse_term(const toml::table& t, int dim, const std::string& where)
{
    check_keys(t, {"const", "sin"}, where);
    Waveform w(dim);
    if (auto c = t.get("const")) {
        Eigen::VectorXd v = get_vector(*c, where + ".const");
        if (v.size() != dim)
            fail(where, "constant input must have " + std::to_string(dim) + " components");
        w += Waveform::constant(v);
    }
    if (auto s = t.get_as<toml::table>("sin")) {
        check_keys(*s, {"amp", "freq_rad", "component", "phase"}, where + ".sin");
        const double amp = get_double(*s, "amp", where + ".sin");
        const double f = get_double(*s, "freq_rad", where + ".sin");
        const double ph = opt_double(*s, "phase", where + ".sin").value_or(0.0);
        const auto comp = (*s)["component"].value<int64_t>().value_or(1);
        if (comp < 1 || comp > dim)
            fail(where, "sin component out of range");
        w += Waveform::sinusoid(dim, amp, f, int(comp) - 1, ph);
    }
    if (w.empty())
        fail(where, "waveform needs 'const' or 'sin'");
    return w;
}

Waveform parse_waveform(const toml::node& n, int dim, const std::string& where)
{
    if (const toml::table* t = n.as_table())
        return parse_term(*t, dim, where);
    if (const toml::array* a = n.as_array()) {
        Waveform w(dim);
        for (std::size_t k = 0; k < a->size(); ++k) {
            const toml::table* t = (*a)[k].as_table();
            if (!t)
                fail(where, "waveform list entries must be tables");
            w += parse_term(*t, dim, where + "[" + std::to_string(k) + "]");
        }
        return w;
    }
    fail(where, "waveform must be a table or a list of tables");
}

toml::table parse_text(const std::string& text, const std::string& origin)
{
    try {
        return toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << e.description() << " (line " << e.source().begin.line << ")";
        fail(origin, os.str());
    }
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void check_schema(const toml::table& t, const std::string& origin)
{
    const auto v = t["schema_version"].value<int64_t>();
    if (!v)
        fail(origin, "missing 'schema_version'");
    if (*v != kSchemaVersion)
        fail(origin, "unsupported schema_version " + std::to_string(*v) + " (expected " +
                         std::to_string(kSchemaVersion) + ")");
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << (v == 0 ? 0.0 : v);
    std::string s = os.str();
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

std::string fmt_vec(const Eigen::VectorXd& v)
{
    std::string s = "[";
    for (Eigen::Index k = 0; k < v.size(); ++k)
        s += (k ? ", " : "") + fmt(v(k));
    return s + "]";
}

std::string waveform_toml(const Waveform& w)
{
    std::vector<std::string> parts;
    for (const auto& t : w.terms) {
        if (t.sinusoid) {
            std::string s = "{sin = {amp = " + fmt(t.amp) + ", freq_rad = " + fmt(t.freq) +
                            ", component = " + std::to_string(t.component + 1);
            if (t.phase != 0)
                s += ", phase = " + fmt(t.phase);
            parts.push_back(s + "}}");
        } else {
            parts.push_back("{const = " + fmt_vec(t.value) + "}");
        }
    }
    if (parts.size() == 1)
        return parts[0];
    std::string s = "[";
    for (std::size_t k = 0; k < parts.size(); ++k)
        s += (k ? ", " : "") + parts[k];
    return s + "]";
}

std::vector<Event> parse_event_array(const toml::array& arr, int N, const std::string& origin)
{
    std::vector<Event> events;
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string w = origin + ": event[" + std::to_string(k + 1) + "]";
        const toml::table* t = arr[k].as_table();
        if (!t)
            fail(w, "expected a table");
        check_keys(*t, {"t", "type", "dgu", "factor", "a_factor", "weight_factor"}, w);
        Event e;
        e.t = get_double(*t, "t", w);
        const auto type = (*t)["type"].value<std::string>();
        if (!type)
            fail(w, "missing 'type'");
        if (*type == "plug_in")
            e.kind = EventKind::PlugIn;
        else if (*type == "plug_out")
            e.kind = EventKind::PlugOut;
        else if (*type == "load_scale")
            e.kind = EventKind::LoadScale;
        else if (*type == "comm_activate")
            e.kind = EventKind::CommActivate;
        else if (*type == "mtd")
            e.kind = EventKind::MtdPerturb;
        else
            fail(w, "unknown event type '" + *type + "'");
        if (auto ids = t->get("dgu"))
            e.dgus = get_ids(*ids, N, w);
        if ((e.kind == EventKind::PlugIn || e.kind == EventKind::PlugOut) && e.dgus.empty())
            fail(w, "plug events need 'dgu'");
        if (e.kind == EventKind::LoadScale)
            e.factor = get_double(*t, "factor", w);
        e.a_factor = opt_double(*t, "a_factor", w);
        if (auto wf = t->get("weight_factor")) {
            if (auto x = wf->value<double>())
                e.weight_factors = {*x};
            else {
                Eigen::VectorXd v = get_vector(*wf, w + ".weight_factor");
                e.weight_factors.assign(v.data(), v.data() + v.size());
            }
        }
        events.push_back(e);
    }
    return events;
}

} // namespace

ScenarioConfig builtin_scenario(const std::string& name)
{
    ScenarioConfig c = paper8_base();
    c.name = name;
    if (name == "paper8") {
        c.events = {plug(2, EventKind::PlugIn, {0, 1, 2, 3, 4, 5, 7}), comm(4),
                    plug(8, EventKind::PlugOut, {7}), load(12, 0.7), plug(16, EventKind::PlugIn, {6})};
    } else if (name == "paper8-attack") {
        c.events = {plug(2, EventKind::PlugIn, {0, 1, 2, 3, 4, 5, 6, 7}), comm(4)};
    } else {
        throw ConfigError("unknown builtin scenario '" + name + "'");
    }
    finalize(c);
    return c;
}

bool is_builtin_scenario(const std::string& name)
{
    return name == "paper8" || name == "paper8-attack";
}

std::vector<Event> daily_operations(const ScenarioConfig& cfg)
{
    std::vector<Event> ops;
    for (const auto& e : cfg.events) {
        if (e.kind == EventKind::LoadScale || (e.kind == EventKind::PlugOut) ||
            (e.kind == EventKind::PlugIn && e.t > 0 && std::any_of(cfg.events.begin(), cfg.events.end(), [&](const Event& c) {
                 return c.kind == EventKind::CommActivate && c.t < e.t;
             })))
            ops.push_back(e);
    }
    return ops;
}

void finalize(ScenarioConfig& c)
{
    const int N = c.size();
    if (N < 2)
        throw ConfigError("scenario needs at least two DGUs");
    if (c.topology.size() != N)
        throw ConfigError("topology size does not match the number of DGUs");
    try {
        c.topology.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!(c.dt > 0))
        throw ConfigError("dt must be positive");
    if (!(c.t_end >= 0))
        throw ConfigError("t_end must be non-negative");
    if (!(c.record_dt > 0))
        throw ConfigError("record_dt must be positive");
    if ((c.noise.rho.array() < 0).any() || (c.noise.omega.array() < 0).any())
        throw ConfigError("noise bounds must be non-negative");
    if (!(c.uio_pole < 0) || !(c.dac_uio_pole < 0))
        throw ConfigError("observer poles must be negative");
    if (!(c.dac_a > 0) || !(c.dac_gamma > 0))
        throw ConfigError("DAC constants must be positive");
    if (!(c.cm.window > 0) || !(c.cm.threshold >= 0) || !(c.cm.k_ci > 0) || !(c.cm.k_cp >= 0) || !(c.cm.delta >= 0))
        throw ConfigError("invalid countermeasure parameters");
    if ((c.primary_poles.array() >= 0).any())
        throw ConfigError("primary poles must be negative");
    c.gain_override.resize(N, false);
    for (int i = 0; i < N; ++i) {
        DguParams& p = c.dgus[i];
        if (!(p.R > 0 && p.L > 0 && p.C > 0 && p.I_rated > 0))
            throw ConfigError("DGU " + std::to_string(i + 1) + ": R, L, C and rated current must be positive");
        if (!c.gain_override[i])
            p.k = synthesize_primary_gain<double>(p, c.primary_poles);
        if (!is_hurwitz(assemble_matrices<double>(p, 0, false).A_k))
            throw ConfigError("DGU " + std::to_string(i + 1) + ": primary gain is not stabilising");
    }
    for (const Event& e : c.events) {
        if (!(e.t >= 0))
            throw ConfigError("event times must be non-negative");
        for (int id : e.dgus)
            if (id < 0 || id >= N)
                throw ConfigError("event refers to unknown DGU");
        if (e.kind == EventKind::LoadScale && !(e.factor >= 0))
            throw ConfigError("load scale factor must be non-negative");
        if (e.kind == EventKind::MtdPerturb) {
            if (e.a_factor && (*e.a_factor < 1 || *e.a_factor > 1.1 + 1e-12))
                throw ConfigError("MTD a factor outside [1, 1.1]");
            for (double w : e.weight_factors)
                if (w < 1 || w > 20 + 1e-12)
                    throw ConfigError("MTD weight factor outside [1, 20]");
            if (!(e.weight_factors.empty() || e.weight_factors.size() == 1 ||
                  e.weight_factors.size() == c.topology.edges().size()))
                throw ConfigError("MTD weight factors: give one value or one per line");
        }
    }
    if (c.mtd_period > 0) {
        for (double t = c.mtd_start; t < c.t_end; t += c.mtd_period) {
            Event e;
            e.t = t;
            e.kind = EventKind::MtdPerturb;
            c.events.push_back(e);
        }
        c.mtd_period = 0;
    }
    std::stable_sort(c.events.begin(), c.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
}

ScenarioConfig parse_scenario(const std::string& text, const std::string& origin)
{
    const toml::table root = parse_text(text, origin);
    check_schema(root, origin);
    check_keys(root, {"schema_version", "name", "base", "grid", "dgu", "line", "sim", "uio", "dac", "countermeasure", "event"},
               origin);

    ScenarioConfig c;
    if (auto base = root["base"].value<std::string>()) {
        if (!is_builtin_scenario(*base))
            fail(origin, "unknown base scenario '" + *base + "'");
        c = builtin_scenario(*base);
        // gains are re-synthesised after overrides
        std::fill(c.gain_override.begin(), c.gain_override.end(), false);
        c.events.erase(std::remove_if(c.events.begin(), c.events.end(),
                                      [](const Event& e) { return e.kind == EventKind::MtdPerturb; }),
                       c.events.end());
    }
    c.name = root["name"].value<std::string>().value_or(c.name);

    if (auto g = root["grid"].as_table()) {
        const std::string w = origin + ": [grid]";
        check_keys(*g, {"v_ref", "k_i", "primary_poles", "noise_rho", "noise_omega"}, w);
        c.v_ref = opt_double(*g, "v_ref", w).value_or(c.v_ref);
        c.k_I = opt_double(*g, "k_i", w).value_or(c.k_I);
        if (auto p = g->get("primary_poles")) {
            Eigen::VectorXd v = get_vector(*p, w + ".primary_poles");
            if (v.size() != 3)
                fail(w, "primary_poles needs three values");
            c.primary_poles = v;
        }
        if (auto p = g->get("noise_rho")) {
            Eigen::VectorXd v = get_vector(*p, w + ".noise_rho");
            if (v.size() != 3)
                fail(w, "noise_rho needs three values");
            c.noise.rho = v;
        }
        if (auto p = g->get("noise_omega")) {
            Eigen::VectorXd v = get_vector(*p, w + ".noise_omega");
            if (v.size() != 3)
                fail(w, "noise_omega needs three values");
            c.noise.omega = v;
        }
    }

    if (auto arr = root["dgu"].as_array()) {
        c.dgus.clear();
        c.gain_override.clear();
        for (std::size_t k = 0; k < arr->size(); ++k) {
            const std::string w = origin + ": dgu[" + std::to_string(k + 1) + "]";
            const toml::table* t = (*arr)[k].as_table();
            if (!t)
                fail(w, "expected a table");
            check_keys(*t, {"r", "l", "c", "i_load", "i_rated", "k"}, w);
            DguParams p;
            p.R = get_double(*t, "r", w);
            p.L = get_double(*t, "l", w);
            p.C = get_double(*t, "c", w);
            p.I_load = get_double(*t, "i_load", w);
            p.I_rated = get_double(*t, "i_rated", w);
            bool ov = false;
            if (auto kk = t->get("k")) {
                Eigen::VectorXd v = get_vector(*kk, w + ".k");
                if (v.size() != 3)
                    fail(w, "k needs three values");
                p.k = v;
                ov = true;
            }
            c.dgus.push_back(p);
            c.gain_override.push_back(ov);
        }
    }

    if (auto arr = root["line"].as_array()) {
        c.topology = Topology(int(c.dgus.size()));
        for (std::size_t k = 0; k < arr->size(); ++k) {
            const std::string w = origin + ": line[" + std::to_string(k + 1) + "]";
            const toml::table* t = (*arr)[k].as_table();
            if (!t)
                fail(w, "expected a table");
            check_keys(*t, {"from", "to", "r", "dac_weight"}, w);
            const auto a = (*t)["from"].value<int64_t>();
            const auto b = (*t)["to"].value<int64_t>();
            if (!a || !b)
                fail(w, "'from' and 'to' must be DGU ids");
            const double r = get_double(*t, "r", w);
            if (!(r > 0))
                fail(w, "line resistance must be positive");
            const double wcd = opt_double(*t, "dac_weight", w).value_or(1.0 / r);
            c.topology.add_edge(int(*a) - 1, int(*b) - 1, 1.0 / r, wcd);
        }
    } else if (root["dgu"].as_array()) {
        if (c.topology.size() != int(c.dgus.size()))
            fail(origin, "changing the DGU list requires a [[line]] list");
    }

    if (auto s = root["sim"].as_table()) {
        const std::string w = origin + ": [sim]";
        check_keys(*s, {"fidelity", "dt", "t_end", "seed", "record_dt"}, w);
        if (auto f = (*s)["fidelity"].value<std::string>()) {
            try {
                c.fidelity = parse_fidelity(*f);
            } catch (const ConfigError& e) {
                fail(w, e.what());
            }
        }
        c.dt = opt_double(*s, "dt", w).value_or(c.dt);
        c.t_end = opt_double(*s, "t_end", w).value_or(c.t_end);
        c.record_dt = opt_double(*s, "record_dt", w).value_or(c.record_dt);
        if (s->contains("seed")) {
            const auto sd = (*s)["seed"].value<int64_t>();
            if (!sd || *sd < 0)
                fail(w, "seed must be a non-negative integer");
            c.seed = std::uint64_t(*sd);
        }
    }

    if (auto u = root["uio"].as_table()) {
        const std::string w = origin + ": [uio]";
        check_keys(*u, {"pole", "h", "dac_pole", "dac_floor"}, w);
        c.uio_pole = opt_double(*u, "pole", w).value_or(c.uio_pole);
        c.dac_uio_pole = opt_double(*u, "dac_pole", w).value_or(c.dac_uio_pole);
        c.dac_uio_floor = opt_double(*u, "dac_floor", w).value_or(c.dac_uio_floor);
        if (auto h = u->get("h")) {
            Eigen::VectorXd v = get_vector(*h, w + ".h");
            if (v.size() != 3)
                fail(w, "h needs [h12, h22, h32]");
            c.uio_h = v;
        }
    }

    if (auto d = root["dac"].as_table()) {
        const std::string w = origin + ": [dac]";
        check_keys(*d, {"a", "gamma", "weights", "weight_scale", "mtd_period", "mtd_start"}, w);
        c.dac_a = opt_double(*d, "a", w).value_or(c.dac_a);
        c.dac_gamma = opt_double(*d, "gamma", w).value_or(c.dac_gamma);
        c.mtd_period = opt_double(*d, "mtd_period", w).value_or(c.mtd_period);
        c.mtd_start = opt_double(*d, "mtd_start", w).value_or(c.mtd_start);
        if (auto ws = d->get("weights")) {
            if (auto s = ws->value<std::string>()) {
                if (*s != "conductance")
                    fail(w, "weights must be \"conductance\" or a number");
                for (auto& e : c.topology.edges())
                    e.dac_weight = e.conductance;
            } else if (auto x = ws->value<double>()) {
                for (auto& e : c.topology.edges())
                    e.dac_weight = *x;
            } else {
                fail(w, "weights must be \"conductance\" or a number");
            }
        }
        if (auto sc = opt_double(*d, "weight_scale", w)) {
            if (!(*sc > 0))
                fail(w, "weight_scale must be positive");
            for (auto& e : c.topology.edges())
                e.dac_weight *= *sc;
        }
    }

    if (auto m = root["countermeasure"].as_table()) {
        const std::string w = origin + ": [countermeasure]";
        check_keys(*m, {"enabled", "window", "threshold", "k_cp", "k_ci", "delta", "anti_windup"}, w);
        c.countermeasure = (*m)["enabled"].value<bool>().value_or(c.countermeasure);
        c.cm.window = opt_double(*m, "window", w).value_or(c.cm.window);
        c.cm.threshold = opt_double(*m, "threshold", w).value_or(c.cm.threshold);
        c.cm.k_cp = opt_double(*m, "k_cp", w).value_or(c.cm.k_cp);
        c.cm.k_ci = opt_double(*m, "k_ci", w).value_or(c.cm.k_ci);
        c.cm.delta = opt_double(*m, "delta", w).value_or(c.cm.delta);
        if (auto aw = opt_double(*m, "anti_windup", w); aw && *aw > 0)
            c.cm.windup_limit = *aw;
    }

    if (auto arr = root["event"].as_array())
        c.events = parse_event_array(*arr, int(c.dgus.size()), origin);

    finalize(c);
    return c;
}

std::vector<Event> parse_operations(const std::string& text, int N, const std::string& origin)
{
    const toml::table root = parse_text(text, origin);
    check_schema(root, origin);
    check_keys(root, {"schema_version", "event"}, origin);
    std::vector<Event> ev;
    if (auto arr = root["event"].as_array())
        ev = parse_event_array(*arr, N, origin);
    std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    return ev;
}

std::vector<Event> load_operations(const std::string& path, int N)
{
    return parse_operations(read_file(path), N, path);
}

Fidelity parse_fidelity(const std::string& s)
{
    if (s == "full")
        return Fidelity::Full;
    if (s == "reduced")
        return Fidelity::Reduced;
    throw ConfigError("fidelity must be 'full' or 'reduced', got '" + s + "'");
}

CoopDesign parse_coop_design(const std::string& text, const std::string& origin)
{
    const toml::table root = parse_text(text, origin);
    check_schema(root, origin);
    check_keys(root, {"schema_version", "start", "knowledge_time", "link"}, origin);
    CoopDesign d;
    d.start = get_double(root, "start", origin);
    d.knowledge_time = opt_double(root, "knowledge_time", origin);
    const toml::array* arr = root["link"].as_array();
    if (!arr || arr->size() < 2)
        fail(origin, "a cooperative design needs at least two [[link]] tables");
    for (std::size_t k = 0; k < arr->size(); ++k) {
        const std::string w = origin + ": link[" + std::to_string(k + 1) + "]";
        const toml::table* t = (*arr)[k].as_table();
        if (!t)
            fail(w, "expected a table");
        check_keys(*t, {"link", "input", "free", "direction"}, w);
        CoopLinkDesign l;
        const toml::array* link = (*t)["link"].as_array();
        if (!link || link->size() != 2 || !(*link)[0].value<int64_t>() || !(*link)[1].value<int64_t>())
            fail(w, "'link' must be [receiver, sender]");
        l.i = int(*(*link)[0].value<int64_t>()) - 1;
        l.j = int(*(*link)[1].value<int64_t>()) - 1;
        const bool is_free = (*t)["free"].value<bool>().value_or(false);
        if (is_free == t->contains("input"))
            fail(w, "give either 'input' or 'free = true'");
        if (!is_free) {
            // a bare [d1, d2] or a constant waveform table
            const toml::node& node = *t->get("input");
            const auto* arr = node.as_array();
            Eigen::VectorXd v;
            if (arr && (arr->empty() || !arr->front().is_table())) {
                v = get_vector(node, w + ".input");
            } else {
                const Waveform in = parse_waveform(node, 2, w + ".input");
                if (!in.is_constant())
                    fail(w, "cooperative design takes constant inputs only");
                v = in.constant_part();
            }
            if (v.size() != 2)
                fail(w + ".input", "fake input must have 2 components");
            l.input = Eigen::Vector2d(v);
        }
        if (auto dir = t->get("direction")) {
            const Eigen::VectorXd v = get_vector(*dir, w + ".direction");
            if (v.size() != 2 || v.norm() == 0)
                fail(w, "'direction' must be a nonzero 2-vector");
            l.direction = v;
        }
        d.links.push_back(l);
    }
    return d;
}

CoopDesign load_coop_design(const std::string& path)
{
    return parse_coop_design(read_file(path), path);
}

BatchSpec parse_batch(const std::string& text, const std::string& origin, const std::string& base_dir)
{
    const toml::table root = parse_text(text, origin);
    check_schema(root, origin);
    check_keys(root, {"schema_version", "workers", "run"}, origin);
    BatchSpec b;
    if (root.contains("workers")) {
        const auto n = root["workers"].value<int64_t>();
        if (!n || *n < 0)
            fail(origin, "'workers' must be a non-negative integer");
        b.workers = int(*n);
    }
    auto resolve = [&](const std::string& p, bool builtin) {
        if (builtin || p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute())
            return p;
        return (std::filesystem::path(base_dir) / p).string();
    };
    const toml::array* arr = root["run"].as_array();
    if (!arr || arr->empty())
        fail(origin, "a batch needs at least one [[run]] table");
    std::set<std::string> names;
    for (std::size_t k = 0; k < arr->size(); ++k) {
        const std::string w = origin + ": run[" + std::to_string(k + 1) + "]";
        const toml::table* t = (*arr)[k].as_table();
        if (!t)
            fail(w, "expected a table");
        check_keys(*t, {"name", "scenario", "attack", "seed", "fidelity", "twin"}, w);
        BatchRun r;
        r.name = (*t)["name"].value<std::string>().value_or("run" + std::to_string(k + 1));
        if (r.name.empty() || r.name.find_first_of("/\\") != std::string::npos || r.name == "." || r.name == "..")
            fail(w, "'name' must be a plain directory name");
        if (!names.insert(r.name).second)
            fail(w, "duplicate run name '" + r.name + "'");
        const auto sc = (*t)["scenario"].value<std::string>();
        if (!sc)
            fail(w, "'scenario' is required");
        r.scenario = resolve(*sc, is_builtin_scenario(*sc));
        const std::string at = (*t)["attack"].value<std::string>().value_or("");
        r.attack = resolve(at, is_builtin_attacks(at));
        if (t->contains("seed")) {
            const auto sd = (*t)["seed"].value<int64_t>();
            if (!sd || *sd < 0)
                fail(w, "seed must be a non-negative integer");
            r.seed = std::uint64_t(*sd);
        }
        if (auto f = (*t)["fidelity"].value<std::string>()) {
            try {
                r.fidelity = parse_fidelity(*f);
            } catch (const ConfigError& e) {
                fail(w, e.what());
            }
        }
        r.twin = (*t)["twin"].value<bool>().value_or(false);
        b.runs.push_back(std::move(r));
    }
    return b;
}

BatchSpec load_batch(const std::string& path)
{
    return parse_batch(read_file(path), path, std::filesystem::path(path).parent_path().string());
}

ScenarioConfig load_scenario(const std::string& name)
{
    if (is_builtin_scenario(name))
        return builtin_scenario(name);
    return parse_scenario(read_file(name), name);
}

std::vector<AttackSpec> builtin_attacks(const std::string& name)
{
    auto out = [](int i, int j, double start, Waveform w, const char* label) {
        AttackSpec a;
        a.i = i - 1;
        a.j = j - 1;
        a.start = start;
        a.fake_input = std::move(w);
        a.label = label;
        return a;
    };
    if (name == "set1")
        return {out(8, 3, 6, Waveform::constant(Eigen::Vector2d(2, 0)), "set1")};
    if (name == "set2")
        return {out(2, 1, 6, Waveform::constant(Eigen::Vector2d(2, 0)), "set2"),
                out(3, 2, 6, Waveform::constant(Eigen::Vector2d(-2.8, 0)), "set2")};
    if (name == "set3")
        return {out(8, 3, 6, Waveform::sinusoid(2, 1.0, 4.0, 0), "set3")};
    throw ConfigError("unknown builtin attack set '" + name + "'");
}

bool is_builtin_attacks(const std::string& name)
{
    return name == "set1" || name == "set2" || name == "set3";
}

std::vector<AttackSpec> parse_attacks(const std::string& text, const std::string& origin)
{
    const toml::table root = parse_text(text, origin);
    check_schema(root, origin);
    check_keys(root, {"schema_version", "attack"}, origin);
    std::vector<AttackSpec> specs;
    const toml::array* arr = root["attack"].as_array();
    if (!arr)
        return specs;
    for (std::size_t k = 0; k < arr->size(); ++k) {
        const std::string w = origin + ": attack[" + std::to_string(k + 1) + "]";
        const toml::table* t = (*arr)[k].as_table();
        if (!t)
            fail(w, "expected a table");
        check_keys(*t, {"link", "start", "input", "channel", "phi0", "converter", "bias", "knowledge_time", "label"}, w);
        AttackSpec a;
        const toml::array* link = (*t)["link"].as_array();
        if (!link || link->size() != 2 || !(*link)[0].value<int64_t>() || !(*link)[1].value<int64_t>())
            fail(w, "'link' must be [receiver, sender]");
        a.i = int(*(*link)[0].value<int64_t>()) - 1;
        a.j = int(*(*link)[1].value<int64_t>()) - 1;
        if (a.i < 0 || a.j < 0 || a.i == a.j)
            fail(w, "invalid link");
        a.start = get_double(*t, "start", w);
        const std::string ch = (*t)["channel"].value<std::string>().value_or("output");
        if (ch == "output")
            a.channel = AttackChannel::Output;
        else if (ch == "dac_x1")
            a.channel = AttackChannel::DacX1;
        else if (ch == "dac_x2")
            a.channel = AttackChannel::DacX2;
        else
            fail(w, "channel must be output, dac_x1 or dac_x2");
        const int in_dim = a.channel == AttackChannel::Output ? 2 : 1;
        if (auto in = t->get("input"))
            a.fake_input = parse_waveform(*in, in_dim, w + ".input");
        else
            a.fake_input = Waveform::constant(Eigen::VectorXd::Zero(in_dim));
        if (auto p = t->get("phi0")) {
            a.phi0 = get_vector(*p, w + ".phi0");
            if (a.phi0.size() != a.state_dim())
                fail(w, "phi0 has the wrong dimension");
        }
        if (auto p = t->get("bias")) {
            a.bias = get_vector(*p, w + ".bias");
            if (a.bias.size() != a.state_dim())
                fail(w, "bias has the wrong dimension");
        }
        if (auto p = t->get("converter")) {
            if (a.channel != AttackChannel::Output)
                fail(w, "converter forcing applies to output attacks only");
            a.converter = parse_waveform(*p, 1, w + ".converter");
        }
        a.knowledge_time = opt_double(*t, "knowledge_time", w);
        a.label = (*t)["label"].value<std::string>().value_or("");
        specs.push_back(std::move(a));
    }
    return specs;
}

std::vector<AttackSpec> load_attacks(const std::string& name)
{
    if (is_builtin_attacks(name))
        return builtin_attacks(name);
    return parse_attacks(read_file(name), name);
}

std::string attacks_to_toml(const std::vector<AttackSpec>& specs)
{
    std::ostringstream os;
    os << "schema_version = " << kSchemaVersion << "\n";
    for (const auto& a : specs) {
        os << "\n[[attack]]\n";
        os << "link = [" << a.i + 1 << ", " << a.j + 1 << "]\n";
        os << "start = " << fmt(a.start) << "\n";
        if (a.channel != AttackChannel::Output)
            os << "channel = \"" << (a.channel == AttackChannel::DacX1 ? "dac_x1" : "dac_x2") << "\"\n";
        os << "input = " << waveform_toml(a.fake_input) << "\n";
        if (a.phi0.size())
            os << "phi0 = " << fmt_vec(a.phi0) << "\n";
        if (a.bias.size())
            os << "bias = " << fmt_vec(a.bias) << "\n";
        if (!a.converter.empty())
            os << "converter = " << waveform_toml(a.converter) << "\n";
        if (a.knowledge_time)
            os << "knowledge_time = " << fmt(*a.knowledge_time) << "\n";
        if (!a.label.empty())
            os << "label = \"" << a.label << "\"\n";
    }
    return os.str();
}

PlantMatrices<double> plant_of(const ScenarioConfig& cfg, int j, const std::vector<bool>& connected)
{
    double g = 0;
    if (connected.empty() || connected[j])
        for (int n : cfg.topology.neighbors(j, connected))
            g += cfg.topology.weight(j, n);
    return assemble_matrices<double>(cfg.dgus[j], g);
}

LinkModel link_model(const ScenarioConfig& cfg, int i, int j, const std::vector<bool>& connected)
{
    LinkModel l;
    l.i = i;
    l.j = j;
    l.a = cfg.topology.weight(i, j);
    if (l.a == 0)
        throw std::invalid_argument("no communication link between DGU " + std::to_string(i + 1) + " and " +
                                    std::to_string(j + 1));
    l.rated = cfg.dgus[j].I_rated;
    const auto m = plant_of(cfg, j, connected);
    l.A_k = m.A_k;
    l.E = m.E;
    return l;
}

std::vector<bool> connected_at(const ScenarioConfig& cfg, double t)
{
    std::vector<bool> c(cfg.size(), false);
    for (const auto& e : cfg.events) {
        if (e.t > t)
            break;
        if (e.kind == EventKind::PlugIn)
            for (int id : e.dgus)
                c[id] = true;
        if (e.kind == EventKind::PlugOut)
            for (int id : e.dgus)
                c[id] = false;
    }
    return c;
}

} // namespace dcmg
