#include <doctest.h>

#include "dcmg/scenario.hpp"

#include <filesystem>
#include <functional>
#include <fstream>

using namespace dcmg;

namespace {

std::string err_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool has(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

} // namespace

TEST_CASE("built-in scenarios")
{
    const auto c = builtin_scenario("paper8");
    CHECK(c.size() == 8);
    CHECK(c.v_ref == 48);
    CHECK(c.k_I == 5);
    CHECK(c.cm.window == doctest::Approx(0.65));
    CHECK(c.cm.threshold == doctest::Approx(0.0258));
    CHECK(c.cm.k_ci == 20);
    CHECK(c.cm.delta == doctest::Approx(0.005));
    CHECK(std::is_sorted(c.events.begin(), c.events.end(), [](const Event& a, const Event& b) { return a.t < b.t; }));
    // daily operations: plug-out of 8, load step, plug-in of 7
    const auto ops = daily_operations(c);
    REQUIRE(ops.size() == 3);
    CHECK(ops[0].kind == EventKind::PlugOut);
    CHECK(ops[1].kind == EventKind::LoadScale);
    CHECK(ops[2].kind == EventKind::PlugIn);
    CHECK(ops[2].dgus == std::vector<int>{6});
    CHECK(daily_operations(builtin_scenario("paper8-attack")).empty());
    CHECK_THROWS_AS(builtin_scenario("nope"), ConfigError);
}

TEST_CASE("connected set follows plug events")
{
    const auto c = builtin_scenario("paper8");
    const auto at1 = connected_at(c, 1.0);
    CHECK(std::count(at1.begin(), at1.end(), true) == 0);
    const auto at3 = connected_at(c, 3.0);
    CHECK(std::count(at3.begin(), at3.end(), true) == 7);
    CHECK_FALSE(at3[6]);
    const auto at9 = connected_at(c, 9.0);
    CHECK_FALSE(at9[7]);
    const auto at17 = connected_at(c, 17.0);
    CHECK(at17[6]);
    CHECK_FALSE(at17[7]);
}

TEST_CASE("scenario file with a base and overrides")
{
    const auto c = parse_scenario(R"(
schema_version = 1
base = "paper8-attack"
name = "custom"
[grid]
k_i = 4.0
[sim]
fidelity = "reduced"
t_end = 3.0
seed = 17
[countermeasure]
threshold = 0.04
anti_windup = 0.5
[[event]]
t = 1.0
type = "plug_in"
dgu = [1, 2, 3, 4, 5, 6, 7, 8]
[[event]]
t = 0.5
type = "load_scale"
factor = 0.9
)");
    CHECK(c.name == "custom");
    CHECK(c.k_I == 4.0);
    CHECK(c.fidelity == Fidelity::Reduced);
    CHECK(c.t_end == 3.0);
    CHECK(c.seed == 17);
    CHECK(c.cm.threshold == 0.04);
    REQUIRE(c.cm.windup_limit);
    CHECK(*c.cm.windup_limit == 0.5);
    REQUIRE(c.events.size() == 2);
    CHECK(c.events[0].kind == EventKind::LoadScale); // sorted
    CHECK(c.events[1].dgus.size() == 8);
}

TEST_CASE("schema and key errors name the location")
{
    CHECK(has(err_of([] { parse_scenario("base = \"paper8\"\n", "f.toml"); }), "schema_version"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 7\n", "f.toml"); }), "unsupported schema_version 7"));
    const auto e = err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[sim]\nstep = 1\n", "f.toml"); });
    CHECK(has(e, "f.toml"));
    CHECK(has(e, "[sim]"));
    CHECK(has(e, "unknown key 'step'"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"zz\"\n"); }), "unknown base"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[sim]\nfidelity = \"medium\"\n"); }),
              "medium"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[[event]]\nt = 1\ntype = \"boom\"\n"); }),
              "unknown event type"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[[event]]\nt = 1\ntype = \"plug_in\"\n"); }),
              "plug events need"));
    CHECK(has(err_of([] {
                  parse_scenario("schema_version = 1\nbase = \"paper8\"\n[[event]]\nt = 1\ntype = \"plug_in\"\ndgu = 9\n");
              }),
              "out of range"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[sim]\ndt = -1.0\n"); }), "dt"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\nbase = \"paper8\"\n[grid]\nprimary_poles = [-1, 2, -3]\n"); }),
              "primary poles"));
    CHECK(has(err_of([] { parse_scenario("schema_version = 1\n[[[\n"); }), "<string>"));
}

TEST_CASE("topology errors surface as config errors")
{
    const auto e = err_of([] {
        parse_scenario(R"(
schema_version = 1
base = "paper8"
[[line]]
from = 1
to = 2
r = 0.05
[[line]]
from = 3
to = 4
r = 0.05
)");
    });
    CHECK_FALSE(e.empty());
}

TEST_CASE("MTD events and periodic expansion")
{
    const auto c = parse_scenario(R"(
schema_version = 1
base = "paper8-attack"
[sim]
t_end = 10.0
[dac]
mtd_period = 2.0
mtd_start = 5.0
[[event]]
t = 2.0
type = "plug_in"
dgu = [1, 2, 3, 4, 5, 6, 7, 8]
[[event]]
t = 4.0
type = "comm_activate"
[[event]]
t = 4.5
type = "mtd"
a_factor = 1.05
weight_factor = 3.0
)");
    std::vector<double> mtd;
    for (const auto& e : c.events)
        if (e.kind == EventKind::MtdPerturb)
            mtd.push_back(e.t);
    CHECK(mtd == std::vector<double>{4.5, 5.0, 7.0, 9.0});
    CHECK(has(err_of([] {
                  parse_scenario("schema_version = 1\nbase = \"paper8\"\n[[event]]\nt = 1\ntype = \"mtd\"\na_factor = 1.3\n");
              }),
              "[1, 1.1]"));
    CHECK(has(err_of([] {
                  parse_scenario(
                      "schema_version = 1\nbase = \"paper8\"\n[[event]]\nt = 1\ntype = \"mtd\"\nweight_factor = [2.0, 3.0]\n");
              }),
              "one per line"));
}

TEST_CASE("attack files and waveforms")
{
    const auto a = parse_attacks(R"(
schema_version = 1
[[attack]]
link = [3, 8]
start = 6.0
input = [{const = [2.0, 0.0]}, {sin = {amp = 1.0, freq_rad = 4.0, component = 1}}]
label = "mixed"
[[attack]]
link = [2, 1]
start = 7.0
channel = "dac_x1"
input = {const = [0.1]}
bias = [0.0, 0.5]
)");
    REQUIRE(a.size() == 2);
    CHECK(a[0].i == 2);
    CHECK(a[0].j == 7);
    CHECK_FALSE(a[0].fake_input.is_constant());
    CHECK(a[0].fake_input.constant_part()(0) == 2.0);
    CHECK(a[0].fake_input(M_PI / 8)(0) == doctest::Approx(3.0));
    CHECK(a[0].is_zts());
    CHECK(a[1].channel == AttackChannel::DacX1);
    CHECK(a[1].state_dim() == 2);
    CHECK_FALSE(a[1].is_zts());

    // round trip through the writer
    const auto b = parse_attacks(attacks_to_toml(a));
    REQUIRE(b.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(b[k].i == a[k].i);
        CHECK(b[k].j == a[k].j);
        CHECK(b[k].start == a[k].start);
        CHECK(b[k].channel == a[k].channel);
        CHECK(b[k].label == a[k].label);
        for (double t : {0.0, 0.3, 1.7})
            CHECK((b[k].fake_input(t) - a[k].fake_input(t)).cwiseAbs().maxCoeff() == 0.0);
    }
    // negative zero is written as zero
    AttackSpec z;
    z.i = 2;
    z.j = 1;
    z.start = 6;
    z.fake_input = Waveform::constant(Eigen::Vector2d(-2.8, -0.0));
    CHECK_FALSE(has(attacks_to_toml({z}), "-0.0"));

    CHECK(has(err_of([] { parse_attacks("schema_version = 1\n[[attack]]\nlink = [3, 8]\nstart = 1\ninput = {const = [1.0]}\n"); }),
              "2 components"));
    CHECK(has(err_of([] {
                  parse_attacks("schema_version = 1\n[[attack]]\nlink = [3, 8]\nstart = 1\ninput = {sin = {amp = 1.0, "
                                "freq_rad = 2.0, component = 3}}\n");
              }),
              "component out of range"));
    CHECK(has(err_of([] { parse_attacks("schema_version = 1\n[[attack]]\nlink = [3, 8]\nstart = 1\ninput = {}\n"); }),
              "'const' or 'sin'"));
    CHECK(has(err_of([] {
                  parse_attacks("schema_version = 1\n[[attack]]\nlink = [3, 3]\nstart = 1\ninput = {const = [1.0, 0.0]}\n");
              }),
              "invalid link"));
    CHECK_THROWS_AS(builtin_attacks("set9"), ConfigError);
}

TEST_CASE("built-in attack sets")
{
    const auto s1 = builtin_attacks("set1");
    REQUIRE(s1.size() == 1);
    CHECK(s1[0].i == 7);
    CHECK(s1[0].j == 2);
    CHECK(s1[0].start == 6);
    const auto s2 = builtin_attacks("set2");
    REQUIRE(s2.size() == 2);
    CHECK(s2[1].fake_input.constant_part()(0) == doctest::Approx(-2.8));
    const auto s3 = builtin_attacks("set3");
    REQUIRE(s3.size() == 1);
    CHECK_FALSE(s3[0].fake_input.is_constant());
    CHECK(s3[0].fake_input.constant_part().isZero(0));
}

TEST_CASE("operations files")
{
    const auto ops = parse_operations(R"(
schema_version = 1
[[event]]
t = 9.0
type = "plug_in"
dgu = 7
[[event]]
t = 3.0
type = "load_scale"
factor = 0.5
)",
                                      8);
    REQUIRE(ops.size() == 2);
    CHECK(ops[0].t == 3.0);
    CHECK(ops[1].dgus == std::vector<int>{6});
    CHECK_THROWS_AS(parse_operations("schema_version = 1\nlink = 3\n", 8), ConfigError);
}

TEST_CASE("cooperative design files")
{
    const auto d = parse_coop_design(R"(
schema_version = 1
start = 6.0
[[link]]
link = [2, 1]
input = [2.0, 0.0]
[[link]]
link = [3, 2]
free = true
direction = [1.0, 0.0]
)");
    REQUIRE(d.links.size() == 2);
    CHECK(d.start == 6.0);
    CHECK(d.links[0].input);
    CHECK_FALSE(d.links[1].input);
    CHECK(d.links[1].i == 2);
    CHECK(d.links[1].j == 1);
    CHECK(has(err_of([] { parse_coop_design("schema_version = 1\nstart = 1.0\n[[link]]\nlink = [2, 1]\nfree = true\n"); }),
              "at least two"));
    CHECK(has(err_of([] {
                  parse_coop_design("schema_version = 1\nstart = 1.0\n[[link]]\nlink = [2, 1]\nfree = true\ninput = [1.0, 0.0]\n"
                                    "[[link]]\nlink = [3, 2]\nfree = true\n");
              }),
              "either"));
    CHECK(has(err_of([] {
                  parse_coop_design("schema_version = 1\nstart = 1.0\n[[link]]\nlink = [2, 1]\nfree = true\n"
                                    "direction = [0.0, 0.0]\n[[link]]\nlink = [3, 2]\nfree = true\n");
              }),
              "nonzero"));
}

TEST_CASE("batch files resolve paths against their directory")
{
    const auto dir = std::filesystem::temp_directory_path() / "dcmg_batch_parse";
    std::filesystem::create_directories(dir);
    const auto file = dir / "b.toml";
    std::ofstream(file) << R"(
schema_version = 1
workers = 3
[[run]]
name = "a"
scenario = "paper8"
[[run]]
name = "b"
scenario = "my.toml"
attack = "set1"
seed = 4
fidelity = "reduced"
twin = true
)";
    const auto b = load_batch(file.string());
    CHECK(b.workers == 3);
    REQUIRE(b.runs.size() == 2);
    CHECK(b.runs[0].scenario == "paper8");
    CHECK(b.runs[1].scenario == (dir / "my.toml").string());
    CHECK(b.runs[1].attack == "set1");
    CHECK(*b.runs[1].seed == 4);
    CHECK(*b.runs[1].fidelity == Fidelity::Reduced);
    CHECK(b.runs[1].twin);
    std::filesystem::remove_all(dir);

    CHECK(has(err_of([] { parse_batch("schema_version = 1\n"); }), "at least one"));
    CHECK(has(err_of([] {
                  parse_batch("schema_version = 1\n[[run]]\nname = \"x\"\nscenario = \"paper8\"\n[[run]]\nname = \"x\"\n"
                              "scenario = \"paper8\"\n");
              }),
              "duplicate"));
    CHECK(has(err_of([] { parse_batch("schema_version = 1\n[[run]]\nname = \"../x\"\nscenario = \"paper8\"\n"); }),
              "plain directory"));
    CHECK(has(err_of([] { parse_batch("schema_version = 1\n[[run]]\nname = \"x\"\n"); }), "'scenario' is required"));
}
