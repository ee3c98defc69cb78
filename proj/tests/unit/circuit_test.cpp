#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include <memnet/circuit.hpp>

using namespace memnet;
using Catch::Approx;

namespace {

Netlist resistor_net(std::vector<std::string> nodes, std::vector<std::tuple<std::string, std::string, double>> rs,
                     std::vector<std::pair<std::string, double>> sources) {
    Netlist n;
    n.node_ids = std::move(nodes);
    n.ground = "gnd";
    int k = 0;
    for (auto& [a, b, ohms] : rs) n.branches.push_back({"r" + std::to_string(k++), a, b, ResistorBranch{ohms}});
    for (auto& [node, v] : sources) n.sources.push_back({node, dc_waveform(v)});
    return n;
}

Netlist single_memristor(const DeviceParams& p, const Waveform& w) {
    Netlist n;
    n.node_ids = {"gnd", "a"};
    n.ground = "gnd";
    n.branches.push_back({"m", "a", "gnd", MemristorBranch{p, 0.5}});
    n.sources.push_back({"a", w});
    return n;
}

std::vector<double> conductances(const Netlist& n) {
    std::vector<double> g;
    for (const auto& b : n.branches) g.push_back(1.0 / std::get<ResistorBranch>(b.kind).ohms);
    return g;
}

}  // namespace

TEST_CASE("divider gives exactly half the source") {
    const auto n = resistor_net({"gnd", "top", "mid"}, {{"top", "mid", 1000.0}, {"mid", "gnd", 1000.0}}, {{"top", 1.0}});
    const std::vector<double> zero(2, 0.0);
    const auto v = solve_operating_point(n, conductances(n), zero, std::vector<double>{1.0});
    CHECK(std::abs(v[2] - 0.5) <= 1e-12);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 1.0);
}

TEST_CASE("single branch obeys Ohm's law") {
    const auto n = resistor_net({"gnd", "a"}, {{"a", "gnd", 100.0}}, {{"a", 1.0}});
    SimConfig cfg{1e-3, 0.01, 1e-9, 0, 1};
    const auto tr = run_transient(n, cfg);
    for (const auto& row : tr.branch_currents) CHECK(row[0] == Approx(0.01).epsilon(1e-15));
}

TEST_CASE("resistor triangle matches a hand-solved 2x2 system") {
    // Corner a at 1 V; b and c are unknown, each tied to ground.
    const double rab = 1.0, rbc = 1.0, rca = 1.0, rbg = 2.0, rcg = 3.0;
    const auto n = resistor_net({"gnd", "a", "b", "c"},
                                {{"a", "b", rab}, {"b", "c", rbc}, {"c", "a", rca}, {"b", "gnd", rbg}, {"c", "gnd", rcg}},
                                {{"a", 1.0}});
    const auto v = solve_operating_point(n, conductances(n), std::vector<double>(5, 0.0), std::vector<double>{1.0});

    // [g11 g12; g21 g22] [vb; vc] = [gab; gca], solved by Cramer's rule.
    const double gab = 1 / rab, gbc = 1 / rbc, gca = 1 / rca, gbg = 1 / rbg, gcg = 1 / rcg;
    const double g11 = gab + gbc + gbg, g12 = -gbc, g22 = gbc + gca + gcg;
    const double det = g11 * g22 - g12 * g12;
    const double vb = (gab * g22 - g12 * gca) / det;
    const double vc = (g11 * gca - g12 * gab) / det;
    CHECK(v[2] == Approx(vb).epsilon(1e-12));
    CHECK(v[3] == Approx(vc).epsilon(1e-12));
}

TEST_CASE("ohmic network is dt-independent and matches the d.c. solution") {
    const auto n = resistor_net({"gnd", "a", "b"}, {{"a", "b", 300.0}, {"b", "gnd", 100.0}}, {{"a", 2.0}});
    for (double dt : {1e-3, 1e-2}) {
        const auto tr = run_transient(n, SimConfig{dt, 0.1, 1e-9, 0, 1});
        for (const auto& row : tr.node_voltages) CHECK(std::abs(row[2] - 0.5) / 0.5 <= 1e-9);
    }
}

TEST_CASE("single memristor netlist equals the bare device loop") {
    DeviceParams p;
    const Waveform w{WaveformSum{{dc_waveform(1.0, 0.05), sine_waveform(0.3, 7.0)}}};
    const SimConfig cfg{1e-3, 2.0, 1e-9, 0, 1};
    const auto tr = run_transient(single_memristor(p, w), cfg);

    DeviceState st = DeviceState::fresh(0.5);
    REQUIRE(tr.times.size() == 2001);
    // Row k holds the state after the step taken at t = k * dt.
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        auto r = step_device(p, st, eval_waveform(w, t), cfg.dt, 0.0);
        st = r.state;
        REQUIRE(std::abs(tr.branch_currents[k][0] - r.current) <= 1e-12);
    }
}

TEST_CASE("zero sources give zero current everywhere") {
    Netlist n;
    n.node_ids = {"gnd", "a", "b"};
    n.ground = "gnd";
    n.branches = {{"m1", "a", "b", MemristorBranch{}}, {"m2", "b", "gnd", MemristorBranch{}}, {"m3", "a", "gnd", MemristorBranch{}}};
    n.sources = {{"a", dc_waveform(0.0)}};
    const auto tr = run_transient(n, SimConfig{1e-3, 1.0, 1e-9, 0, 1});
    for (const auto& row : tr.branch_currents)
        for (double i : row) REQUIRE(i == 0.0);
}

TEST_CASE("ohmic memristors give a constant trace after the step") {
    DeviceParams p;
    p.gamma = 0.0;
    p.mobility_gain = 0.0;
    Netlist n;
    n.node_ids = {"gnd", "a", "b"};
    n.ground = "gnd";
    n.branches = {{"m1", "a", "b", MemristorBranch{p, 0.2}}, {"m2", "b", "gnd", MemristorBranch{p, 0.7}}};
    n.sources = {{"a", dc_waveform(1.0)}};
    const auto tr = run_transient(n, SimConfig{1e-3, 0.5, 1e-9, 0, 1});
    for (std::size_t k = 1; k < tr.times.size(); ++k) REQUIRE(tr.branch_currents[k] == tr.branch_currents[0]);
}

TEST_CASE("KCL holds in a noisy memristor network and runs are deterministic") {
    DeviceParams p;
    p.noise_amp = 0.01;
    Netlist n;
    n.node_ids = {"gnd", "src", "mid"};
    n.ground = "gnd";
    n.branches = {{"m1", "src", "mid", MemristorBranch{p, 0.5}},
                  {"m2", "mid", "gnd", MemristorBranch{p, 0.3}},
                  {"m3", "src", "gnd", MemristorBranch{p, 0.6}}};
    n.sources = {{"src", dc_waveform(1.0)}};
    const SimConfig cfg{1e-3, 5.0, 1e-9, 42, 1};
    const auto a = run_transient(n, cfg);
    for (double r : kcl_residuals(n, a)) REQUIRE(r <= 1e-9);

    const auto b = run_transient(n, cfg);
    CHECK(a.branch_currents == b.branch_currents);
    CHECK(a.node_voltages == b.node_voltages);

    SimConfig other = cfg;
    other.rng_seed = 43;
    CHECK(run_transient(n, other).branch_currents != a.branch_currents);
}

TEST_CASE("source current sums branches leaving the driven node") {
    const auto n = resistor_net({"gnd", "a", "b"}, {{"a", "b", 100.0}, {"b", "gnd", 100.0}, {"gnd", "a", 50.0}}, {{"a", 1.0}});
    const auto tr = run_transient(n, SimConfig{1e-3, 0.01, 1e-9, 0, 1});
    const auto is = source_current(n, tr, "a");
    CHECK(is.back() == Approx(1.0 / 200.0 + 1.0 / 50.0).epsilon(1e-12));
}

TEST_CASE("record count and decimation") {
    CHECK(record_count(SimConfig{1e-3, 1.0, 1e-9, 0, 1}) == 1001);
    CHECK(record_count(SimConfig{1e-3, 1.0, 1e-9, 0, 10}) == 101);
    const auto n = resistor_net({"gnd", "a"}, {{"a", "gnd", 100.0}}, {{"a", 1.0}});
    const auto tr = run_transient(n, SimConfig{1e-3, 1.0, 1e-9, 0, 10});
    CHECK(tr.times.size() == 101);
    CHECK(tr.times.back() == Approx(1.0));
}

TEST_CASE("floating node is reported by name") {
    auto n = resistor_net({"gnd", "a", "island"}, {{"a", "gnd", 100.0}}, {{"a", 1.0}});
    CHECK_THROWS_WITH(run_transient(n, SimConfig{1e-3, 0.01, 1e-9, 0, 1}),
                      Catch::Matchers::ContainsSubstring("island"));
}

TEST_CASE("sim config validation") {
    CHECK_THROWS_AS((nlohmann::json{{"dt", 0.0}}.get<SimConfig>()), InvalidInput);
    CHECK_THROWS_AS((nlohmann::json{{"dt", 2.0}, {"t_end", 1.0}}.get<SimConfig>()), InvalidInput);
    CHECK_THROWS_AS((nlohmann::json{{"record_every", 0}}.get<SimConfig>()), InvalidInput);
    const SimConfig c{5e-4, 3.0, 1e-10, 9, 2};
    CHECK(nlohmann::json(c).get<SimConfig>() == c);
}

TEST_CASE("trace CSV round trip") {
    const auto n = single_memristor(DeviceParams{}, dc_waveform(1.0));
    const auto tr = run_transient(n, SimConfig{1e-3, 0.05, 1e-9, 0, 1});
    std::stringstream buf;
    write_trace_csv(tr, buf);
    CHECK(buf.str().rfind("t,gnd,a,m\n", 0) == 0);
    const auto table = read_csv(buf);
    CHECK(table.column("t") == tr.times);
    CHECK(table.column("m") == tr.branch_series(0));
    CHECK(table.column("a") == tr.node_series(1));
}
