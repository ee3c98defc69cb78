// memnet: batch entry point. One subcommand per experiment; each reads a
// flat JSON config, writes its outputs plus manifest.json under --out.
//
// Exit codes: 0 ok, 1 usage, 2 invalid input, 3 numerical/runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <memnet/analysis.hpp>
#include <memnet/circuit.hpp>
#include <memnet/device.hpp>
#include <memnet/learnnet.hpp>
#include <memnet/netlist.hpp>
#include <memnet/sweep.hpp>
#include <memnet/tmaze.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace memnet;

namespace {

struct Run {
    std::string subcommand;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::map<std::string, std::string> inputs;
    std::optional<std::string> netlist_hash;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const fs::path& path) {
    const std::string text = slurp(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInput("'" + path.string() + "': " + e.what());
    }
}

/// Re-labels errors raised while interpreting a file so the message names it.
template <typename F>
auto with_path(const fs::path& path, F f) {
    try {
        return f();
    } catch (const InvalidInput& e) {
        throw InvalidInput("'" + path.string() + "': " + e.what());
    } catch (const json::exception& e) {
        throw InvalidInput("'" + path.string() + "': " + e.what());
    }
}

void write_text(const Run& run, const std::string& name, const std::string& text) {
    std::ofstream out(run.out / name, std::ios::binary);
    if (!out) throw Error("cannot write '" + (run.out / name).string() + "'");
    out << text;
}

void write_json(const Run& run, const std::string& name, const json& j) { write_text(run, name, j.dump(2) + "\n"); }

void write_manifest(const Run& run) {
    json inputs = json::object();
    for (const auto& [k, v] : run.inputs) inputs[k] = v;
    write_json(run, "manifest.json",
               {{"subcommand", run.subcommand},
                {"inputs", inputs},
                {"out", run.out.string()},
                {"rng_seed", run.seed ? json(*run.seed) : json(nullptr)},
                {"tool_version", MEMNET_VERSION},
                {"netlist_hash", run.netlist_hash ? json(*run.netlist_hash) : json(nullptr)}});
}

// simulate ----------------------------------------------------------------

void cmd_simulate(Run& run, const fs::path& netlist_path, const fs::path& config_path) {
    run.inputs = {{"netlist", netlist_path.string()}, {"config", config_path.string()}};
    const Netlist n = with_path(netlist_path, [&] { return parse_netlist(slurp(netlist_path)); });
    SimConfig cfg = with_path(config_path, [&] { return read_json(config_path).get<SimConfig>(); });
    if (run.seed) cfg.rng_seed = *run.seed;
    const Trace tr = run_transient(n, cfg);
    run.netlist_hash = tr.netlist_hash;

    std::ostringstream csv;
    write_trace_csv(tr, csv);
    write_text(run, "trace.csv", csv.str());

    // Current delivered by each driven node, for plotting.
    std::ostringstream src;
    src << 't';
    for (const auto& s : n.sources) src << ',' << s.node;
    src << '\n';
    std::vector<std::vector<double>> series;
    for (const auto& s : n.sources) series.push_back(source_current(n, tr, s.node));
    for (std::size_t r = 0; r < tr.times.size(); ++r) {
        src << format_double(tr.times[r]);
        for (const auto& col : series) src << ',' << format_double(col[r]);
        src << '\n';
    }
    write_text(run, "source_current.csv", src.str());
    write_manifest(run);
}

// spike -------------------------------------------------------------------

void cmd_spike(Run& run, const fs::path& trace_path, const std::optional<fs::path>& config_path,
               std::vector<std::string> columns) {
    run.inputs = {{"trace", trace_path.string()}};
    SpikeOptions spikes;
    DecayOptions decay;
    if (config_path) {
        run.inputs["config"] = config_path->string();
        with_path(*config_path, [&] {
            const json j = read_json(*config_path);
            if (!j.is_object()) throw InvalidInput("spike config: expected a JSON object");
            if (j.contains("spike_options")) spikes = j.at("spike_options").get<SpikeOptions>();
            if (j.contains("decay")) {
                const auto& d = j.at("decay");
                decay.tail_fraction = detail::json_number(d, "tail_fraction", "spike config.decay", 0.1, false);
                if (d.contains("baseline") && !d.at("baseline").is_null())
                    decay.baseline = detail::json_number(d, "baseline", "spike config.decay", 0.0, true);
            }
            if (columns.empty() && j.contains("columns")) columns = j.at("columns").get<std::vector<std::string>>();
            return 0;
        });
    }
    const CsvTable table = with_path(trace_path, [&] {
        std::istringstream in(slurp(trace_path));
        CsvTable t = read_csv(in);
        if (t.header.size() < 2 || t.columns.front().empty()) throw InvalidInput("trace has no data rows");
        if (t.header.front() != "t") throw InvalidInput("first column must be 't'");
        return t;
    });
    if (columns.empty()) columns.push_back(table.header.back());
    run.inputs["columns"] = [&] {
        std::string s;
        for (const auto& c : columns) s += (s.empty() ? "" : "+") + c;
        return s;
    }();

    // Several columns are summed, e.g. the branches leaving a source node.
    const auto& times = table.column("t");
    std::vector<double> values(times.size(), 0.0);
    for (const auto& c : columns) {
        const auto& col = with_path(trace_path, [&]() -> const std::vector<double>& { return table.column(c); });
        for (std::size_t k = 0; k < values.size(); ++k) values[k] += col[k];
    }

    const auto events = detect_spikes(times, values, spikes);
    json list = json::array();
    for (std::size_t e = 0; e < events.size(); ++e) {
        // Each spike's decay is measured up to the next spike.
        std::size_t end = times.size();
        if (e + 1 < events.size())
            end = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), events[e + 1].t_peak) -
                                           times.begin());
        const std::span<const double> ts(times.data(), end), vs(values.data(), end);
        list.push_back(decay_times(ts, vs, events[e], decay));
    }
    write_json(run, "spike_metrics.json",
               {{"columns", columns}, {"spike_options", spikes}, {"spikes", std::move(list)}});
    write_json(run, "oscillation_metrics.json", oscillation_metrics(times, values, spikes));
    write_manifest(run);
}

// hysteresis --------------------------------------------------------------

void cmd_hysteresis(Run& run, const fs::path& params_path, const fs::path& config_path) {
    run.inputs = {{"params", params_path.string()}, {"config", config_path.string()}};
    const DeviceParams p = with_path(params_path, [&] { return read_json(params_path).get<DeviceParams>(); });
    double amplitude = 1.0;
    std::vector<double> sweep;
    HysteresisOptions opt;
    with_path(config_path, [&] {
        const json j = read_json(config_path);
        if (!j.is_object()) throw InvalidInput("hysteresis config: expected a JSON object");
        amplitude = detail::json_number(j, "amplitude", "hysteresis config", 1.0, false);
        if (j.contains("frequencies")) {
            sweep = j.at("frequencies").get<std::vector<double>>();
        } else {
            const double lo = detail::json_number(j, "omega_lo", "hysteresis config", 0.0, true);
            const double hi = detail::json_number(j, "omega_hi", "hysteresis config", 0.0, true);
            const auto points = j.value("points", 20);
            if (points < 1) throw InvalidInput("hysteresis config.points: must be >= 1");
            sweep = log_sweep(lo, hi, static_cast<std::size_t>(points));
        }
        opt.periods = j.value("periods", opt.periods);
        opt.samples_per_period = j.value("samples_per_period", opt.samples_per_period);
        opt.x0 = detail::json_number(j, "x0", "hysteresis config", opt.x0, false);
        return 0;
    });
    const auto res = find_omega0(p, amplitude, sweep, opt);
    if (res.degenerate) std::cerr << "warning: fewer than 3 sweep points; omega0 is not an interior maximum\n";

    std::ostringstream table, loops;
    table << "omega,loop_area\n";
    loops << "omega,v,i\n";
    for (std::size_t k = 0; k < res.frequencies.size(); ++k) {
        table << format_double(res.frequencies[k]) << ',' << format_double(res.loop_areas[k]) << '\n';
        const auto loop = simulate_loop(p, amplitude, res.frequencies[k], opt);
        // Every 10th sample keeps the overlay file small.
        for (std::size_t s = 0; s < loop.v.size(); s += 10)
            loops << format_double(res.frequencies[k]) << ',' << format_double(loop.v[s]) << ','
                  << format_double(loop.i[s]) << '\n';
    }
    write_text(run, "hysteresis.csv", table.str());
    write_text(run, "loops.csv", loops.str());
    json j = res;
    j["amplitude"] = amplitude;
    write_json(run, "hysteresis.json", j);
    write_manifest(run);
}

// profile -----------------------------------------------------------------

void cmd_profile(Run& run, const fs::path& params_path, const fs::path& config_path) {
    run.inputs = {{"params", params_path.string()}, {"config", config_path.string()}};
    const DeviceParams p = with_path(params_path, [&] { return read_json(params_path).get<DeviceParams>(); });
    const Profile pr = with_path(config_path, [&] {
        const json j = read_json(config_path);
        if (!j.is_object()) throw InvalidInput("profile config: expected a JSON object");
        const auto n = j.value("n_samples", 16);
        if (n < 2) throw InvalidInput("profile config.n_samples: must be >= 2");
        return dc_conduction_profile(p, detail::json_number(j, "voltage", "profile config", 1.0, false),
                                     detail::json_number(j, "duration", "profile config", 4.0, false),
                                     static_cast<std::size_t>(n),
                                     detail::json_number(j, "x0", "profile config", 0.5, false));
    });
    write_json(run, "profile.json", pr);
    write_manifest(run);
}

// compose -----------------------------------------------------------------

void cmd_compose(Run& run, const fs::path& seed_path, const fs::path& profile_path, const fs::path& config_path) {
    run.inputs = {{"seed_file", seed_path.string()}, {"profile", profile_path.string()}, {"config", config_path.string()}};
    const NoteSequence seed = with_path(seed_path, [&] {
        std::istringstream in(slurp(seed_path));
        return read_sequence(in);
    });
    const Profile pr = with_path(profile_path, [&] { return read_json(profile_path).get<Profile>(); });
    std::size_t n_notes = 8, length = 1000;
    std::optional<std::size_t> start;
    double epsilon = 0.01;
    bool invert = false;
    std::uint64_t rng_seed = 0;
    with_path(config_path, [&] {
        const json j = read_json(config_path);
        if (!j.is_object()) throw InvalidInput("compose config: expected a JSON object");
        n_notes = j.value("n_notes", n_notes);
        length = j.value("length", length);
        if (j.contains("start") && !j.at("start").is_null()) start = j.at("start").get<std::size_t>();
        epsilon = detail::json_number(j, "epsilon", "compose config", epsilon, false);
        invert = j.value("invert", invert);
        rng_seed = j.value("rng_seed", rng_seed);
        return 0;
    });
    if (run.seed) rng_seed = *run.seed;
    auto seeded = with_path(seed_path, [&] { return seed_from_sequence(seed, n_notes, pr, epsilon, rng_seed, invert); });
    if (seeded.empty_seed) std::cerr << "warning: empty seed sequence; all edges start at epsilon\n";
    const std::size_t first = start.value_or(seed.empty() ? 0 : seed.front());
    const auto seq = generate(seeded.graph, length, first);

    std::ostringstream out;
    write_sequence(seq, out);
    write_text(run, "sequence.txt", out.str());
    write_json(run, "graph.json", graph_state_json(seeded.graph));
    if (!seed.empty()) {
        const auto score = composition_score(seed, seq, n_notes);
        write_json(run, "composition.json",
                   {{"kl_generated", score.kl_generated}, {"kl_uniform", score.kl_uniform}});
    }
    write_manifest(run);
}

// tmaze -------------------------------------------------------------------

void cmd_tmaze(Run& run, const fs::path& config_path) {
    run.inputs = {{"config", config_path.string()}};
    auto [controller, cfg] = with_path(config_path, [&] {
        const json j = read_json(config_path);
        if (!j.is_object() || !j.contains("controller")) throw InvalidInput("tmaze config: missing 'controller'");
        json rest = j;
        rest.erase("controller");
        const json& jc = j.at("controller");
        ControllerNet c = jc.is_string() ? [&] {
            const fs::path cp = config_path.parent_path() / jc.get<std::string>();
            return with_path(cp, [&] { return controller_from_json(read_json(cp), cp.parent_path()); });
        }()
                                         : controller_from_json(jc, config_path.parent_path());
        return std::pair{std::move(c), maze_config_from_json(rest)};
    });
    if (run.seed) cfg.rng_seed = *run.seed;
    run.netlist_hash = netlist_hash(controller.netlist);
    const TrialLog log = run_experiment(controller, cfg);
    std::ostringstream csv;
    write_trial_log_csv(log, csv);
    write_text(run, "trial_log.csv", csv.str());
    json summary = trial_log_summary(log);
    summary["config"] = cfg;
    write_json(run, "summary.json", summary);
    write_manifest(run);
}

// sweep -------------------------------------------------------------------

void cmd_sweep(Run& run) {
    const std::uint64_t first = run.seed.value_or(1);
    ThreeMemSweepSpec tspec;
    for (auto& s : tspec.seeds) s += first - 1;
    std::cerr << "sweep: three-memristor circuit\n";
    const auto three = sweep_three_mem(tspec);

    std::ostringstream tcsv;
    tcsv << "noise_amp,kappa,gamma,lower_polarity,min_spikes,min_negative_samples,max_kcl_residual,passes\n";
    for (const auto& o : three.outcomes)
        tcsv << format_double(o.candidate.noise_amp) << ',' << format_double(o.candidate.kappa) << ','
             << format_double(o.candidate.gamma) << ',' << o.candidate.lower_polarity << ',' << o.min_spikes << ','
             << o.min_negative << ',' << format_double(o.max_kcl_residual) << ',' << (o.passes ? 1 : 0) << '\n';
    write_text(run, "three_mem_sweep.csv", tcsv.str());
    if (!three.selected) throw NumericalFailure("sweep: no three-memristor candidate met the spike criteria");
    write_json(run, "three_mem.json", three.reference);
    run.netlist_hash = netlist_hash(three.reference);

    std::cerr << "sweep: T-maze controller\n";
    MazeSweepSpec mspec;
    for (auto& s : mspec.seeds) s += first - 1;
    const auto maze = sweep_maze(mspec);
    std::ostringstream mcsv;
    mcsv << "reward_amplitude,mobility_gain,state_weight,seeds_trained,mean_pre_accuracy,mean_latency,"
            "latency_unavailable,passes\n";
    for (const auto& o : maze.outcomes)
        mcsv << format_double(o.candidate.reward_amplitude) << ',' << format_double(o.candidate.mobility_gain) << ','
             << format_double(o.candidate.state_weight) << ',' << o.seeds_trained << ','
             << format_double(o.mean_pre_accuracy) << ',' << format_double(o.mean_latency) << ','
             << o.latency_unavailable << ',' << (o.passes ? 1 : 0) << '\n';
    write_text(run, "tmaze_sweep.csv", mcsv.str());
    if (!maze.reference) throw NumericalFailure("sweep: no T-maze candidate met the trainability bar");
    write_json(run, "tmaze_reference.json", maze_reference_json(*maze.reference));
    write_manifest(run);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memristor network simulator"};
    app.set_version_flag("--version", MEMNET_VERSION);
    app.require_subcommand(1);

    Run run;
    std::string out_dir;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "rng seed override");
    };

    std::string netlist, config, trace, params, seed_file, profile;
    std::vector<std::string> columns;

    auto* simulate = app.add_subcommand("simulate", "transient run: netlist + config -> trace.csv");
    simulate->add_option("--netlist", netlist)->required();
    simulate->add_option("--config", config)->required();
    common(simulate);

    auto* spike = app.add_subcommand("spike", "spike and decay metrics from a trace CSV");
    spike->add_option("--trace", trace)->required();
    spike->add_option("--config", config);
    spike->add_option("--column", columns, "column(s) to analyse; several are summed");
    common(spike);

    auto* hyst = app.add_subcommand("hysteresis", "loop area over a frequency sweep");
    hyst->add_option("--params", params)->required();
    hyst->add_option("--config", config)->required();
    common(hyst);

    auto* prof = app.add_subcommand("profile", "d.c. conduction profile");
    prof->add_option("--params", params)->required();
    prof->add_option("--config", config)->required();
    common(prof);

    auto* compose = app.add_subcommand("compose", "generate a note sequence from a seed melody");
    compose->add_option("--seed-file", seed_file)->required();
    compose->add_option("--profile", profile)->required();
    compose->add_option("--config", config)->required();
    common(compose);

    auto* tmaze = app.add_subcommand("tmaze", "T-maze rule-switch experiment");
    tmaze->add_option("--config", config)->required();
    common(tmaze);

    auto* sweep = app.add_subcommand("sweep", "regenerate the reference three-memristor and T-maze parameters");
    common(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    run.out = out_dir;
    if (sub->count("--seed")) run.seed = seed;

    try {
        fs::create_directories(run.out);
        if (sub == simulate)
            cmd_simulate(run, netlist, config);
        else if (sub == spike)
            cmd_spike(run, trace, config.empty() ? std::nullopt : std::optional<fs::path>(config), columns);
        else if (sub == hyst)
            cmd_hysteresis(run, params, config);
        else if (sub == prof)
            cmd_profile(run, params, config);
        else if (sub == compose)
            cmd_compose(run, seed_file, profile, config);
        else if (sub == tmaze)
            cmd_tmaze(run, config);
        else
            cmd_sweep(run);
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
