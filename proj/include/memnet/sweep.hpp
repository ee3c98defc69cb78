#pragma once

// Parameter sweeps that locate the shipped reference configurations: the
// three-memristor circuit and the T-maze controller. Both are deterministic;
// candidates are evaluated concurrently and reported in grid order.

#include <algorithm>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "circuit.hpp"
#include "device.hpp"
#include "tmaze.hpp"

namespace memnet {

namespace detail {

/// Maps f over items, running up to hardware_concurrency tasks at a time.
template <typename T, typename F>
auto parallel_map(const std::vector<T>& items, F f) {
    using R = decltype(f(items.front()));
    std::vector<R> out;
    out.reserve(items.size());
    const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < items.size(); start += width) {
        std::vector<std::future<R>> batch;
        for (std::size_t k = start; k < std::min(items.size(), start + width); ++k)
            batch.push_back(std::async(std::launch::async, f, std::cref(items[k])));
        for (auto& fut : batch) out.push_back(fut.get());
    }
    return out;
}

}  // namespace detail

// Three-memristor circuit -------------------------------------------------

/// Triangle between the driven node `src`, internal node `mid` and ground:
/// m1 src->mid and m2 mid->gnd form the series path, m3 bridges src->gnd.
inline Netlist three_mem_netlist(const DeviceParams& series, const DeviceParams& lower, const DeviceParams& bridge,
                                 double drive = 1.0) {
    Netlist n;
    n.node_ids = {"gnd", "src", "mid"};
    n.ground = "gnd";
    n.branches.push_back({"m1", "src", "mid", MemristorBranch{series, 0.5}});
    n.branches.push_back({"m2", "mid", "gnd", MemristorBranch{lower, 0.5}});
    n.branches.push_back({"m3", "src", "gnd", MemristorBranch{bridge, 0.5}});
    n.sources.push_back({"src", dc_waveform(drive)});
    return n;
}

struct ThreeMemCandidate {
    double noise_amp = 0.0;
    double kappa = 1.0;
    double gamma = 0.01;
    int lower_polarity = 1;
};

struct ThreeMemOutcome {
    ThreeMemCandidate candidate;
    std::size_t min_spikes = 0;         // over evaluation seeds
    std::size_t min_negative = 0;       // negative source-current samples
    double max_kcl_residual = 0.0;
    bool passes = false;
};

struct ThreeMemSweepSpec {
    DeviceParams base;
    SimConfig sim{1e-3, 120.0, 1e-9, 1, 1};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<double> noise_amps{0.0, 0.001, 0.002, 0.003, 0.004, 0.005, 0.0075, 0.01};
    std::vector<double> kappas{1.0, 2.0};
    std::vector<double> gammas{0.01, 0.02};
    std::vector<int> lower_polarities{1, -1};
    std::size_t min_spikes = 5;
    SpikeOptions spikes;
};

inline Netlist three_mem_from_candidate(const DeviceParams& base, const ThreeMemCandidate& c) {
    DeviceParams p = base;
    p.noise_amp = c.noise_amp;
    p.kappa = c.kappa;
    p.gamma = c.gamma;
    DeviceParams lower = p;
    lower.polarity = c.lower_polarity;
    return three_mem_netlist(p, lower, p);
}

inline ThreeMemOutcome evaluate_three_mem(const ThreeMemSweepSpec& spec, const ThreeMemCandidate& c) {
    ThreeMemOutcome out{c, SIZE_MAX, SIZE_MAX, 0.0, false};
    const Netlist n = three_mem_from_candidate(spec.base, c);
    for (auto seed : spec.seeds) {
        SimConfig cfg = spec.sim;
        cfg.rng_seed = seed;
        const Trace tr = run_transient(n, cfg);
        const auto is = source_current(n, tr, "src");
        out.min_spikes = std::min(out.min_spikes, detect_spikes(tr.times, is, spec.spikes).size());
        out.min_negative = std::min<std::size_t>(
            out.min_negative, static_cast<std::size_t>(std::count_if(is.begin(), is.end(), [](double v) { return v < 0.0; })));
        for (double r : kcl_residuals(n, tr)) out.max_kcl_residual = std::max(out.max_kcl_residual, r);
    }
    out.passes = out.min_spikes >= spec.min_spikes && out.min_negative >= 1;
    return out;
}

struct ThreeMemSweepResult {
    std::vector<ThreeMemOutcome> outcomes;  // grid order
    std::optional<ThreeMemOutcome> selected;
    Netlist reference;
};

/// Grid ordered by ascending noise, so the selection is the quietest
/// candidate that passes on every evaluation seed.
inline ThreeMemSweepResult sweep_three_mem(const ThreeMemSweepSpec& spec = {}) {
    std::vector<ThreeMemCandidate> grid;
    for (double noise : spec.noise_amps)
        for (double kappa : spec.kappas)
            for (double gamma : spec.gammas)
                for (int pol : spec.lower_polarities) grid.push_back({noise, kappa, gamma, pol});
    ThreeMemSweepResult res;
    res.outcomes = detail::parallel_map(grid, [&](const ThreeMemCandidate& c) { return evaluate_three_mem(spec, c); });
    for (const auto& o : res.outcomes)
        if (o.passes) {
            res.selected = o;
            res.reference = three_mem_from_candidate(spec.base, o.candidate);
            break;
        }
    return res;
}

// T-maze controller -------------------------------------------------------

struct MazeCandidate {
    double reward_amplitude = 1.0;
    double mobility_gain = 5.0;
    double state_weight = 1.0;
};

struct MazeOutcome {
    MazeCandidate candidate;
    std::size_t seeds_trained = 0;  // pre-switch accuracy >= bar
    double mean_pre_accuracy = 0.0;
    double mean_latency = 0.0;      // unavailable counts as (trials - switch_at + 1)
    std::size_t latency_unavailable = 0;
    bool passes = false;
};

struct MazeSweepSpec {
    DeviceParams base{100.0, 1000.0, 5.0, 1, 0.8, 1.0, 0.01, 0.0005, 1};
    double hub_ohms = 100.0;
    Waveform base_drive = sine_waveform(0.5, 2.0 * M_PI);
    MazeConfig config;
    std::vector<std::uint64_t> seeds = [] {
        std::vector<std::uint64_t> s;
        for (std::uint64_t k = 1; k <= 20; ++k) s.push_back(k);
        return s;
    }();
    std::vector<double> reward_amplitudes{0.5, 1.0};
    std::vector<double> mobility_gains{2.0, 5.0, 10.0};
    std::vector<double> state_weights{0.5, 1.0, 2.0};
    double accuracy_bar = 0.8;
    std::size_t accuracy_window = 50;
    std::size_t min_seeds = 15;
};

/// Two inputs, each feeding a two-memristor group into a shared hub that
/// returns to ground through a resistor.
inline ControllerNet reference_controller(const DeviceParams& p, double hub_ohms, const Waveform& base_drive) {
    ControllerNet c;
    Netlist& n = c.netlist;
    n.node_ids = {"gnd", "in_l", "in_r", "hub"};
    n.ground = "gnd";
    n.branches.push_back({"l1", "in_l", "hub", MemristorBranch{p, 0.5}});
    n.branches.push_back({"l2", "in_l", "hub", MemristorBranch{p, 0.5}});
    n.branches.push_back({"r1", "in_r", "hub", MemristorBranch{p, 0.5}});
    n.branches.push_back({"r2", "in_r", "hub", MemristorBranch{p, 0.5}});
    n.branches.push_back({"rh", "hub", "gnd", ResistorBranch{hub_ohms}});
    n.sources = {{"in_l", dc_waveform(0.0)}, {"in_r", dc_waveform(0.0)}};
    c.left_group = {"l1", "l2"};
    c.right_group = {"r1", "r2"};
    c.left_input = "in_l";
    c.right_input = "in_r";
    c.base_drive = base_drive;
    return c;
}

struct MazeReference {
    ControllerNet controller;
    MazeConfig config;
};

inline MazeReference maze_from_candidate(const MazeSweepSpec& spec, const MazeCandidate& c) {
    DeviceParams p = spec.base;
    p.mobility_gain = c.mobility_gain;
    MazeConfig cfg = spec.config;
    cfg.reward_pulse.amplitude = c.reward_amplitude;
    cfg.readout.state_weight = c.state_weight;
    return {reference_controller(p, spec.hub_ohms, spec.base_drive), cfg};
}

struct ArmStats {
    double mean_latency = 0.0;  // over runs where the criterion was reached
    std::size_t reached = 0;
    std::size_t runs = 0;
};

inline ArmStats latency_stats(const std::vector<TrialLog>& logs) {
    ArmStats s;
    s.runs = logs.size();
    for (const auto& log : logs)
        if (auto l = switch_latency(log)) {
            s.mean_latency += static_cast<double>(*l);
            ++s.reached;
        }
    if (s.reached) s.mean_latency /= static_cast<double>(s.reached);
    return s;
}

inline std::vector<TrialLog> run_seeds(const ControllerNet& controller, MazeConfig config,
                                       const std::vector<std::uint64_t>& seeds) {
    return detail::parallel_map(seeds, [&](std::uint64_t seed) {
        MazeConfig c = config;
        c.rng_seed = seed;
        return run_experiment(controller, c);
    });
}

inline MazeOutcome evaluate_maze(const MazeSweepSpec& spec, const MazeCandidate& cand) {
    const auto ref = maze_from_candidate(spec, cand);
    MazeOutcome out{cand};
    const std::size_t begin = ref.config.switch_at >= spec.accuracy_window ? ref.config.switch_at - spec.accuracy_window : 0;
    const double penalty = static_cast<double>(ref.config.trials - std::min(ref.config.trials, ref.config.switch_at) + 1);
    for (auto seed : spec.seeds) {
        MazeConfig c = ref.config;
        c.rng_seed = seed;
        const auto log = run_experiment(ref.controller, c);
        const double acc = accuracy(log, begin, ref.config.switch_at);
        out.mean_pre_accuracy += acc;
        if (acc >= spec.accuracy_bar) ++out.seeds_trained;
        if (auto l = switch_latency(log))
            out.mean_latency += static_cast<double>(*l);
        else {
            out.mean_latency += penalty;
            ++out.latency_unavailable;
        }
    }
    out.mean_pre_accuracy /= static_cast<double>(spec.seeds.size());
    out.mean_latency /= static_cast<double>(spec.seeds.size());
    out.passes = out.seeds_trained >= spec.min_seeds;
    return out;
}

struct MazeSweepResult {
    std::vector<MazeOutcome> outcomes;
    std::optional<MazeOutcome> selected;
    std::optional<MazeReference> reference;
};

/// Among candidates meeting the trainability bar, selects the one with the
/// lowest mean post-switch latency; ties keep grid order.
inline MazeSweepResult sweep_maze(const MazeSweepSpec& spec = {}) {
    std::vector<MazeCandidate> grid;
    for (double a : spec.reward_amplitudes)
        for (double m : spec.mobility_gains)
            for (double w : spec.state_weights) grid.push_back({a, m, w});
    MazeSweepResult res;
    res.outcomes = detail::parallel_map(grid, [&](const MazeCandidate& c) { return evaluate_maze(spec, c); });
    for (const auto& o : res.outcomes)
        if (o.passes && (!res.selected || o.mean_latency < res.selected->mean_latency)) res.selected = o;
    if (res.selected) res.reference = maze_from_candidate(spec, res.selected->candidate);
    return res;
}

inline nlohmann::json maze_reference_json(const MazeReference& ref) {
    nlohmann::json j = ref.config;
    j["controller"] = ref.controller;
    return j;
}

}  // namespace memnet
