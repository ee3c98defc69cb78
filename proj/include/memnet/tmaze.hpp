#pragma once

// Binary T-maze driven by a memristor controller. Each trial drives the
// network for a decision window, reads a score from each of two branch
// groups, chooses the higher-scoring side, then pulses the input of the
// rewarded side's group. Device state persists across trials.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "circuit.hpp"
#include "error.hpp"
#include "netlist.hpp"
#include "rng.hpp"
#include "waveform.hpp"

namespace memnet {

enum class Side { left, right };

inline Side opposite(Side s) { return s == Side::left ? Side::right : Side::left; }
inline const char* to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Side side_from_string(const std::string& s) {
    if (s == "left") return Side::left;
    if (s == "right") return Side::right;
    throw InvalidInput("expected 'left' or 'right', got '" + s + "'");
}

struct Broadcast {
    bool on = false;
    double amplitude = 0.0;
    double omega = 0.0;
};

struct RewardPulse {
    double amplitude = 1.0;
    double duration = 0.2;
};

/// At least `correct` of the last `window` trials.
struct Criterion {
    std::size_t correct = 9;
    std::size_t window = 10;
};

/// Group score = sum over branches of
///   spike_weight * spike count + transient_weight * mean |s| + state_weight * mean x.
struct ReadoutWeights {
    double spike_weight = 1.0;
    double transient_weight = 1.0;
    double state_weight = 1.0;
};

struct MazeConfig {
    std::size_t trials = 400;
    std::size_t switch_at = 200;
    Side rule_initial = Side::left;
    double decision_window = 2.0;
    Broadcast broadcast;
    RewardPulse reward_pulse;
    Criterion criterion;
    std::uint64_t rng_seed = 0;
    double dt = 0.005;
    double solve_tolerance = 1e-9;
    ReadoutWeights readout;
    SpikeOptions spikes;
};

struct ControllerNet {
    Netlist netlist;
    std::vector<std::string> left_group, right_group;
    std::string left_input, right_input;
    Waveform base_drive;
};

inline void validate(const MazeConfig& c) {
    if (c.trials < 1) throw InvalidInput("maze config: trials must be >= 1");
    if (c.switch_at < 1) throw InvalidInput("maze config: switch_at must be >= 1");
    if (!(c.decision_window > 0.0)) throw InvalidInput("maze config: decision_window must be > 0");
    if (!(c.dt > 0.0) || !(c.dt < c.decision_window)) throw InvalidInput("maze config: require 0 < dt < decision_window");
    if (!(c.reward_pulse.duration >= 0.0) || !std::isfinite(c.reward_pulse.amplitude))
        throw InvalidInput("maze config: reward_pulse needs duration >= 0 and a finite amplitude");
    if (c.criterion.window < 1 || c.criterion.correct < 1 || c.criterion.correct > c.criterion.window)
        throw InvalidInput("maze config: criterion needs 1 <= correct <= window");
    if (c.broadcast.on && (!std::isfinite(c.broadcast.amplitude) || !std::isfinite(c.broadcast.omega)))
        throw InvalidInput("maze config: broadcast fields must be finite");
}

inline void validate(const ControllerNet& c) {
    validate(c.netlist);
    if (c.left_group.empty() || c.right_group.empty()) throw InvalidInput("controller: groups must be non-empty");
    std::set<std::string> seen;
    for (const auto* group : {&c.left_group, &c.right_group})
        for (const auto& id : *group) {
            const auto& b = c.netlist.branches[c.netlist.branch_index(id)];
            if (!b.is_memristor()) throw InvalidInput("controller: group branch '" + id + "' is not a memristor");
            if (!seen.insert(id).second)
                throw InvalidInput("controller: branch '" + id + "' appears in both groups or twice");
        }
    if (c.left_input == c.right_input) throw InvalidInput("controller: input nodes must differ");
    for (const auto& node : {c.left_input, c.right_input}) {
        const bool driven = std::any_of(c.netlist.sources.begin(), c.netlist.sources.end(),
                                        [&](const Source& s) { return s.node == node; });
        if (!driven) throw InvalidInput("controller: input node '" + node + "' has no source");
    }
    validate(c.base_drive, "controller.base_drive");
}

/// Swaps the roles of the two groups and their inputs.
inline ControllerNet mirrored(ControllerNet c) {
    std::swap(c.left_group, c.right_group);
    std::swap(c.left_input, c.right_input);
    return c;
}

struct TrialRecord {
    std::size_t trial = 0;
    Side rule = Side::left;
    Side choice = Side::left;
    bool correct = false;
    double left_score = 0.0;
    double right_score = 0.0;
};

struct TrialLog {
    std::vector<TrialRecord> records;
    std::size_t switch_at = 0;
    Criterion criterion;
    std::optional<std::size_t> pre_switch_trials_to_criterion;
    std::optional<std::size_t> post_switch_trials_to_criterion;
};

namespace detail {

/// First end index j >= start such that the full window ending at j lies at
/// or after `start` and meets the criterion; returns j - start.
inline std::optional<std::size_t> trials_to_criterion(const std::vector<TrialRecord>& records, std::size_t start,
                                                      std::size_t end, const Criterion& crit) {
    end = std::min(end, records.size());
    std::size_t hits = 0;
    for (std::size_t j = start; j < end; ++j) {
        hits += records[j].correct ? 1 : 0;
        if (j >= start + crit.window) hits -= records[j - crit.window].correct ? 1 : 0;
        if (j + 1 >= start + crit.window && hits >= crit.correct) return j - start;
    }
    return std::nullopt;
}

}  // namespace detail

inline std::optional<std::size_t> switch_latency(const TrialLog& log) {
    if (log.switch_at >= log.records.size()) return std::nullopt;
    return detail::trials_to_criterion(log.records, log.switch_at, log.records.size(), log.criterion);
}

/// Share of correct trials in [begin, end).
inline double accuracy(const TrialLog& log, std::size_t begin, std::size_t end) {
    end = std::min(end, log.records.size());
    if (begin >= end) return 0.0;
    std::size_t hits = 0;
    for (std::size_t k = begin; k < end; ++k) hits += log.records[k].correct ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(end - begin);
}

/// A controller with persistent device state plus the tie-break stream.
class MazeAgent {
public:
    MazeAgent(ControllerNet controller, MazeConfig config)
        : controller_(std::move(controller)), config_(config),
          sim_((validate(controller_), validate(config_), controller_.netlist), config_.solve_tolerance,
               config_.rng_seed),
          tie_rng_(config_.rng_seed ^ 0x9e3779b97f4a7c15ull) {
        const auto& n = controller_.netlist;
        for (const auto& id : controller_.left_group) left_.push_back(n.branch_index(id));
        for (const auto& id : controller_.right_group) right_.push_back(n.branch_index(id));
        for (const auto& s : n.sources) {
            const int role = s.node == controller_.left_input ? 0 : (s.node == controller_.right_input ? 1 : 2);
            source_role_.push_back(role);
        }
    }

    const Simulator& simulator() const { return sim_; }
    Simulator& simulator() { return sim_; }

    /// Decision window, readout and choice, then the reward pulse.
    TrialRecord run_trial(Side rule) {
        const auto steps = static_cast<std::size_t>(std::llround(config_.decision_window / config_.dt));
        const auto& n = controller_.netlist;
        const std::size_t nb = n.branches.size();

        std::vector<std::vector<double>> currents(nb);
        std::vector<double> abs_s(nb, 0.0), x_sum(nb, 0.0);
        std::vector<double> times(steps);
        std::vector<double> src(n.sources.size());
        for (std::size_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * config_.dt;
            times[k] = t;
            const double bcast =
                config_.broadcast.on ? config_.broadcast.amplitude * std::sin(config_.broadcast.omega * t) : 0.0;
            for (std::size_t s = 0; s < src.size(); ++s) {
                const double base = source_role_[s] < 2 ? eval_waveform(controller_.base_drive, t)
                                                        : eval_waveform(n.sources[s].waveform, t);
                src[s] = config_.broadcast.on ? base + bcast : base;
            }
            sim_.step(clock_ + t, config_.dt, src);
            for (std::size_t b : group_members()) {
                currents[b].push_back(sim_.branch_currents()[b]);
                abs_s[b] += std::abs(sim_.states()[b].s);
                x_sum[b] += sim_.states()[b].x;
            }
        }
        clock_ += static_cast<double>(steps) * config_.dt;

        auto score = [&](const std::vector<std::size_t>& group) {
            double total = 0.0;
            for (std::size_t b : group) {
                const double spikes = static_cast<double>(detect_spikes(times, currents[b], config_.spikes).size());
                total += config_.readout.spike_weight * spikes +
                         config_.readout.transient_weight * abs_s[b] / static_cast<double>(steps) +
                         config_.readout.state_weight * x_sum[b] / static_cast<double>(steps);
            }
            return total;
        };

        TrialRecord rec;
        rec.rule = rule;
        rec.left_score = score(left_);
        rec.right_score = score(right_);
        if (rec.left_score > rec.right_score)
            rec.choice = Side::left;
        else if (rec.right_score > rec.left_score)
            rec.choice = Side::right;
        else
            rec.choice = tie_rng_.coin() ? rule : opposite(rule);  // rule-relative, so mirroring preserves it
        rec.correct = rec.choice == rule;

        deliver_reward(rule);
        return rec;
    }

private:
    std::vector<std::size_t> group_members() const {
        std::vector<std::size_t> all = left_;
        all.insert(all.end(), right_.begin(), right_.end());
        return all;
    }

    void deliver_reward(Side rule) {
        const auto steps = static_cast<std::size_t>(std::llround(config_.reward_pulse.duration / config_.dt));
        const int target = rule == Side::left ? 0 : 1;
        std::vector<double> src(source_role_.size(), 0.0);
        for (std::size_t s = 0; s < src.size(); ++s)
            if (source_role_[s] == target) src[s] = config_.reward_pulse.amplitude;
        for (std::size_t k = 0; k < steps; ++k) sim_.step(clock_ + static_cast<double>(k) * config_.dt, config_.dt, src);
        clock_ += static_cast<double>(steps) * config_.dt;
    }

    ControllerNet controller_;
    MazeConfig config_;
    Simulator sim_;
    Rng tie_rng_;
    std::vector<std::size_t> left_, right_;
    std::vector<int> source_role_;  // 0 left input, 1 right input, 2 other
    double clock_ = 0.0;
};

inline TrialLog run_experiment(const ControllerNet& controller, const MazeConfig& config) {
    MazeAgent agent(controller, config);
    TrialLog log;
    log.switch_at = config.switch_at;
    log.criterion = config.criterion;
    log.records.reserve(config.trials);
    for (std::size_t k = 0; k < config.trials; ++k) {
        const Side rule = k < config.switch_at ? config.rule_initial : opposite(config.rule_initial);
        TrialRecord rec;
        try {
            rec = agent.run_trial(rule);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("trial " + std::to_string(k) + ": " + e.what());
        }
        rec.trial = k;
        log.records.push_back(rec);
    }
    log.pre_switch_trials_to_criterion =
        detail::trials_to_criterion(log.records, 0, config.switch_at, config.criterion);
    log.post_switch_trials_to_criterion = switch_latency(log);
    return log;
}

// I/O ----------------------------------------------------------------------

inline void write_trial_log_csv(const TrialLog& log, std::ostream& out) {
    out << "trial,rule,choice,correct,left_score,right_score\n";
    for (const auto& r : log.records)
        out << r.trial << ',' << to_string(r.rule) << ',' << to_string(r.choice) << ',' << (r.correct ? 1 : 0) << ','
            << format_double(r.left_score) << ',' << format_double(r.right_score) << '\n';
}

inline nlohmann::json trial_log_summary(const TrialLog& log) {
    auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    const std::size_t pre_begin = log.switch_at >= 50 ? log.switch_at - 50 : 0;
    return {{"trials", log.records.size()},
            {"switch_at", log.switch_at},
            {"pre_switch_trials_to_criterion", opt(log.pre_switch_trials_to_criterion)},
            {"post_switch_trials_to_criterion", opt(log.post_switch_trials_to_criterion)},
            {"pre_switch_accuracy_last50", accuracy(log, pre_begin, log.switch_at)},
            {"accuracy", accuracy(log, 0, log.records.size())}};
}

inline void to_json(nlohmann::json& j, const MazeConfig& c) {
    j = nlohmann::json{{"trials", c.trials},
                       {"switch_at", c.switch_at},
                       {"rule_initial", to_string(c.rule_initial)},
                       {"decision_window", c.decision_window},
                       {"reward_pulse", {{"amplitude", c.reward_pulse.amplitude}, {"duration", c.reward_pulse.duration}}},
                       {"criterion", {{"correct", c.criterion.correct}, {"window", c.criterion.window}}},
                       {"rng_seed", c.rng_seed},
                       {"dt", c.dt},
                       {"solve_tolerance", c.solve_tolerance},
                       {"readout",
                        {{"spike_weight", c.readout.spike_weight},
                         {"transient_weight", c.readout.transient_weight},
                         {"state_weight", c.readout.state_weight}}},
                       {"spike_options", c.spikes}};
    if (c.broadcast.on)
        j["broadcast"] = {{"variant", "sine"}, {"amplitude", c.broadcast.amplitude}, {"omega", c.broadcast.omega}};
    else
        j["broadcast"] = {{"variant", "off"}};
}

inline MazeConfig maze_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidInput("maze config: expected a JSON object");
    MazeConfig c;
    auto count = [&](const nlohmann::json& obj, const char* key, std::size_t& out, const std::string& path) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_number_integer() || obj.at(key).get<long long>() < 0)
            throw InvalidInput(path + "." + key + ": must be a non-negative integer");
        out = obj.at(key).get<std::size_t>();
    };
    count(j, "trials", c.trials, "maze");
    count(j, "switch_at", c.switch_at, "maze");
    if (j.contains("rule_initial")) {
        if (!j.at("rule_initial").is_string()) throw InvalidInput("maze.rule_initial: must be a string");
        c.rule_initial = side_from_string(j.at("rule_initial").get<std::string>());
    }
    c.decision_window = detail::json_number(j, "decision_window", "maze", c.decision_window, false);
    c.dt = detail::json_number(j, "dt", "maze", c.dt, false);
    c.solve_tolerance = detail::json_number(j, "solve_tolerance", "maze", c.solve_tolerance, false);
    if (j.contains("rng_seed")) {
        if (!j.at("rng_seed").is_number_integer()) throw InvalidInput("maze.rng_seed: must be an integer");
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    }
    if (j.contains("broadcast")) {
        const auto& b = j.at("broadcast");
        if (!b.is_object() || !b.contains("variant")) throw InvalidInput("maze.broadcast: expected {variant: ...}");
        const auto v = b.at("variant").get<std::string>();
        if (v == "off") {
            c.broadcast = {};
        } else if (v == "sine") {
            c.broadcast = {true, detail::json_number(b, "amplitude", "maze.broadcast", 0.0, true),
                           detail::json_number(b, "omega", "maze.broadcast", 0.0, true)};
        } else {
            throw InvalidInput("maze.broadcast.variant: expected 'off' or 'sine'");
        }
    }
    if (j.contains("reward_pulse")) {
        const auto& r = j.at("reward_pulse");
        if (!r.is_object()) throw InvalidInput("maze.reward_pulse: expected an object");
        c.reward_pulse.amplitude = detail::json_number(r, "amplitude", "maze.reward_pulse", c.reward_pulse.amplitude, false);
        c.reward_pulse.duration = detail::json_number(r, "duration", "maze.reward_pulse", c.reward_pulse.duration, false);
    }
    if (j.contains("criterion")) {
        const auto& r = j.at("criterion");
        if (!r.is_object()) throw InvalidInput("maze.criterion: expected an object");
        count(r, "correct", c.criterion.correct, "maze.criterion");
        count(r, "window", c.criterion.window, "maze.criterion");
    }
    if (j.contains("readout")) {
        const auto& r = j.at("readout");
        if (!r.is_object()) throw InvalidInput("maze.readout: expected an object");
        c.readout.spike_weight = detail::json_number(r, "spike_weight", "maze.readout", c.readout.spike_weight, false);
        c.readout.transient_weight =
            detail::json_number(r, "transient_weight", "maze.readout", c.readout.transient_weight, false);
        c.readout.state_weight = detail::json_number(r, "state_weight", "maze.readout", c.readout.state_weight, false);
    }
    if (j.contains("spike_options")) c.spikes = j.at("spike_options").get<SpikeOptions>();
    validate(c);
    return c;
}

inline void to_json(nlohmann::json& j, const ControllerNet& c) {
    j = nlohmann::json{{"netlist", c.netlist},
                       {"left_group", c.left_group},
                       {"right_group", c.right_group},
                       {"left_input", c.left_input},
                       {"right_input", c.right_input},
                       {"base_drive", c.base_drive}};
}

/// `netlist` may be an inline object or a path relative to `base_dir`.
inline ControllerNet controller_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw InvalidInput("controller: expected a JSON object");
    for (const char* key : {"netlist", "left_group", "right_group", "left_input", "right_input", "base_drive"})
        if (!j.contains(key)) throw InvalidInput(std::string("controller.") + key + ": missing");
    ControllerNet c;
    const auto& jn = j.at("netlist");
    if (jn.is_string()) {
        const auto path = base_dir / jn.get<std::string>();
        std::ifstream in(path);
        if (!in) throw InvalidInput("controller.netlist: cannot open '" + path.string() + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        c.netlist = parse_netlist(buf.str());
    } else {
        c.netlist = netlist_from_json(jn);
    }
    try {
        c.left_group = j.at("left_group").get<std::vector<std::string>>();
        c.right_group = j.at("right_group").get<std::vector<std::string>>();
        c.left_input = j.at("left_input").get<std::string>();
        c.right_input = j.at("right_input").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("controller: ") + e.what());
    }
    c.base_drive = parse_waveform(j.at("base_drive"), "controller.base_drive");
    validate(c);
    return c;
}

}  // namespace memnet
