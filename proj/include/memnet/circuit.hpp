#pragma once

// Transient simulation of memristor networks. Each step freezes device
// state, stamps every branch as an affine conductance, solves the nodal
// system with ideal sources eliminated, then advances every device with its
// solved branch voltage.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "device.hpp"
#include "error.hpp"
#include "netlist.hpp"
#include "rng.hpp"

namespace memnet {

struct SimConfig {
    double dt = 1e-3;
    double t_end = 1.0;
    double solve_tolerance = 1e-9;
    std::uint64_t rng_seed = 0;
    std::size_t record_every = 1;

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

inline void validate(const SimConfig& c) {
    if (!(c.dt > 0.0) || !(c.dt < c.t_end) || !std::isfinite(c.t_end))
        throw InvalidInput("sim config: require 0 < dt < t_end");
    if (!(c.solve_tolerance > 0.0)) throw InvalidInput("sim config: solve_tolerance must be > 0");
    if (c.record_every < 1) throw InvalidInput("sim config: record_every must be >= 1");
}

inline void to_json(nlohmann::json& j, const SimConfig& c) {
    j = nlohmann::json{{"dt", c.dt},
                       {"t_end", c.t_end},
                       {"solve_tolerance", c.solve_tolerance},
                       {"rng_seed", c.rng_seed},
                       {"record_every", c.record_every}};
}

inline void from_json(const nlohmann::json& j, SimConfig& c) {
    if (!j.is_object()) throw InvalidInput("sim config: expected a JSON object");
    c.dt = detail::json_number(j, "dt", "sim config", c.dt, false);
    c.t_end = detail::json_number(j, "t_end", "sim config", c.t_end, false);
    c.solve_tolerance = detail::json_number(j, "solve_tolerance", "sim config", c.solve_tolerance, false);
    if (j.contains("rng_seed")) {
        if (!j.at("rng_seed").is_number_unsigned() && !j.at("rng_seed").is_number_integer())
            throw InvalidInput("sim config.rng_seed: must be an integer");
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    }
    if (j.contains("record_every")) {
        if (!j.at("record_every").is_number_integer() || j.at("record_every").get<long long>() < 1)
            throw InvalidInput("sim config.record_every: must be a positive integer");
        c.record_every = j.at("record_every").get<std::size_t>();
    }
    validate(c);
}

/// Number of recorded rows: floor(t_end / (dt * record_every)) + 1.
inline std::size_t record_count(const SimConfig& c) {
    const double q = c.t_end / (c.dt * static_cast<double>(c.record_every));
    return static_cast<std::size_t>(std::floor(q + 1e-9)) + 1;
}

struct Trace {
    std::vector<std::string> node_names;
    std::vector<std::string> branch_ids;
    std::vector<double> times;
    std::vector<std::vector<double>> node_voltages;    // [record][node]
    std::vector<std::vector<double>> branch_currents;  // [record][branch]
    std::string netlist_hash;
    SimConfig config;

    std::vector<double> node_series(std::size_t node) const {
        std::vector<double> out;
        out.reserve(times.size());
        for (const auto& row : node_voltages) out.push_back(row[node]);
        return out;
    }

    std::vector<double> branch_series(std::size_t branch) const {
        std::vector<double> out;
        out.reserve(times.size());
        for (const auto& row : branch_currents) out.push_back(row[branch]);
        return out;
    }
};

/// Dense nodal system for a fixed topology. Ground and source-driven nodes
/// are eliminated; the remaining nodes are unknowns.
class NodalSolver {
public:
    explicit NodalSolver(const Netlist& n) : netlist_(&n) {
        const std::size_t nn = n.node_ids.size();
        ground_ = n.ground_index();
        unknown_.assign(nn, -1);
        source_node_.reserve(n.sources.size());
        std::vector<bool> fixed(nn, false);
        fixed[ground_] = true;
        for (const auto& s : n.sources) {
            source_node_.push_back(n.node_index(s.node));
            fixed[source_node_.back()] = true;
        }
        for (std::size_t k = 0; k < nn; ++k)
            if (!fixed[k]) unknown_[k] = static_cast<int>(n_unknown_++);
        for (const auto& b : n.branches) {
            from_.push_back(n.node_index(b.from));
            to_.push_back(n.node_index(b.to));
        }
        a_.resize(static_cast<Eigen::Index>(n_unknown_), static_cast<Eigen::Index>(n_unknown_));
        rhs_.resize(static_cast<Eigen::Index>(n_unknown_));
    }

    std::size_t unknown_count() const { return n_unknown_; }
    std::size_t branch_from(std::size_t b) const { return from_[b]; }
    std::size_t branch_to(std::size_t b) const { return to_[b]; }

    /// Branch current convention: i_b = g_b * (V_from - V_to) + j_b, flowing
    /// from -> to. Returns all node voltages; ground is exactly 0.
    std::vector<double> solve(std::span<const double> conductances, std::span<const double> injections,
                              std::span<const double> source_voltages, double tolerance) {
        const auto& n = *netlist_;
        if (conductances.size() != n.branches.size() || injections.size() != n.branches.size())
            throw InvalidInput("solve: need one conductance and one injection per branch");
        if (source_voltages.size() != n.sources.size()) throw InvalidInput("solve: need one voltage per source");

        std::vector<double> v(n.node_ids.size(), 0.0);
        for (std::size_t s = 0; s < source_node_.size(); ++s) v[source_node_[s]] = source_voltages[s];
        if (n_unknown_ == 0) return v;

        check_connected(conductances);
        a_.setZero();
        rhs_.setZero();
        for (std::size_t b = 0; b < from_.size(); ++b) {
            const double g = conductances[b];
            const double j = injections[b];
            const int ua = unknown_[from_[b]];
            const int ub = unknown_[to_[b]];
            if (ua >= 0) {
                a_(ua, ua) += g;
                rhs_(ua) -= j;
                if (ub >= 0)
                    a_(ua, ub) -= g;
                else
                    rhs_(ua) += g * v[to_[b]];
            }
            if (ub >= 0) {
                a_(ub, ub) += g;
                rhs_(ub) += j;
                if (ua >= 0)
                    a_(ub, ua) -= g;
                else
                    rhs_(ub) += g * v[from_[b]];
            }
        }

        lu_.compute(a_);
        Eigen::VectorXd x = lu_.solve(rhs_);
        for (int pass = 0; pass < 3; ++pass) {
            const Eigen::VectorXd r = rhs_ - a_ * x;
            if (!x.allFinite()) break;
            if (r.lpNorm<Eigen::Infinity>() <= tolerance) {
                for (std::size_t k = 0; k < unknown_.size(); ++k)
                    if (unknown_[k] >= 0) v[k] = x(unknown_[k]);
                return v;
            }
            x += lu_.solve(r);
        }
        throw NumericalFailure("solve: nodal residual above tolerance (ill-conditioned or singular system)");
    }

private:
    void check_connected(std::span<const double> conductances) const {
        const auto& n = *netlist_;
        const std::size_t nn = n.node_ids.size();
        std::vector<bool> reached(nn, false);
        std::queue<std::size_t> frontier;
        for (std::size_t k = 0; k < nn; ++k)
            if (unknown_[k] < 0) {
                reached[k] = true;
                frontier.push(k);
            }
        while (!frontier.empty()) {
            const std::size_t node = frontier.front();
            frontier.pop();
            for (std::size_t b = 0; b < from_.size(); ++b) {
                if (!(conductances[b] != 0.0)) continue;
                std::size_t other;
                if (from_[b] == node)
                    other = to_[b];
                else if (to_[b] == node)
                    other = from_[b];
                else
                    continue;
                if (!reached[other]) {
                    reached[other] = true;
                    frontier.push(other);
                }
            }
        }
        std::string floating;
        for (std::size_t k = 0; k < nn; ++k)
            if (!reached[k]) floating += (floating.empty() ? "" : ", ") + n.node_ids[k];
        if (!floating.empty())
            throw NumericalFailure("solve: singular system, nodes not connected to ground or a source: " + floating);
    }

    const Netlist* netlist_;
    std::size_t ground_ = 0;
    std::vector<int> unknown_;
    std::size_t n_unknown_ = 0;
    std::vector<std::size_t> source_node_;
    std::vector<std::size_t> from_, to_;
    Eigen::MatrixXd a_;
    Eigen::VectorXd rhs_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

inline std::vector<double> solve_operating_point(const Netlist& netlist, std::span<const double> conductances,
                                                 std::span<const double> injections,
                                                 std::span<const double> source_voltages,
                                                 double tolerance = 1e-9) {
    NodalSolver solver(netlist);
    return solver.solve(conductances, injections, source_voltages, tolerance);
}

/// Stateful stepper over a netlist. Device state persists across calls, so
/// callers can drive the same network through several phases.
class Simulator {
public:
    Simulator(Netlist netlist, double solve_tolerance, std::uint64_t rng_seed)
        : netlist_(std::move(netlist)), solver_(netlist_), tolerance_(solve_tolerance), rng_(rng_seed) {
        validate(netlist_);
        for (const auto& b : netlist_.branches) {
            if (const auto* m = std::get_if<MemristorBranch>(&b.kind))
                states_.push_back(DeviceState::fresh(m->x0));
            else
                states_.push_back(DeviceState{});
        }
        const std::size_t nb = netlist_.branches.size();
        g_.resize(nb);
        j_.resize(nb);
        noise_.resize(nb);
        currents_.assign(nb, 0.0);
        voltages_.assign(netlist_.node_ids.size(), 0.0);
    }

    const Netlist& netlist() const { return netlist_; }
    const std::vector<DeviceState>& states() const { return states_; }
    std::vector<DeviceState>& states() { return states_; }
    const std::vector<double>& node_voltages() const { return voltages_; }
    const std::vector<double>& branch_currents() const { return currents_; }

    std::vector<double> source_voltages_at(double t) const {
        std::vector<double> out;
        out.reserve(netlist_.sources.size());
        for (const auto& s : netlist_.sources) out.push_back(eval_waveform(s.waveform, t));
        return out;
    }

    /// One step of length dt with the given source voltages. `t` only labels
    /// errors.
    void step(double t, double dt, std::span<const double> source_voltages) {
        const auto& branches = netlist_.branches;
        for (std::size_t b = 0; b < branches.size(); ++b) {
            if (const auto* m = std::get_if<MemristorBranch>(&branches[b].kind)) {
                noise_[b] = draw_noise(m->params, rng_);
                const auto c = companion(m->params, states_[b], dt, noise_[b]);
                g_[b] = c.conductance;
                j_[b] = c.injection;
            } else {
                g_[b] = 1.0 / std::get<ResistorBranch>(branches[b].kind).ohms;
                j_[b] = 0.0;
            }
        }
        try {
            voltages_ = solver_.solve(g_, j_, source_voltages, tolerance_);
        } catch (const NumericalFailure& e) {
            throw NumericalFailure(std::string(e.what()) + " (t = " + std::to_string(t) + " s)");
        }
        for (std::size_t b = 0; b < branches.size(); ++b) {
            const double v = voltages_[solver_.branch_from(b)] - voltages_[solver_.branch_to(b)];
            if (const auto* m = std::get_if<MemristorBranch>(&branches[b].kind)) {
                StepResult r;
                try {
                    r = step_device(m->params, states_[b], v, dt, noise_[b]);
                } catch (const Error& e) {
                    throw NumericalFailure("branch '" + branches[b].id + "' at t = " + std::to_string(t) +
                                           " s: " + e.what());
                }
                if (!std::isfinite(r.current) || !std::isfinite(r.state.s) || !std::isfinite(r.state.charge))
                    throw NumericalFailure("branch '" + branches[b].id + "' became non-finite at t = " +
                                           std::to_string(t) + " s");
                states_[b] = r.state;
                currents_[b] = r.current;
            } else {
                currents_[b] = g_[b] * v;
            }
        }
    }

private:
    Netlist netlist_;
    NodalSolver solver_;
    double tolerance_;
    Rng rng_;
    std::vector<DeviceState> states_;
    std::vector<double> g_, j_, noise_, currents_, voltages_;
};

inline Trace run_transient(const Netlist& netlist, const SimConfig& config) {
    validate(netlist);
    validate(config);
    Simulator sim(netlist, config.solve_tolerance, config.rng_seed);

    Trace tr;
    tr.node_names = netlist.node_ids;
    for (const auto& b : netlist.branches) tr.branch_ids.push_back(b.id);
    tr.netlist_hash = netlist_hash(netlist);
    tr.config = config;

    const std::size_t rows = record_count(config);
    const std::size_t steps = (rows - 1) * config.record_every + 1;
    tr.times.reserve(rows);
    tr.node_voltages.reserve(rows);
    tr.branch_currents.reserve(rows);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        sim.step(t, config.dt, sim.source_voltages_at(t));
        if (k % config.record_every == 0) {
            tr.times.push_back(t);
            tr.node_voltages.push_back(sim.node_voltages());
            tr.branch_currents.push_back(sim.branch_currents());
        }
    }
    return tr;
}

/// Largest |sum of branch currents leaving the node| over non-source,
/// non-ground nodes, per recorded row.
inline std::vector<double> kcl_residuals(const Netlist& n, const Trace& tr) {
    std::vector<bool> internal(n.node_ids.size(), true);
    internal[n.ground_index()] = false;
    for (const auto& s : n.sources) internal[n.node_index(s.node)] = false;
    std::vector<double> out;
    out.reserve(tr.times.size());
    for (const auto& row : tr.branch_currents) {
        std::vector<double> sum(n.node_ids.size(), 0.0);
        for (std::size_t b = 0; b < n.branches.size(); ++b) {
            sum[n.node_index(n.branches[b].from)] += row[b];
            sum[n.node_index(n.branches[b].to)] -= row[b];
        }
        double worst = 0.0;
        for (std::size_t k = 0; k < sum.size(); ++k)
            if (internal[k]) worst = std::max(worst, std::abs(sum[k]));
        out.push_back(worst);
    }
    return out;
}

/// Current delivered by the source at `node` into the network, per row.
inline std::vector<double> source_current(const Netlist& n, const Trace& tr, std::string_view node) {
    const std::size_t idx = n.node_index(node);
    std::vector<double> out;
    out.reserve(tr.times.size());
    for (const auto& row : tr.branch_currents) {
        double i = 0.0;
        for (std::size_t b = 0; b < n.branches.size(); ++b) {
            if (n.node_index(n.branches[b].from) == idx) i += row[b];
            if (n.node_index(n.branches[b].to) == idx) i -= row[b];
        }
        out.push_back(i);
    }
    return out;
}

// CSV ------------------------------------------------------------------

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_trace_csv(const Trace& tr, std::ostream& out) {
    out << 't';
    for (const auto& n : tr.node_names) out << ',' << n;
    for (const auto& b : tr.branch_ids) out << ',' << b;
    out << '\n';
    for (std::size_t r = 0; r < tr.times.size(); ++r) {
        out << format_double(tr.times[r]);
        for (double v : tr.node_voltages[r]) out << ',' << format_double(v);
        for (double i : tr.branch_currents[r]) out << ',' << format_double(i);
        out << '\n';
    }
}

/// Column-major numeric table read from a CSV with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    const std::vector<double>& column(std::string_view name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return columns[k];
        throw InvalidInput("csv: no column named '" + std::string(name) + "'");
    }
};

inline CsvTable read_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return cells;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw InvalidInput("csv: missing header");
    if (line.back() == '\r') line.pop_back();
    t.header = split(line);
    t.columns.resize(t.header.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != t.header.size())
            throw InvalidInput("csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(t.header.size()));
        for (std::size_t k = 0; k < cells.size(); ++k) {
            double v = 0.0;
            const auto* first = cells[k].data();
            const auto* last = first + cells[k].size();
            const auto res = std::from_chars(first, last, v);
            if (res.ec != std::errc{} || res.ptr != last)
                throw InvalidInput("csv: row " + std::to_string(row) + ", column '" + t.header[k] +
                                   "': not a number");
            t.columns[k].push_back(v);
        }
    }
    return t;
}

}  // namespace memnet
