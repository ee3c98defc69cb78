#pragma once

// Note-transition network whose edge weights are read from a discretised
// conduction profile indexed by how often the edge has been used.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "device.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace memnet {

using NoteSequence = std::vector<std::size_t>;

class NoteGraph {
public:
    NoteGraph(std::size_t n_notes, Profile profile, double epsilon = 0.01, std::uint64_t rng_seed = 0,
              bool invert = false)
        : n_(n_notes), profile_(std::move(profile)), epsilon_(epsilon), invert_(invert), rng_seed_(rng_seed),
          rng_(rng_seed), counts_(n_notes * n_notes, 0), weights_(n_notes * n_notes, 0.0) {
        if (n_notes < 2) throw InvalidInput("note graph: need at least 2 notes");
        if (profile_.table.size() < 2) throw InvalidInput("note graph: profile table needs at least 2 entries");
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidInput("note graph: epsilon must lie in [0, 1]");
        for (std::size_t a = 0; a < n_; ++a)
            for (std::size_t b = 0; b < n_; ++b)
                if (a != b) refresh(a, b);
    }

    std::size_t n_notes() const { return n_; }
    double epsilon() const { return epsilon_; }
    bool inverted() const { return invert_; }
    std::uint64_t rng_seed() const { return rng_seed_; }
    const Profile& profile() const { return profile_; }

    std::uint64_t count(std::size_t from, std::size_t to) const { return counts_[at(from, to)]; }
    double weight(std::size_t from, std::size_t to) const { return weights_[at(from, to)]; }

    /// Weight implied by a usage count. Saturates at the last table entry.
    double weight_for(std::uint64_t k) const {
        if (k == 0) return epsilon_;
        const auto idx = static_cast<std::size_t>(std::min<std::uint64_t>(k, profile_.table.size() - 1));
        const double w = profile_.table[idx];
        return invert_ ? std::max(epsilon_, 1.0 - w) : w;
    }

    void record_use(std::size_t from, std::size_t to) {
        ++counts_[at(from, to)];
        refresh(from, to);
    }

    void set_count(std::size_t from, std::size_t to, std::uint64_t k) {
        counts_[at(from, to)] = k;
        refresh(from, to);
    }

    /// Draws a successor of `from` with probability proportional to weight.
    std::size_t sample_next(std::size_t from) {
        double total = 0.0;
        for (std::size_t b = 0; b < n_; ++b)
            if (b != from) total += weights_[from * n_ + b];
        if (!(total > 0.0))
            throw NumericalFailure("note graph: note " + std::to_string(from) + " has no outgoing weight");
        double u = rng_.uniform() * total;
        std::size_t last = from;
        for (std::size_t b = 0; b < n_; ++b) {
            if (b == from) continue;
            const double w = weights_[from * n_ + b];
            if (w <= 0.0) continue;
            last = b;
            if (u < w) return b;
            u -= w;
        }
        return last;
    }

    friend bool operator==(const NoteGraph& a, const NoteGraph& b) {
        return a.n_ == b.n_ && a.counts_ == b.counts_ && a.weights_ == b.weights_ && a.rng_ == b.rng_;
    }

private:
    std::size_t at(std::size_t from, std::size_t to) const {
        if (from >= n_ || to >= n_) throw InvalidInput("note graph: note index out of range");
        if (from == to) throw InvalidInput("note graph: self-transitions are not edges");
        return from * n_ + to;
    }

    void refresh(std::size_t from, std::size_t to) { weights_[from * n_ + to] = weight_for(counts_[from * n_ + to]); }

    std::size_t n_;
    Profile profile_;
    double epsilon_;
    bool invert_;
    std::uint64_t rng_seed_;
    Rng rng_;
    std::vector<std::uint64_t> counts_;
    std::vector<double> weights_;
};

struct SeedResult {
    NoteGraph graph;
    bool empty_seed = false;
};

/// Counts every transition between distinct consecutive notes.
inline SeedResult seed_from_sequence(std::span<const std::size_t> seq, std::size_t n_notes, const Profile& profile,
                                     double epsilon = 0.01, std::uint64_t rng_seed = 0, bool invert = false) {
    SeedResult out{NoteGraph(n_notes, profile, epsilon, rng_seed, invert), seq.empty()};
    for (std::size_t note : seq)
        if (note >= n_notes) throw InvalidInput("seed: note index " + std::to_string(note) + " >= n_notes");
    for (std::size_t k = 1; k < seq.size(); ++k)
        if (seq[k] != seq[k - 1]) out.graph.record_use(seq[k - 1], seq[k]);
    return out;
}

/// Random walk from `start`; every traversal is recorded in the graph
/// before the next draw. The returned sequence includes `start`.
inline NoteSequence generate(NoteGraph& graph, std::size_t length, std::size_t start) {
    if (length < 1) throw InvalidInput("generate: length must be >= 1");
    if (start >= graph.n_notes()) throw InvalidInput("generate: start note out of range");
    NoteSequence out{start};
    out.reserve(length);
    std::size_t here = start;
    while (out.size() < length) {
        const std::size_t next = graph.sample_next(here);
        graph.record_use(here, next);
        out.push_back(next);
        here = next;
    }
    return out;
}

/// Normalised counts of ordered transitions a -> b (a != b), flattened over
/// the n * (n - 1) off-diagonal pairs in row-major order.
inline std::vector<double> transition_distribution(std::span<const std::size_t> seq, std::size_t n_notes) {
    std::vector<double> counts(n_notes * (n_notes - 1), 0.0);
    double total = 0.0;
    for (std::size_t k = 1; k < seq.size(); ++k) {
        const std::size_t a = seq[k - 1], b = seq[k];
        if (a == b) continue;
        if (a >= n_notes || b >= n_notes) throw InvalidInput("transition_distribution: note out of range");
        counts[a * (n_notes - 1) + (b < a ? b : b - 1)] += 1.0;
        total += 1.0;
    }
    if (total > 0.0)
        for (double& c : counts) c /= total;
    return counts;
}

/// KL(p || q) in nats. q is smoothed by adding 1e-9 to each entry and
/// renormalising; terms with p_i = 0 contribute nothing.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidInput("kl_divergence: distributions differ in length");
    double qsum = 0.0;
    for (double v : q) qsum += v + 1e-9;
    double kl = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] <= 0.0) continue;
        const double qk = (q[k] + 1e-9) / qsum;
        kl += p[k] * std::log(p[k] / qk);
    }
    return kl;
}

struct CompositionScore {
    double kl_generated = 0.0;  // KL(generated || seed)
    double kl_uniform = 0.0;    // KL(uniform || seed)
};

inline CompositionScore composition_score(std::span<const std::size_t> seed, std::span<const std::size_t> generated,
                                          std::size_t n_notes) {
    const auto q = transition_distribution(seed, n_notes);
    const auto p = transition_distribution(generated, n_notes);
    const std::vector<double> u(q.size(), 1.0 / static_cast<double>(q.size()));
    return {kl_divergence(p, q), kl_divergence(u, q)};
}

// Plain-text sequences: one integer per line.

inline NoteSequence read_sequence(std::istream& in) {
    NoteSequence out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        const std::string cell = line.substr(first, last - first + 1);
        std::size_t used = 0;
        long long v = -1;
        try {
            v = std::stoll(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != cell.size() || v < 0)
            throw InvalidInput("sequence: line " + std::to_string(row) + " is not a non-negative integer");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

inline void write_sequence(std::span<const std::size_t> seq, std::ostream& out) {
    for (std::size_t v : seq) out << v << '\n';
}

/// Usage-count matrix; diagonal entries are zero.
inline nlohmann::json graph_state_json(const NoteGraph& g) {
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t a = 0; a < g.n_notes(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t b = 0; b < g.n_notes(); ++b) row.push_back(a == b ? 0 : g.count(a, b));
        counts.push_back(std::move(row));
    }
    return {{"n_notes", g.n_notes()}, {"epsilon", g.epsilon()}, {"invert", g.inverted()},
            {"rng_seed", g.rng_seed()}, {"counts", std::move(counts)}};
}

}  // namespace memnet
