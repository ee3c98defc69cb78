#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "device.hpp"
#include "error.hpp"
#include "waveform.hpp"

namespace memnet {

struct MemristorBranch {
    DeviceParams params;
    double x0 = 0.5;
};

struct ResistorBranch {
    double ohms = 1.0;
};

struct Branch {
    std::string id;
    std::string from;
    std::string to;
    std::variant<MemristorBranch, ResistorBranch> kind;

    bool is_memristor() const { return std::holds_alternative<MemristorBranch>(kind); }
};

/// Ideal voltage source between `node` and ground.
struct Source {
    std::string node;
    Waveform waveform;
};

struct Netlist {
    std::vector<std::string> node_ids;
    std::string ground;
    std::vector<Branch> branches;
    std::vector<Source> sources;

    std::size_t node_index(std::string_view name) const {
        for (std::size_t k = 0; k < node_ids.size(); ++k)
            if (node_ids[k] == name) return k;
        throw InvalidInput("netlist: unknown node '" + std::string(name) + "'");
    }

    std::size_t branch_index(std::string_view id) const {
        for (std::size_t k = 0; k < branches.size(); ++k)
            if (branches[k].id == id) return k;
        throw InvalidInput("netlist: unknown branch '" + std::string(id) + "'");
    }

    std::size_t ground_index() const { return node_index(ground); }
};

/// Checks every structural invariant; messages name the offending id.
inline void validate(const Netlist& n) {
    if (n.node_ids.empty()) throw InvalidInput("netlist: node_ids is empty");
    std::set<std::string> nodes;
    for (const auto& id : n.node_ids)
        if (!nodes.insert(id).second) throw InvalidInput("netlist: duplicate node id '" + id + "'");
    if (!nodes.count(n.ground)) throw InvalidInput("netlist: ground node '" + n.ground + "' is not declared");

    std::set<std::string> ids;
    for (const auto& b : n.branches) {
        if (!ids.insert(b.id).second) throw InvalidInput("netlist: duplicate branch id '" + b.id + "'");
        if (!nodes.count(b.from))
            throw InvalidInput("netlist: branch '" + b.id + "' references undeclared node '" + b.from + "'");
        if (!nodes.count(b.to))
            throw InvalidInput("netlist: branch '" + b.id + "' references undeclared node '" + b.to + "'");
        if (b.from == b.to) throw InvalidInput("netlist: branch '" + b.id + "' connects a node to itself");
        if (const auto* r = std::get_if<ResistorBranch>(&b.kind)) {
            if (!(r->ohms > 0.0) || !std::isfinite(r->ohms))
                throw InvalidInput("netlist: resistor '" + b.id + "' must have a positive finite value");
        } else {
            const auto& m = std::get<MemristorBranch>(b.kind);
            try {
                validate(m.params);
            } catch (const InvalidInput& e) {
                throw InvalidInput("netlist: memristor '" + b.id + "': " + e.what());
            }
            if (!(m.x0 >= 0.0 && m.x0 <= 1.0))
                throw InvalidInput("netlist: memristor '" + b.id + "' has x0 outside [0, 1]");
        }
    }

    if (n.sources.empty()) throw InvalidInput("netlist: at least one source is required");
    std::set<std::string> driven;
    for (const auto& s : n.sources) {
        if (!nodes.count(s.node)) throw InvalidInput("netlist: source references undeclared node '" + s.node + "'");
        if (s.node == n.ground) throw InvalidInput("netlist: source cannot drive the ground node '" + s.node + "'");
        if (!driven.insert(s.node).second)
            throw InvalidInput("netlist: node '" + s.node + "' is driven by more than one source");
        validate(s.waveform, "source '" + s.node + "'");
    }
}

inline void to_json(nlohmann::json& j, const Netlist& n) {
    j = nlohmann::json{{"node_ids", n.node_ids}, {"ground", n.ground}};
    auto branches = nlohmann::json::array();
    for (const auto& b : n.branches) {
        nlohmann::json jb{{"id", b.id}, {"from", b.from}, {"to", b.to}};
        if (const auto* r = std::get_if<ResistorBranch>(&b.kind)) {
            jb["kind"] = "resistor";
            jb["ohms"] = r->ohms;
        } else {
            const auto& m = std::get<MemristorBranch>(b.kind);
            jb["kind"] = "memristor";
            jb["params"] = m.params;
            jb["x0"] = m.x0;
        }
        branches.push_back(std::move(jb));
    }
    j["branches"] = std::move(branches);
    auto sources = nlohmann::json::array();
    for (const auto& s : n.sources) sources.push_back({{"node", s.node}, {"waveform", s.waveform}});
    j["sources"] = std::move(sources);
}

/// Builds a netlist from a parsed document. Errors carry a field path.
inline Netlist netlist_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidInput("netlist: document must be a JSON object");
    auto need = [&](const nlohmann::json& obj, const char* key, const std::string& path) -> const nlohmann::json& {
        if (!obj.contains(key)) throw InvalidInput(path + "." + key + ": missing");
        return obj.at(key);
    };
    auto string_at = [&](const nlohmann::json& obj, const char* key, const std::string& path) {
        const auto& v = need(obj, key, path);
        if (!v.is_string()) throw InvalidInput(path + "." + key + ": must be a string");
        return v.get<std::string>();
    };

    Netlist n;
    const auto& nodes = need(j, "node_ids", "netlist");
    if (!nodes.is_array()) throw InvalidInput("netlist.node_ids: must be an array of strings");
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k].is_string())
            throw InvalidInput("netlist.node_ids[" + std::to_string(k) + "]: must be a string");
        n.node_ids.push_back(nodes[k].get<std::string>());
    }
    n.ground = string_at(j, "ground", "netlist");

    const auto& branches = need(j, "branches", "netlist");
    if (!branches.is_array()) throw InvalidInput("netlist.branches: must be an array");
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const std::string path = "netlist.branches[" + std::to_string(k) + "]";
        const auto& jb = branches[k];
        if (!jb.is_object()) throw InvalidInput(path + ": must be an object");
        Branch b;
        b.id = string_at(jb, "id", path);
        b.from = string_at(jb, "from", path);
        b.to = string_at(jb, "to", path);
        const auto kind = string_at(jb, "kind", path);
        if (kind == "resistor") {
            b.kind = ResistorBranch{detail::json_number(jb, "ohms", path, 0.0, true)};
        } else if (kind == "memristor") {
            MemristorBranch m;
            try {
                if (jb.contains("params")) m.params = jb.at("params").get<DeviceParams>();
            } catch (const InvalidInput& e) {
                throw InvalidInput(path + ".params: " + e.what());
            } catch (const nlohmann::json::exception& e) {
                throw InvalidInput(path + ".params: " + e.what());
            }
            m.x0 = detail::json_number(jb, "x0", path, 0.5, false);
            b.kind = m;
        } else {
            throw InvalidInput(path + ".kind: expected 'memristor' or 'resistor', got '" + kind + "'");
        }
        n.branches.push_back(std::move(b));
    }

    const auto& sources = need(j, "sources", "netlist");
    if (!sources.is_array()) throw InvalidInput("netlist.sources: must be an array");
    for (std::size_t k = 0; k < sources.size(); ++k) {
        const std::string path = "netlist.sources[" + std::to_string(k) + "]";
        if (!sources[k].is_object()) throw InvalidInput(path + ": must be an object");
        Source s;
        s.node = string_at(sources[k], "node", path);
        s.waveform = parse_waveform(need(sources[k], "waveform", path), path + ".waveform");
        n.sources.push_back(std::move(s));
    }
    validate(n);
    return n;
}

inline Netlist parse_netlist(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(std::string("netlist: JSON parse error: ") + e.what());
    }
    return netlist_from_json(j);
}

/// FNV-1a over the canonical JSON form, as 16 hex digits.
inline std::string netlist_hash(const Netlist& n) {
    const std::string canon = nlohmann::json(n).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace memnet
