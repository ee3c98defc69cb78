#pragma once

// Single memristor: linear-mix memristance with windowed drift for the
// long-term state, plus a fast ionic transient that produces the current
// spike after a voltage change and decays with time constant tau_ion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace memnet {

struct DeviceParams {
    double r_on = 100.0;           // ohms, fully "on" (x = 1)
    double r_off = 1000.0;         // ohms, fully "off" (x = 0)
    double mobility_gain = 0.05;   // state drift per coulomb of ohmic charge
    int window_exponent = 1;       // p in 1 - (2x - 1)^(2p)
    double tau_ion = 0.8;          // s, ionic relaxation time
    double kappa = 1.0;            // transient jump per volt of change
    double gamma = 0.01;           // S, transconductance of the transient
    double noise_amp = 0.0;        // A, uniform current noise half-width
    int polarity = 1;              // +1 or -1

    friend bool operator==(const DeviceParams&, const DeviceParams&) = default;
};

struct DeviceState {
    double x = 0.5;       // memristance fraction in [0, 1]
    double s = 0.0;       // ionic transient, volts
    double v_prev = 0.0;  // last applied branch voltage
    double charge = 0.0;  // accumulated charge, coulombs

    static DeviceState fresh(double x0 = 0.5) { return DeviceState{x0, 0.0, 0.0, 0.0}; }

    friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

inline void validate(const DeviceParams& p) {
    auto fail = [](const std::string& what) { throw InvalidInput("device params: " + what); };
    if (!(std::isfinite(p.r_on) && std::isfinite(p.r_off))) fail("resistances must be finite");
    if (!(p.r_on > 0.0 && p.r_on < p.r_off)) fail("require 0 < r_on < r_off");
    if (!(p.tau_ion > 0.0) || !std::isfinite(p.tau_ion)) fail("tau_ion must be > 0");
    if (!(p.kappa >= 0.0) || !std::isfinite(p.kappa)) fail("kappa must be >= 0");
    if (!(p.gamma >= 0.0) || !std::isfinite(p.gamma)) fail("gamma must be >= 0");
    if (!(p.noise_amp >= 0.0) || !std::isfinite(p.noise_amp)) fail("noise_amp must be >= 0");
    if (!std::isfinite(p.mobility_gain)) fail("mobility_gain must be finite");
    if (p.window_exponent < 1) fail("window_exponent must be >= 1");
    if (p.polarity != 1 && p.polarity != -1) fail("polarity must be +1 or -1");
}

inline double memristance(const DeviceParams& p, double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("memristance: x outside [0, 1]");
    return p.r_on * x + p.r_off * (1.0 - x);
}

/// Joglekar window 1 - (2x - 1)^(2p).
inline double window(double x, int p) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("window: x outside [0, 1]");
    if (p < 1) throw InvalidInput("window: exponent must be >= 1");
    const double u = 2.0 * x - 1.0;
    double u2p = 1.0;
    const double u2 = u * u;
    for (int k = 0; k < p; ++k) u2p *= u2;
    return 1.0 - u2p;
}

/// One draw of the optional current noise. Consumes nothing from the stream
/// when the amplitude is zero.
inline double draw_noise(const DeviceParams& p, Rng& rng) {
    return p.noise_amp > 0.0 ? p.noise_amp * rng.symmetric() : 0.0;
}

struct StepResult {
    DeviceState state;
    double current = 0.0;  // branch current, amperes
};

/// Branch current as an affine function of the branch voltage for the next
/// step: i(v) = conductance * v + injection. Used to stamp the device into a
/// nodal system; step_device returns the same current for the solved v.
struct Companion {
    double conductance = 0.0;
    double injection = 0.0;
};

inline Companion companion(const DeviceParams& p, const DeviceState& st, double dt, double noise) {
    const double decay = std::exp(-dt / p.tau_ion);
    const double pol = p.polarity;
    return {1.0 / memristance(p, st.x) + p.gamma * p.kappa,
            pol * p.gamma * st.s * decay - p.gamma * p.kappa * st.v_prev + pol * noise};
}

/// Advances the device by dt under branch voltage v.
///
/// The transient decays exactly by exp(-dt / tau_ion) and then jumps by
/// kappa times the change in device-sense voltage. The returned current uses
/// the post-jump transient, so a voltage step shows its spike in the same
/// step. Polarity orients the device inside its branch: drift and transient
/// see polarity * v, the ohmic part stays v / M(x).
inline StepResult step_device(const DeviceParams& p, const DeviceState& st, double v, double dt,
                              double noise) {
    if (!std::isfinite(v)) throw NumericalFailure("step_device: non-finite voltage");
    if (!std::isfinite(dt) || !(dt > 0.0)) throw NumericalFailure("step_device: dt must be finite and > 0");
    if (!(st.x >= 0.0 && st.x <= 1.0)) throw InvalidInput("step_device: state x outside [0, 1]");

    const double pol = p.polarity;
    const double m = memristance(p, st.x);
    const double decay = std::exp(-dt / p.tau_ion);

    StepResult out;
    DeviceState& next = out.state;
    next.s = st.s * decay + p.kappa * pol * (v - st.v_prev);
    out.current = v / m + pol * (p.gamma * next.s + noise);

    const double drift = p.mobility_gain * (pol * v / m) * window(st.x, p.window_exponent) * dt;
    next.x = std::clamp(st.x + drift, 0.0, 1.0);
    next.v_prev = v;
    next.charge = st.charge + out.current * dt;
    return out;
}

inline StepResult step_device(const DeviceParams& p, const DeviceState& st, double v, double dt, Rng& rng) {
    return step_device(p, st, v, dt, draw_noise(p, rng));
}

/// Peak-normalised |i| of a fresh device under constant voltage.
struct Profile {
    std::vector<double> table;
    DeviceParams source_params;
};

/// Samples |i| at n_samples uniform times over duration, starting at the
/// step that registers the voltage jump, and divides by the maximum.
inline Profile dc_conduction_profile(const DeviceParams& p, double v, double duration, std::size_t n_samples,
                                     double x0 = 0.5) {
    validate(p);
    if (!(v != 0.0) || !std::isfinite(v)) throw InvalidInput("profile: voltage must be finite and non-zero");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw InvalidInput("profile: duration must be > 0");
    if (n_samples < 2) throw InvalidInput("profile: need at least 2 samples");
    if (p.noise_amp != 0.0) throw InvalidInput("profile: noise_amp must be 0");

    const double interval = duration / static_cast<double>(n_samples - 1);
    const double dt_cap = std::min(1e-3, p.tau_ion / 100.0);
    const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(interval / dt_cap)));
    const double dt = interval / static_cast<double>(substeps);

    std::vector<double> samples;
    samples.reserve(n_samples);
    DeviceState st = DeviceState::fresh(x0);
    for (std::size_t k = 0; k < n_samples; ++k) {
        const std::size_t steps = (k == 0) ? 1 : substeps;
        double i = 0.0;
        for (std::size_t j = 0; j < steps; ++j) {
            auto r = step_device(p, st, v, dt, 0.0);
            st = r.state;
            i = r.current;
        }
        samples.push_back(std::abs(i));
    }
    const double peak = *std::max_element(samples.begin(), samples.end());
    if (!(peak > 0.0)) throw NumericalFailure("profile: degenerate profile (all-zero current)");
    for (double& s : samples) s /= peak;
    return {std::move(samples), p};
}

inline void to_json(nlohmann::json& j, const DeviceParams& p) {
    j = nlohmann::json{{"r_on", p.r_on},
                       {"r_off", p.r_off},
                       {"mobility_gain", p.mobility_gain},
                       {"window_exponent", p.window_exponent},
                       {"tau_ion", p.tau_ion},
                       {"kappa", p.kappa},
                       {"gamma", p.gamma},
                       {"noise_amp", p.noise_amp},
                       {"polarity", p.polarity}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline void from_json(const nlohmann::json& j, DeviceParams& p) {
    if (!j.is_object()) throw InvalidInput("device params: expected a JSON object");
    static const char* known[] = {"r_on", "r_off", "mobility_gain", "window_exponent", "tau_ion",
                                  "kappa", "gamma", "noise_amp", "polarity"};
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known))
            throw InvalidInput("device params: unknown field '" + key + "'");
    }
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number()) throw InvalidInput(std::string("device params: field '") + key + "' must be a number");
        out = j.at(key).get<double>();
    };
    auto integer = [&](const char* key, int& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number_integer())
            throw InvalidInput(std::string("device params: field '") + key + "' must be an integer");
        out = j.at(key).get<int>();
    };
    num("r_on", p.r_on);
    num("r_off", p.r_off);
    num("mobility_gain", p.mobility_gain);
    integer("window_exponent", p.window_exponent);
    num("tau_ion", p.tau_ion);
    num("kappa", p.kappa);
    num("gamma", p.gamma);
    num("noise_amp", p.noise_amp);
    integer("polarity", p.polarity);
    validate(p);
}

inline void to_json(nlohmann::json& j, const Profile& pr) {
    j = nlohmann::json{{"table", pr.table}, {"source_params", pr.source_params}};
}

inline void from_json(const nlohmann::json& j, Profile& pr) {
    if (!j.is_object() || !j.contains("table") || !j.at("table").is_array())
        throw InvalidInput("profile: expected an object with a 'table' array");
    pr.table = j.at("table").get<std::vector<double>>();
    if (j.contains("source_params")) pr.source_params = j.at("source_params").get<DeviceParams>();
    if (pr.table.size() < 2) throw InvalidInput("profile: table needs at least 2 entries");
    const double mx = *std::max_element(pr.table.begin(), pr.table.end());
    for (double w : pr.table)
        if (!(w > 0.0 && w <= 1.0)) throw InvalidInput("profile: entries must lie in (0, 1]");
    if (mx != 1.0) throw InvalidInput("profile: maximum entry must equal 1");
}

}  // namespace memnet
