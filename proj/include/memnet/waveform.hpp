#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "json_util.hpp"

namespace memnet {

struct DcStep {
    double amplitude = 0.0;
    double t_on = 0.0;
    double t_off = std::numeric_limits<double>::infinity();
};

struct Sine {
    double amplitude = 0.0;
    double omega = 0.0;  // rad/s
    double phase = 0.0;  // rad
};

/// High for the first duty fraction of each period, starting at t = 0.
struct PulseTrain {
    double amplitude = 0.0;
    double period = 1.0;
    double duty = 0.5;
};

struct Waveform;

struct WaveformSum {
    std::vector<Waveform> components;
};

struct Waveform {
    std::variant<DcStep, Sine, PulseTrain, WaveformSum> shape;
};

inline double eval_waveform(const Waveform& w, double t) {
    struct Visitor {
        double t;
        double operator()(const DcStep& d) const { return (t >= d.t_on && t < d.t_off) ? d.amplitude : 0.0; }
        double operator()(const Sine& s) const { return s.amplitude * std::sin(s.omega * t + s.phase); }
        double operator()(const PulseTrain& p) const {
            const double phase = std::fmod(t, p.period);
            return phase < p.duty * p.period ? p.amplitude : 0.0;
        }
        double operator()(const WaveformSum& sum) const {
            double v = 0.0;
            for (const auto& c : sum.components) v += eval_waveform(c, t);
            return v;
        }
    };
    return std::visit(Visitor{t}, w.shape);
}

inline Waveform dc_waveform(double amplitude, double t_on = 0.0,
                            double t_off = std::numeric_limits<double>::infinity()) {
    return Waveform{DcStep{amplitude, t_on, t_off}};
}

inline Waveform sine_waveform(double amplitude, double omega, double phase = 0.0) {
    return Waveform{Sine{amplitude, omega, phase}};
}

inline void validate(const Waveform& w, const std::string& path = "waveform") {
    struct Visitor {
        const std::string& path;
        void operator()(const DcStep& d) const {
            if (!std::isfinite(d.amplitude) || !std::isfinite(d.t_on))
                throw InvalidInput(path + ": dc_step amplitude and t_on must be finite");
            if (!(d.t_off > d.t_on)) throw InvalidInput(path + ": dc_step requires t_off > t_on");
        }
        void operator()(const Sine& s) const {
            if (!std::isfinite(s.amplitude) || !std::isfinite(s.omega) || !std::isfinite(s.phase))
                throw InvalidInput(path + ": sine fields must be finite");
        }
        void operator()(const PulseTrain& p) const {
            if (!std::isfinite(p.amplitude)) throw InvalidInput(path + ": pulse_train amplitude must be finite");
            if (!(p.period > 0.0) || !std::isfinite(p.period)) throw InvalidInput(path + ": pulse_train period must be > 0");
            if (!(p.duty > 0.0 && p.duty < 1.0)) throw InvalidInput(path + ": pulse_train duty must lie in (0, 1)");
        }
        void operator()(const WaveformSum& sum) const {
            for (std::size_t k = 0; k < sum.components.size(); ++k)
                validate(sum.components[k], path + ".components[" + std::to_string(k) + "]");
        }
    };
    std::visit(Visitor{path}, w.shape);
}

inline void to_json(nlohmann::json& j, const Waveform& w) {
    struct Visitor {
        nlohmann::json& j;
        void operator()(const DcStep& d) const {
            j = {{"variant", "dc_step"}, {"amplitude", d.amplitude}, {"t_on", d.t_on}};
            if (std::isfinite(d.t_off))
                j["t_off"] = d.t_off;
            else
                j["t_off"] = nullptr;
        }
        void operator()(const Sine& s) const {
            j = {{"variant", "sine"}, {"amplitude", s.amplitude}, {"omega", s.omega}, {"phase", s.phase}};
        }
        void operator()(const PulseTrain& p) const {
            j = {{"variant", "pulse_train"}, {"amplitude", p.amplitude}, {"period", p.period}, {"duty", p.duty}};
        }
        void operator()(const WaveformSum& sum) const {
            j = {{"variant", "sum"}, {"components", nlohmann::json::array()}};
            for (const auto& c : sum.components) j["components"].push_back(c);
        }
    };
    std::visit(Visitor{j}, w.shape);
}

inline Waveform parse_waveform(const nlohmann::json& j, const std::string& path = "waveform") {
    if (!j.is_object() || !j.contains("variant") || !j.at("variant").is_string())
        throw InvalidInput(path + ": expected an object with a string 'variant'");
    const auto variant = j.at("variant").get<std::string>();
    Waveform w;
    if (variant == "dc_step") {
        w.shape = DcStep{detail::json_number(j, "amplitude", path, 0.0, true),
                         detail::json_number(j, "t_on", path, 0.0, false),
                         detail::json_number(j, "t_off", path, std::numeric_limits<double>::infinity(), false)};
    } else if (variant == "sine") {
        w.shape = Sine{detail::json_number(j, "amplitude", path, 0.0, true),
                       detail::json_number(j, "omega", path, 0.0, true),
                       detail::json_number(j, "phase", path, 0.0, false)};
    } else if (variant == "pulse_train") {
        w.shape = PulseTrain{detail::json_number(j, "amplitude", path, 0.0, true),
                             detail::json_number(j, "period", path, 0.0, true),
                             detail::json_number(j, "duty", path, 0.0, true)};
    } else if (variant == "sum") {
        if (!j.contains("components") || !j.at("components").is_array())
            throw InvalidInput(path + ".components: expected an array");
        WaveformSum sum;
        const auto& comps = j.at("components");
        for (std::size_t k = 0; k < comps.size(); ++k)
            sum.components.push_back(parse_waveform(comps[k], path + ".components[" + std::to_string(k) + "]"));
        w.shape = std::move(sum);
    } else {
        throw InvalidInput(path + ".variant: unknown waveform '" + variant + "'");
    }
    validate(w, path);
    return w;
}

}  // namespace memnet
