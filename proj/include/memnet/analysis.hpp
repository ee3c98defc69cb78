#pragma once

// Measurables extracted from sampled series: spike events and their decay
// times, V-I loop area and the frequency of maximal hysteresis, and
// oscillation statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "device.hpp"
#include "error.hpp"
#include "json_util.hpp"

namespace memnet {

struct SpikeMetrics {
    double t_peak = 0.0;
    double i_peak = 0.0;
    double i_baseline = 0.0;
    // Time after t_peak at which the excess over baseline has decayed BY
    // 50/90/95/99 percent of its peak value. Empty when the series ends first.
    std::optional<double> tau50, tau90, tau95, tau99;
};

struct SpikeOptions {
    double threshold_frac = 0.5;
    double min_separation = 0.5;   // s
    double baseline_window = 4.0;  // s, trailing median; 5 x the default tau_ion
};

struct DecayOptions {
    double tail_fraction = 0.1;         // share of post-peak samples used for the baseline
    std::optional<double> baseline;     // overrides the tail estimate
};

namespace detail {

inline double sorted_median(const std::vector<double>& sorted) {
    const std::size_t n = sorted.size();
    return (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

inline double median_of(std::span<const double> values) {
    std::vector<double> tmp(values.begin(), values.end());
    std::sort(tmp.begin(), tmp.end());
    return sorted_median(tmp);
}

inline double sample_interval(std::span<const double> times) {
    if (times.size() < 2) return 0.0;
    const double dt = times[1] - times[0];
    if (!(dt > 0.0)) throw InvalidInput("series: times must be strictly increasing");
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double d = times[k] - times[k - 1];
        if (std::abs(d - dt) > 1e-6 * dt) throw InvalidInput("series: non-uniform sampling");
    }
    return dt;
}

}  // namespace detail

/// Trailing median of the previous `window` samples. The first `window`
/// samples, which lack a full history, use the median of the opening window.
inline std::vector<double> running_baseline(std::span<const double> values, std::size_t window) {
    const std::size_t n = values.size();
    std::vector<double> out(n);
    if (n == 0) return out;
    window = std::clamp<std::size_t>(window, 1, n);
    std::vector<double> sorted(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(window));
    std::sort(sorted.begin(), sorted.end());
    const double opening = detail::sorted_median(sorted);
    for (std::size_t k = 0; k < window; ++k) out[k] = opening;
    for (std::size_t k = window; k < n; ++k) {
        if (k > window) {
            sorted.erase(std::lower_bound(sorted.begin(), sorted.end(), values[k - window - 1]));
            sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), values[k - 1]), values[k - 1]);
        }
        out[k] = detail::sorted_median(sorted);
    }
    return out;
}

/// Local maxima of |i - baseline| above threshold_frac times the global
/// maximum excess. Peaks closer than min_separation keep only the larger.
inline std::vector<SpikeMetrics> detect_spikes(std::span<const double> times, std::span<const double> values,
                                               const SpikeOptions& opt = {}) {
    if (times.size() != values.size()) throw InvalidInput("detect_spikes: times and values differ in length");
    if (values.empty()) throw InvalidInput("detect_spikes: empty series");
    if (!(opt.threshold_frac > 0.0 && opt.threshold_frac < 1.0))
        throw InvalidInput("detect_spikes: threshold_frac must lie in (0, 1)");
    const double dt = detail::sample_interval(times);
    const std::size_t n = values.size();
    if (n < 2) return {};

    const auto window = static_cast<std::size_t>(std::max(1.0, std::round(opt.baseline_window / dt)));
    const auto base = running_baseline(values, window);
    std::vector<double> excess(n);
    double top = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        excess[k] = std::abs(values[k] - base[k]);
        top = std::max(top, excess[k]);
    }
    if (!(top > 0.0)) return {};
    const double level = opt.threshold_frac * top;

    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(excess[k] > level)) continue;
        const bool left = (k == 0) || excess[k] >= excess[k - 1];
        const bool right = (k + 1 == n) || excess[k] > excess[k + 1];
        if (left && right) candidates.push_back(k);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return excess[a] > excess[b]; });

    std::set<std::size_t> kept;
    for (std::size_t k : candidates) {
        auto next = kept.lower_bound(k);
        if (next != kept.end() && times[*next] - times[k] < opt.min_separation) continue;
        if (next != kept.begin() && times[k] - times[*std::prev(next)] < opt.min_separation) continue;
        kept.insert(k);
    }
    std::vector<SpikeMetrics> out;
    out.reserve(kept.size());
    for (std::size_t k : kept) out.push_back(SpikeMetrics{times[k], values[k], base[k], {}, {}, {}, {}});
    return out;
}

/// Fills the tau fields by linear interpolation between samples.
inline SpikeMetrics decay_times(std::span<const double> times, std::span<const double> values,
                                const SpikeMetrics& spike, const DecayOptions& opt = {}) {
    if (times.size() != values.size() || times.empty())
        throw InvalidInput("decay_times: series must be non-empty with matching lengths");
    detail::sample_interval(times);
    const auto it = std::lower_bound(times.begin(), times.end(), spike.t_peak);
    std::size_t k0 = static_cast<std::size_t>(it - times.begin());
    if (k0 == times.size()) throw InvalidInput("decay_times: spike lies outside the series");
    if (k0 > 0 && std::abs(times[k0 - 1] - spike.t_peak) < std::abs(times[k0] - spike.t_peak)) --k0;

    SpikeMetrics out = spike;
    out.t_peak = times[k0];
    out.i_peak = values[k0];
    const std::size_t n = values.size();
    if (opt.baseline) {
        out.i_baseline = *opt.baseline;
    } else {
        const std::size_t after = n - k0;
        const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(opt.tail_fraction * after)));
        out.i_baseline = detail::median_of(values.subspan(n - tail));
    }
    out.tau50 = out.tau90 = out.tau95 = out.tau99 = std::nullopt;

    const double sign = values[k0] >= out.i_baseline ? 1.0 : -1.0;
    const double peak_excess = sign * (values[k0] - out.i_baseline);
    if (!(peak_excess > 0.0)) return out;

    const std::array<double, 4> percents{50.0, 90.0, 95.0, 99.0};
    std::array<std::optional<double>*, 4> slots{&out.tau50, &out.tau90, &out.tau95, &out.tau99};
    std::size_t k = k0 + 1;
    for (std::size_t p = 0; p < percents.size(); ++p) {
        const double level = (1.0 - percents[p] / 100.0) * peak_excess;
        while (k < n && sign * (values[k] - out.i_baseline) > level) ++k;
        if (k >= n) break;
        const double e_prev = sign * (values[k - 1] - out.i_baseline);
        const double e_here = sign * (values[k] - out.i_baseline);
        const double frac = (e_prev - level) / (e_prev - e_here);
        *slots[p] = times[k - 1] + frac * (times[k] - times[k - 1]) - out.t_peak;
    }
    return out;
}

// Hysteresis --------------------------------------------------------------

/// Absolute area enclosed by a sampled V-I curve, treated as closed. The
/// curve is cut wherever v changes sign, each arc is closed by its chord,
/// and the absolute shoelace areas of the arcs are summed, so the two
/// opposite-orientation lobes of a pinched loop add instead of cancelling.
inline double loop_area(std::span<const double> v, std::span<const double> i) {
    if (v.size() != i.size()) throw InvalidInput("loop_area: v and i differ in length");
    const std::size_t n = v.size();
    if (n < 3) throw InvalidInput("loop_area: need at least 3 samples");

    struct Point {
        double v, i;
        bool cut;
    };
    std::vector<Point> ring;
    ring.reserve(n + n / 8);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t next = (k + 1) % n;
        ring.push_back({v[k], i[k], v[k] == 0.0});
        if (v[k] * v[next] < 0.0) {
            const double f = v[k] / (v[k] - v[next]);
            ring.push_back({0.0, i[k] + f * (i[next] - i[k]), true});
        }
    }
    auto shoelace = [](const std::vector<Point>& poly) {
        double a = 0.0;
        for (std::size_t k = 0; k < poly.size(); ++k) {
            const auto& p = poly[k];
            const auto& q = poly[(k + 1) % poly.size()];
            a += p.v * q.i - q.v * p.i;
        }
        return 0.5 * a;
    };

    const auto first_cut = std::find_if(ring.begin(), ring.end(), [](const Point& p) { return p.cut; });
    if (first_cut == ring.end()) return std::abs(shoelace(ring));
    std::rotate(ring.begin(), first_cut, ring.end());
    ring.push_back(ring.front());

    double total = 0.0;
    std::vector<Point> arc{ring.front()};
    for (std::size_t k = 1; k < ring.size(); ++k) {
        arc.push_back(ring[k]);
        if (ring[k].cut) {
            if (arc.size() >= 3) total += std::abs(shoelace(arc));
            arc.assign(1, ring[k]);
        }
    }
    return total;
}

struct HysteresisOptions {
    std::size_t periods = 3;               // first one is discarded
    std::size_t samples_per_period = 2000;
    double x0 = 0.5;
};

struct LoopSamples {
    std::vector<double> v, i;
};

/// Device under A sin(omega t) with the ionic term and noise switched off;
/// returns the samples after the first period.
inline LoopSamples simulate_loop(DeviceParams params, double amplitude, double omega,
                                 const HysteresisOptions& opt = {}) {
    params.gamma = 0.0;
    params.noise_amp = 0.0;
    validate(params);
    if (!(omega > 0.0) || !std::isfinite(omega)) throw InvalidInput("hysteresis: frequencies must be > 0");
    if (opt.periods < 2 || opt.samples_per_period < 3)
        throw InvalidInput("hysteresis: need >= 2 periods and >= 3 samples per period");
    const double dt = (2.0 * M_PI / omega) / static_cast<double>(opt.samples_per_period);
    const std::size_t total = opt.periods * opt.samples_per_period;
    LoopSamples out;
    out.v.reserve(total - opt.samples_per_period);
    out.i.reserve(total - opt.samples_per_period);
    DeviceState st = DeviceState::fresh(opt.x0);
    for (std::size_t k = 0; k < total; ++k) {
        const double v = amplitude * std::sin(omega * static_cast<double>(k) * dt);
        auto r = step_device(params, st, v, dt, 0.0);
        st = r.state;
        if (k >= opt.samples_per_period) {
            out.v.push_back(v);
            out.i.push_back(r.current);
        }
    }
    return out;
}

struct HysteresisSweepResult {
    std::vector<double> frequencies;  // rad/s
    std::vector<double> loop_areas;   // V*A
    double omega0 = 0.0;
    bool degenerate = false;          // fewer than 3 sweep points
};

inline std::vector<double> log_sweep(double lo, double hi, std::size_t points) {
    if (!(lo > 0.0 && hi >= lo) || points == 0) throw InvalidInput("log_sweep: need 0 < lo <= hi and points >= 1");
    std::vector<double> out;
    for (std::size_t k = 0; k < points; ++k) {
        const double f = points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(points - 1);
        out.push_back(lo * std::pow(hi / lo, f));
    }
    return out;
}

/// Loop area at every sweep frequency; omega0 is the argmax, ties going to
/// the lower frequency.
inline HysteresisSweepResult find_omega0(const DeviceParams& params, double amplitude,
                                         std::span<const double> sweep, const HysteresisOptions& opt = {}) {
    if (sweep.empty()) throw InvalidInput("find_omega0: empty sweep");
    HysteresisSweepResult out;
    out.frequencies.assign(sweep.begin(), sweep.end());
    std::sort(out.frequencies.begin(), out.frequencies.end());
    out.degenerate = out.frequencies.size() < 3;
    double best = -1.0;
    for (double w : out.frequencies) {
        const auto loop = simulate_loop(params, amplitude, w, opt);
        const double a = loop_area(loop.v, loop.i);
        out.loop_areas.push_back(a);
        if (a > best) {
            best = a;
            out.omega0 = w;
        }
    }
    return out;
}

// Oscillations ------------------------------------------------------------

struct OscillationMetrics {
    std::size_t zero_crossings = 0;
    std::optional<double> dominant_period;
    double fraction_negative = 0.0;
    std::size_t spike_count = 0;
};

/// Lag of the first autocorrelation peak above min_height, in samples, once
/// the central lobe has fallen below that height. Each lag is normalised by
/// the energies of the two overlapping segments, so a periodic signal
/// correlates exactly 1 at its period.
inline std::optional<std::size_t> autocorrelation_peak(std::span<const double> x, double min_height = 0.2) {
    const std::size_t n = x.size();
    if (n < 4) return std::nullopt;
    std::vector<double> head(n + 1, 0.0);  // head[m] = sum of x[k]^2 for k < m
    for (std::size_t k = 0; k < n; ++k) head[k + 1] = head[k] + x[k] * x[k];
    if (!(head[n] > 0.0)) return std::nullopt;
    auto r = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t k = 0; k + lag < n; ++k) acc += x[k] * x[k + lag];
        const double e = std::sqrt(head[n - lag] * (head[n] - head[lag]));
        return e > 0.0 ? acc / e : 0.0;
    };
    const std::size_t max_lag = n / 2;
    double prev = r(0), here = r(1);
    bool dipped = false;  // ignore ripples on the central lobe
    for (std::size_t lag = 1; lag + 1 <= max_lag; ++lag) {
        const double next = r(lag + 1);
        dipped = dipped || here < min_height;
        if (dipped && here > min_height && here >= prev && here > next) return lag;
        prev = here;
        here = next;
    }
    return std::nullopt;
}

inline OscillationMetrics oscillation_metrics(std::span<const double> times, std::span<const double> values,
                                              const SpikeOptions& spikes = {}) {
    if (times.size() != values.size()) throw InvalidInput("oscillation_metrics: length mismatch");
    OscillationMetrics m;
    const std::size_t n = values.size();
    if (n == 0) return m;
    const double dt = detail::sample_interval(times);

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> centred(n);
    std::size_t negative = 0;
    for (std::size_t k = 0; k < n; ++k) {
        centred[k] = values[k] - mean;
        if (values[k] < 0.0) ++negative;
    }
    m.fraction_negative = static_cast<double>(negative) / static_cast<double>(n);

    int last_sign = 0;
    for (double c : centred) {
        const int sgn = (c > 0.0) - (c < 0.0);
        if (sgn == 0) continue;
        if (last_sign != 0 && sgn != last_sign) ++m.zero_crossings;
        last_sign = sgn;
    }

    // Long series are block-averaged before the O(n * lag) autocorrelation.
    constexpr std::size_t max_points = 16384;
    const std::size_t factor = (n + max_points - 1) / max_points;
    std::vector<double> reduced;
    reduced.reserve(n / factor + 1);
    for (std::size_t k = 0; k + factor <= n; k += factor) {
        double acc = 0.0;
        for (std::size_t j = 0; j < factor; ++j) acc += centred[k + j];
        reduced.push_back(acc / static_cast<double>(factor));
    }
    if (const auto lag = autocorrelation_peak(reduced))
        m.dominant_period = static_cast<double>(*lag * factor) * dt;

    if (n >= 2) m.spike_count = detect_spikes(times, values, spikes).size();
    return m;
}

// JSON -------------------------------------------------------------------

namespace detail {
inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const SpikeMetrics& s) {
    j = nlohmann::json{{"t_peak", s.t_peak},
                       {"i_peak", s.i_peak},
                       {"i_baseline", s.i_baseline},
                       {"tau50", detail::optional_json(s.tau50)},
                       {"tau90", detail::optional_json(s.tau90)},
                       {"tau95", detail::optional_json(s.tau95)},
                       {"tau99", detail::optional_json(s.tau99)}};
}

inline void to_json(nlohmann::json& j, const OscillationMetrics& m) {
    j = nlohmann::json{{"zero_crossings", m.zero_crossings},
                       {"dominant_period", detail::optional_json(m.dominant_period)},
                       {"fraction_negative", m.fraction_negative},
                       {"spike_count", m.spike_count}};
}

inline void to_json(nlohmann::json& j, const HysteresisSweepResult& h) {
    j = nlohmann::json{{"frequencies", h.frequencies},
                       {"loop_areas", h.loop_areas},
                       {"omega0", h.omega0},
                       {"degenerate", h.degenerate}};
}

inline void from_json(const nlohmann::json& j, SpikeOptions& o) {
    if (!j.is_object()) throw InvalidInput("spike options: expected an object");
    o.threshold_frac = detail::json_number(j, "threshold_frac", "spike options", o.threshold_frac, false);
    o.min_separation = detail::json_number(j, "min_separation", "spike options", o.min_separation, false);
    o.baseline_window = detail::json_number(j, "baseline_window", "spike options", o.baseline_window, false);
}

inline void to_json(nlohmann::json& j, const SpikeOptions& o) {
    j = nlohmann::json{{"threshold_frac", o.threshold_frac},
                       {"min_separation", o.min_separation},
                       {"baseline_window", o.baseline_window}};
}

}  // namespace memnet
