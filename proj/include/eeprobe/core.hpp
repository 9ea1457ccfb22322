#ifndef EEPROBE_CORE_HPP
#define EEPROBE_CORE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeprobe/error.hpp"

namespace eeprobe {

using json = nlohmann::json;

enum class FreqDomain { core, uncore };
enum class BackendKind { hardware, simulation };
enum class PowerSource { rapl, external_file, simulated };

inline const char* to_string(FreqDomain d) { return d == FreqDomain::core ? "core" : "uncore"; }
inline const char* to_string(BackendKind k) { return k == BackendKind::hardware ? "hardware" : "simulation"; }
inline const char* to_string(PowerSource s) {
    switch (s) {
    case PowerSource::rapl: return "rapl";
    case PowerSource::external_file: return "external_file";
    default: return "simulated";
    }
}

// A core or uncore operating point in kHz.
struct FrequencyLevel {
    std::int64_t khz = 0;
    FreqDomain domain = FreqDomain::core;

    FrequencyLevel() = default;
    FrequencyLevel(std::int64_t khz_, FreqDomain domain_) : khz(khz_), domain(domain_) {
        if (khz <= 0)
            throw Error(errc::invalid_argument, "FrequencyLevel.khz must be > 0");
    }
};

struct TraceEntry {
    std::int64_t timestamp_cycles = 0;
    std::int64_t duration_cycles = 0;
};

// Ordered per-access (timestamp, duration) records in TSC cycles.
struct LatencyTrace {
    std::vector<TraceEntry> entries;
    std::int64_t tsc_khz = 0;

    double cycles_to_us(double cycles) const { return cycles * 1000.0 / static_cast<double>(tsc_khz); }
};

inline bool validate_trace(const LatencyTrace& trace) {
    if (trace.tsc_khz <= 0)
        return false;
    std::int64_t prev = INT64_MIN;
    for (const auto& e : trace.entries) {
        if (e.duration_cycles <= 0)
            return false;
        if (e.timestamp_cycles <= prev)
            return false;
        prev = e.timestamp_cycles;
    }
    return true;
}

// One frequency-switch observation.
struct TransitionMeasurement {
    double t_delay_us = 0.0;
    double t_gap_us = 0.0;
    double latency_before_cycles = 0.0;
    double latency_after_cycles = 0.0;
    bool valid = false;
};

// Fixed-width binned counts; out-of-range samples clamp into the edge
// bins and are accounted in `clamped`.
struct Histogram {
    double origin = 0.0;
    double bin_width = 1.0;
    std::vector<std::int64_t> counts;
    std::int64_t n = 0;
    std::int64_t clamped = 0;
};

struct PowerSample {
    std::int64_t t_ns = 0;
    double watts = 0.0;
    PowerSource source = PowerSource::simulated;

    PowerSample() = default;
    PowerSample(std::int64_t t_ns_, double watts_, PowerSource source_)
        : t_ns(t_ns_), watts(watts_), source(source_) {
        if (watts < 0.0)
            throw Error(errc::invalid_argument, "PowerSample.watts must be >= 0");
    }
};

enum class PhaseKind { High, Low };

inline const char* to_string(PhaseKind k) { return k == PhaseKind::High ? "High" : "Low"; }

// Per High/Low phase cycle accounting.
struct LicensePhaseRecord {
    PhaseKind kind = PhaseKind::High;
    std::int64_t cycles_total = 0;
    std::int64_t cycles_throttled = 0;
    std::int64_t cycles_license2 = 0;
    std::int64_t wall_ns = 0;

    LicensePhaseRecord() = default;
    LicensePhaseRecord(PhaseKind kind_, std::int64_t total, std::int64_t throttled,
                       std::int64_t license2, std::int64_t wall_ns_)
        : kind(kind_), cycles_total(total), cycles_throttled(throttled),
          cycles_license2(license2), wall_ns(wall_ns_) {
        if (throttled < 0 || throttled > total)
            throw Error(errc::invalid_argument, "cycles_throttled out of [0, cycles_total]");
        if (license2 < 0 || license2 > total)
            throw Error(errc::invalid_argument, "cycles_license2 out of [0, cycles_total]");
    }
};

// Ordinary-least-squares result; coefficient units depend on the model
// (datapower reports mW per bit per core).
struct RegressionFit {
    double intercept_w = 0.0;
    std::map<std::string, double> coef;
    double rss = 0.0;
    std::int64_t n = 0;
};

struct ExperimentReport {
    std::string experiment;
    BackendKind backend = BackendKind::simulation;
    std::map<std::string, std::string> config;
    std::vector<int> topology;
    json results;
    std::uint64_t seed = 0;
};

// --- canonical JSON ---

inline void to_json(json& j, const FrequencyLevel& f) {
    j = json{{"khz", f.khz}, {"domain", to_string(f.domain)}};
}

inline void to_json(json& j, const TraceEntry& e) {
    j = json{{"timestamp_cycles", e.timestamp_cycles}, {"duration_cycles", e.duration_cycles}};
}

inline void to_json(json& j, const LatencyTrace& t) {
    j = json{{"entries", t.entries}, {"tsc_khz", t.tsc_khz}};
}

inline void from_json(const json& j, TraceEntry& e) {
    j.at("timestamp_cycles").get_to(e.timestamp_cycles);
    j.at("duration_cycles").get_to(e.duration_cycles);
}

inline void from_json(const json& j, LatencyTrace& t) {
    j.at("entries").get_to(t.entries);
    j.at("tsc_khz").get_to(t.tsc_khz);
}

inline void to_json(json& j, const TransitionMeasurement& m) {
    j = json{{"t_delay_us", m.t_delay_us},
             {"t_gap_us", m.t_gap_us},
             {"latency_before_cycles", m.latency_before_cycles},
             {"latency_after_cycles", m.latency_after_cycles},
             {"valid", m.valid}};
}

inline void from_json(const json& j, TransitionMeasurement& m) {
    j.at("t_delay_us").get_to(m.t_delay_us);
    j.at("t_gap_us").get_to(m.t_gap_us);
    j.at("latency_before_cycles").get_to(m.latency_before_cycles);
    j.at("latency_after_cycles").get_to(m.latency_after_cycles);
    j.at("valid").get_to(m.valid);
}

inline void to_json(json& j, const Histogram& h) {
    j = json{{"origin", h.origin},
             {"bin_width", h.bin_width},
             {"counts", h.counts},
             {"n", h.n},
             {"clamped", h.clamped}};
}

inline void from_json(const json& j, Histogram& h) {
    j.at("origin").get_to(h.origin);
    j.at("bin_width").get_to(h.bin_width);
    j.at("counts").get_to(h.counts);
    j.at("n").get_to(h.n);
    j.at("clamped").get_to(h.clamped);
}

inline void to_json(json& j, const PowerSample& s) {
    j = json{{"t_ns", s.t_ns}, {"watts", s.watts}, {"source", to_string(s.source)}};
}

inline void to_json(json& j, const LicensePhaseRecord& r) {
    j = json{{"kind", to_string(r.kind)},
             {"cycles_total", r.cycles_total},
             {"cycles_throttled", r.cycles_throttled},
             {"cycles_license2", r.cycles_license2},
             {"wall_ns", r.wall_ns}};
}

inline void to_json(json& j, const RegressionFit& f) {
    j = json{{"intercept_w", f.intercept_w}, {"coef", f.coef}, {"rss", f.rss}, {"n", f.n}};
}

inline void to_json(json& j, const ExperimentReport& r) {
    j = json{{"schema", 1},
             {"experiment", r.experiment},
             {"backend", to_string(r.backend)},
             {"config", r.config},
             {"topology", r.topology},
             {"results", r.results},
             {"seed", r.seed}};
}

} // namespace eeprobe

#endif
