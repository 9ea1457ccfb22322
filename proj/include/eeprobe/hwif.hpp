#ifndef EEPROBE_HWIF_HPP
#define EEPROBE_HWIF_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"

namespace eeprobe {

enum class CounterEvent { throttle, license2, aperf, pperf };
enum class CState { C0poll, C1, C1E, C6 };
enum class CpuRelation { local, remote_active, remote_idle };

// Workload signal consumed by the simulation's control loops; the
// hardware backend ignores it.
enum class WorkloadClass { idle, l1_chase, llc_chase, dram_chase, compute, stall };

inline const char* to_string(CState c) {
    switch (c) {
    case CState::C0poll: return "C0poll";
    case CState::C1: return "C1";
    case CState::C1E: return "C1E";
    default: return "C6";
    }
}

inline const char* to_string(CpuRelation r) {
    switch (r) {
    case CpuRelation::local: return "local";
    case CpuRelation::remote_active: return "remote_active";
    default: return "remote_idle";
    }
}

inline const char* to_string(CounterEvent e) {
    switch (e) {
    case CounterEvent::throttle: return "throttle";
    case CounterEvent::license2: return "license2";
    case CounterEvent::aperf: return "aperf";
    default: return "pperf";
    }
}

// Register addresses (vendor documentation; configurable per platform file).
namespace msr {
constexpr std::uint32_t UNCORE_RATIO_LIMIT = 0x620;
constexpr std::uint32_t IA32_CLOCK_MODULATION = 0x19A;
constexpr std::uint32_t IA32_APERF = 0xE8;
constexpr std::uint32_t MSR_PPERF = 0x64E;
} // namespace msr

// 0x620 layout: max ratio bits 6:0, min ratio bits 14:8, ratio unit 100 MHz.
// The layout is isolated here so a platform correction touches one place.
inline std::uint64_t encode_uncore_ratio_limit(int min_ratio, int max_ratio) {
    return (static_cast<std::uint64_t>(min_ratio & 0x7F) << 8) |
           static_cast<std::uint64_t>(max_ratio & 0x7F);
}

inline std::pair<int, int> decode_uncore_ratio_limit(std::uint64_t value) {
    int max_ratio = static_cast<int>(value & 0x7F);
    int min_ratio = static_cast<int>((value >> 8) & 0x7F);
    return {min_ratio, max_ratio};
}

constexpr std::int64_t uncore_ratio_khz = 100000; // one ratio step = 100 MHz

// Simulation defaults mirror the measured behavior of the reference
// two-socket 18-core server platform; every field is overridable.
struct SimParameters {
    std::int64_t tsc_khz = 3'000'000;
    int num_cpus = 72;

    // core P-states
    std::int64_t core_khz_min = 1'200'000;
    std::int64_t core_khz_max = 3'000'000;
    std::int64_t core_khz_step = 100'000;
    double pstate_update_interval_us = 500.0;

    // uncore frequency scaling
    int uncore_ratio_min = 12;
    int uncore_ratio_max = 24;
    double ufs_update_interval_us = 1500.0; // estimate: ~3x coarser than P-states
    double ufs_controlloop_ms = 9.8;
    double ufs_gap_us_lo = 14.5;
    double ufs_gap_us_hi = 16.0;
    double ufs_llc_cycles_low = 119.0;  // LLC access at 1.4 GHz uncore
    double ufs_llc_cycles_high = 83.0;  // LLC access at 2.4 GHz uncore
    std::int64_t ufs_llc_low_khz = 1'400'000;
    std::int64_t ufs_llc_high_khz = 2'400'000;
    // fraction of transitions where the gap stays short and the switch
    // does not take; these surface as filterable outliers
    double ufs_artifact_fraction = 0.2;
    double ufs_artifact_gap_us_lo = 3.0;
    double ufs_artifact_gap_us_hi = 4.0;

    // access-latency model
    double l1_access_core_cycles = 8.0;
    double dram_access_cycles = 280.0;

    // C-state wake-up
    double c6_wake_us_nominal = 33.0; // at core_khz_max
    double c6_wake_us_minfreq = 42.0; // at core_khz_min
    double c6_wake_us_remote_idle_lo = 46.0;
    double c6_wake_us_remote_idle_hi = 48.0;
    double c6_remote_tail_probability = 0.02;
    double c6_remote_tail_us = 55.0;
    double c1_wake_us = 2.0;
    double c1e_wake_us = 10.0;
    double wake_jitter_us = 0.1;
    double signal_delivery_us = 1.0;

    // AVX-512 license transitions
    double avx_throttle_us_lo = 62.0;
    double avx_throttle_us_hi = 75.0;
    double avx_license_residency_us_lo = 555.0;
    double avx_license_residency_us_hi = 704.0;
    std::int64_t avx_license_khz = 2'700'000;
    // residency band narrows towards its upper end as the period shrinks
    double avx_residency_full_band_period_us = 10'000.0;

    // data-dependent power, mW per bit per core, keyed by core kHz
    std::map<std::int64_t, double> power_coef_v1_mw = {{2'400'000, 1.69}, {3'000'000, 3.13}};
    std::map<std::int64_t, double> power_coef_v2_mw = {{2'400'000, 0.46}, {3'000'000, 0.80}};
    std::map<std::int64_t, double> power_base_w = {{2'400'000, 280.0}, {3'000'000, 362.0}};
    double power_noise_w_sigma = 0.0;
    int power_model_cores = 36;

    // RAPL-style package limits; window semantics deliberately unasserted
    double rapl_limit_1s_w = 240.0;
    double rapl_limit_100s_w = 200.0;

    // T-states: duty fraction lost beyond nominal as modulation deepens
    double tstate_overskip = 0.2;
    int tstate_min_implemented_level = 2; // deepest encodable level is rejected

    bool pperf_counts_stalled_cycles = true;
};

struct BackendConfig {
    BackendKind kind = BackendKind::simulation;
    std::string msr_path_template = "/dev/cpu/{cpu}/msr";
    std::string cpufreq_path_template = "/sys/devices/system/cpu/cpu{cpu}/cpufreq";
    std::string cpuidle_path_template = "/sys/devices/system/cpu/cpu{cpu}/cpuidle";
    PowerSource power_source = PowerSource::simulated;
    std::string power_file; // "t_ns,watts" lines when power_source == external_file
    SimParameters sim;
    std::uint64_t seed = 0;
};

class SimBackend;

class Backend {
public:
    virtual ~Backend() = default;

    virtual BackendKind kind() const = 0;
    virtual int num_cpus() const = 0;
    virtual std::int64_t tsc_khz() const = 0;

    virtual std::uint64_t now_cycles(int cpu) = 0;
    virtual std::uint64_t read_msr(int cpu, std::uint32_t address) = 0;
    virtual void write_msr(int cpu, std::uint32_t address, std::uint64_t value) = 0;
    virtual void set_uncore_range(int min_ratio, int max_ratio) = 0;
    virtual std::pair<int, int> uncore_range() = 0;
    virtual void set_core_frequency(int cpu, std::int64_t khz) = 0;
    virtual std::int64_t core_frequency(int cpu) = 0;
    virtual std::vector<std::int64_t> selectable_frequencies(int cpu) = 0;
    virtual std::uint64_t read_counter(int cpu, CounterEvent event) = 0;
    virtual PowerSample sample_power() = 0;
    virtual void pin_to_cpu(int cpu) = 0;
    virtual int current_cpu() = 0;

    // hw: sleep/busy-wait; sim: advance the clock
    virtual void advance_us(double us) = 0;

    virtual void set_cstate_enabled(int cpu, CState state, bool enabled) = 0;
    virtual bool cstate_enabled(int cpu, CState state) = 0;
    virtual std::string governor(int cpu) = 0;

    virtual void set_workload(int cpu, WorkloadClass wl) { (void)cpu; (void)wl; }

    virtual SimBackend* as_sim() { return nullptr; }
};

} // namespace eeprobe

#endif
