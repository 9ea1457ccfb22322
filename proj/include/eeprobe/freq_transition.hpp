#ifndef EEPROBE_FREQ_TRANSITION_HPP
#define EEPROBE_FREQ_TRANSITION_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "eeprobe/analysis.hpp"
#include "eeprobe/chase.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"

namespace eeprobe {

struct GapEvent {
    std::size_t index = 0;
    std::int64_t gap_cycles = 0;
    double gap_us = 0.0;
};

// First access whose duration exceeds the threshold, if any.
inline std::optional<GapEvent> detect_transition(const LatencyTrace& trace,
                                                 std::int64_t threshold_cycles = 20000) {
    for (std::size_t i = 0; i < trace.entries.size(); ++i) {
        const auto& e = trace.entries[i];
        if (e.duration_cycles > threshold_cycles)
            return GapEvent{i, e.duration_cycles,
                            trace.cycles_to_us(static_cast<double>(e.duration_cycles))};
    }
    return std::nullopt;
}

// Slow chases (DRAM-sized footprints) would trip a fixed threshold; keep
// the gap-to-baseline ratio instead once the baseline gets large.
inline std::int64_t scaled_threshold(double steady_cycles, std::int64_t base = 20000) {
    if (steady_cycles > 2000.0)
        return static_cast<std::int64_t>(std::llround(steady_cycles * 100.0));
    return base;
}

enum class TriggerMode { random, immediate };

struct CoreTransitionOptions {
    int window = 64;             // performance-reflects-target window
    double tol = 0.05;           // relative tolerance on the window mean
    double probe_interval_us = 5.0;
    double update_interval_us = 500.0;
    double bin_us = 25.0;
    double timeout_us = 5000.0;
    std::int64_t chase_lines = 256; // L1-resident probe
};

struct CoreTransitionResult {
    std::vector<double> samples_us;
    Histogram hist;
    double latency_from_cycles = 0.0;
    double latency_to_cycles = 0.0;
};

namespace detail {

inline double window_mean(ChaseRunner& runner, int window) {
    double sum = 0.0;
    for (int i = 0; i < window; ++i)
        sum += static_cast<double>(runner.access());
    return sum / window;
}

// Probes until a window mean lands within tol of target; returns the
// window-start timestamp of the first matching probe and the probe count.
inline std::pair<std::uint64_t, int> probe_until(Backend& backend, int cpu, ChaseRunner& runner,
                                                 double target, double tol,
                                                 double probe_interval_us, double timeout_us,
                                                 int window) {
    std::uint64_t start = backend.now_cycles(cpu);
    std::uint64_t timeout_cycles = static_cast<std::uint64_t>(
        timeout_us * static_cast<double>(backend.tsc_khz()) / 1000.0);
    int probes = 0;
    for (;;) {
        std::uint64_t w_start = backend.now_cycles(cpu);
        double mean = window_mean(runner, window);
        if (std::abs(mean - target) <= tol * target)
            return {w_start, probes};
        if (backend.now_cycles(cpu) - start > timeout_cycles)
            throw Error(errc::verification_failure, "target latency not reached before timeout");
        backend.advance_us(probe_interval_us);
        ++probes;
    }
}

inline double settle_latency(Backend& backend, int cpu, ChaseRunner& runner, double settle_us,
                             int window) {
    backend.advance_us(settle_us);
    return window_mean(runner, window);
}

} // namespace detail

// FTaLaT-style core P-state transition time: time from the frequency
// request until workload performance reflects the target frequency.
inline CoreTransitionResult measure_core_transition(Backend& backend, int cpu,
                                                    std::int64_t from_khz, std::int64_t to_khz,
                                                    TriggerMode trigger, int reps,
                                                    std::uint64_t seed,
                                                    CoreTransitionOptions opts = {}) {
    backend.pin_to_cpu(cpu);
    ChaseBuffer buf = build_chase(opts.chase_lines, 64, seed);
    ChaseRunner runner(buf, backend, cpu);
    std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
    double tsc_khz = static_cast<double>(backend.tsc_khz());

    double settle = 2.0 * opts.update_interval_us + 100.0;
    backend.set_core_frequency(cpu, from_khz);
    double lat_from = detail::settle_latency(backend, cpu, runner, settle, opts.window);
    backend.set_core_frequency(cpu, to_khz);
    double lat_to = detail::settle_latency(backend, cpu, runner, settle, opts.window);

    CoreTransitionResult result;
    result.latency_from_cycles = lat_from;
    result.latency_to_cycles = lat_to;

    // probes repeat every interval plus one measurement window; randomizing
    // the phase of the first probe de-correlates the probe grid from the
    // request, so the half-spacing correction leaves an unbiased sample
    double spacing_us =
        opts.probe_interval_us + opts.window * lat_from * 1000.0 / tsc_khz;
    std::uniform_real_distribution<double> phase(0.0, spacing_us);

    for (int rep = 0; rep < reps; ++rep) {
        backend.set_core_frequency(cpu, from_khz);
        detail::probe_until(backend, cpu, runner, lat_from, opts.tol, opts.probe_interval_us,
                            opts.timeout_us, opts.window);
        if (trigger == TriggerMode::random) {
            std::uniform_real_distribution<double> u(0.0, opts.update_interval_us);
            backend.advance_us(u(rng));
        }
        std::uint64_t t_req = backend.now_cycles(cpu);
        backend.set_core_frequency(cpu, to_khz);
        backend.advance_us(phase(rng));
        auto [w_start, probes] = detail::probe_until(backend, cpu, runner, lat_to, opts.tol,
                                                     opts.probe_interval_us, opts.timeout_us,
                                                     opts.window);
        (void)probes;
        double us = static_cast<double>(w_start - t_req) * 1000.0 / tsc_khz - spacing_us / 2.0;
        result.samples_us.push_back(std::max(0.0, us));
    }

    result.hist = build_histogram(result.samples_us, opts.bin_us, 0.0);
    return result;
}

struct UncoreForcedOptions {
    int latency_window = 256;
    double tol = 0.10;
    double settle_us = 3000.0;  // past update interval plus gap
    double timeout_us = 4000.0;
    int max_retries = 50;
    std::int64_t chase_lines = 405504; // LLC preset
};

namespace detail {

inline int khz_to_ratio(std::int64_t khz) {
    if (khz <= 0 || khz % uncore_ratio_khz != 0)
        throw Error(errc::invalid_argument,
                    "uncore frequency must be a multiple of " + std::to_string(uncore_ratio_khz) +
                        " kHz");
    return static_cast<int>(khz / uncore_ratio_khz);
}

// Pins the uncore and waits until the LLC latency confirms it took;
// transitions occasionally do not take and need a rewrite.
inline double pin_uncore_settled(Backend& backend, int cpu, ChaseRunner& runner, int ratio,
                                 double expected_cycles, const UncoreForcedOptions& opts) {
    (void)cpu;
    if (expected_cycles <= 0.0) {
        // calibration: once a pin takes, re-pinning is a no-op, so after a
        // handful of rounds the final window reflects the pinned frequency
        double mean = 0.0;
        for (int attempt = 0; attempt < 7; ++attempt) {
            backend.set_uncore_range(ratio, ratio);
            backend.advance_us(opts.settle_us);
            mean = window_mean(runner, opts.latency_window);
        }
        return mean;
    }
    for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
        backend.set_uncore_range(ratio, ratio);
        backend.advance_us(opts.settle_us);
        double mean = window_mean(runner, opts.latency_window);
        if (std::abs(mean - expected_cycles) <= 0.02 * expected_cycles)
            return mean;
    }
    throw Error(errc::verification_failure, "uncore pin did not settle");
}

} // namespace detail

// Forced uncore switches: t_delay from the MSR write to the gap start,
// t_gap from the width of the stalled access.
inline std::vector<TransitionMeasurement>
measure_uncore_forced(Backend& backend, int cpu, std::int64_t low_khz, std::int64_t high_khz,
                      int reps, std::uint64_t seed, UncoreForcedOptions opts = {}) {
    int low_ratio = detail::khz_to_ratio(low_khz);
    int high_ratio = detail::khz_to_ratio(high_khz);
    backend.pin_to_cpu(cpu);
    ChaseBuffer buf = build_chase(opts.chase_lines, 64, seed);
    ChaseRunner runner(buf, backend, cpu);
    double tsc_khz = static_cast<double>(backend.tsc_khz());

    double lat_low = detail::pin_uncore_settled(backend, cpu, runner, low_ratio, 0.0, opts);
    double lat_high = detail::pin_uncore_settled(backend, cpu, runner, high_ratio, 0.0, opts);
    std::int64_t threshold = scaled_threshold(lat_low);

    std::vector<TransitionMeasurement> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    for (int rep = 0; rep < reps; ++rep) {
        detail::pin_uncore_settled(backend, cpu, runner, low_ratio, lat_low, opts);

        double before = detail::window_mean(runner, opts.latency_window);

        std::uint64_t t_req = backend.now_cycles(cpu);
        backend.set_uncore_range(high_ratio, high_ratio);

        std::uint64_t timeout_cycles =
            static_cast<std::uint64_t>(opts.timeout_us * tsc_khz / 1000.0);
        std::optional<std::pair<std::uint64_t, std::int64_t>> gap; // (completion ts, duration)
        while (backend.now_cycles(cpu) - t_req < timeout_cycles) {
            std::int64_t dur = runner.access();
            if (dur > threshold) {
                gap = {runner.last_timestamp(), dur};
                break;
            }
        }

        double after = detail::window_mean(runner, opts.latency_window);

        TransitionMeasurement m;
        m.latency_before_cycles = before;
        m.latency_after_cycles = after;
        if (gap) {
            std::uint64_t gap_start = gap->first - static_cast<std::uint64_t>(gap->second);
            m.t_delay_us = static_cast<double>(gap_start - t_req) * 1000.0 / tsc_khz;
            m.t_gap_us = (static_cast<double>(gap->second) - after) * 1000.0 / tsc_khz;
            if (m.t_gap_us < 0.0)
                m.t_gap_us = 0.0;
            m.valid = std::abs(before - lat_low) <= opts.tol * lat_low &&
                      std::abs(after - lat_high) <= opts.tol * lat_high;
        }
        samples.push_back(m);
    }
    return samples;
}

struct ControlLoopOptions {
    int latency_window = 256;
    double tol = 0.10;
    double train_settle_us = 14000.0; // control loop + update interval + margin
    double timeout_us = 15000.0;
    std::int64_t llc_lines = 405504;
    std::int64_t l1_lines = 256;
    int train_laps = 1000;
};

struct ControlLoopResult {
    std::vector<double> samples_us; // t_controlloop + t_delay
    int rejected = 0;
    double latency_low_cycles = 0.0;
    double latency_high_cycles = 0.0;
};

// Default-control-loop reaction: train towards a low uncore frequency
// with an L1-resident chase, switch to an LLC set, time until the switch.
inline ControlLoopResult measure_uncore_controlloop(Backend& backend, int cpu, int reps,
                                                    std::uint64_t seed,
                                                    ControlLoopOptions opts = {}) {
    backend.pin_to_cpu(cpu);
    ChaseBuffer llc_buf = build_chase(opts.llc_lines, 64, seed);
    ChaseBuffer l1_buf = build_chase(opts.l1_lines, 64, seed + 1);
    double tsc_khz = static_cast<double>(backend.tsc_khz());

    auto [min_ratio, max_ratio] = backend.uncore_range();

    ControlLoopResult result;
    {
        // calibrate expected LLC latencies at the pinned extremes
        UncoreForcedOptions fo;
        ChaseRunner runner(llc_buf, backend, cpu);
        result.latency_low_cycles =
            detail::pin_uncore_settled(backend, cpu, runner, min_ratio, 0.0, fo);
        result.latency_high_cycles =
            detail::pin_uncore_settled(backend, cpu, runner, max_ratio, 0.0, fo);
    }
    backend.set_uncore_range(min_ratio, max_ratio); // hand control back to the loop
    std::int64_t threshold = scaled_threshold(result.latency_low_cycles);

    int attempts = 0;
    while (static_cast<int>(result.samples_us.size()) < reps && attempts < reps * 4 + 16) {
        ++attempts;
        {
            ChaseRunner train(l1_buf, backend, cpu);
            for (int lap = 0; lap < opts.train_laps; ++lap)
                (void)train.access();
            backend.advance_us(opts.train_settle_us);
        }

        std::uint64_t t0 = backend.now_cycles(cpu);
        ChaseRunner runner(llc_buf, backend, cpu);
        std::uint64_t timeout_cycles =
            static_cast<std::uint64_t>(opts.timeout_us * tsc_khz / 1000.0);

        double before_sum = 0.0;
        int before_n = 0;
        std::optional<std::pair<std::uint64_t, std::int64_t>> gap;
        while (backend.now_cycles(cpu) - t0 < timeout_cycles) {
            std::int64_t dur = runner.access();
            if (dur > threshold) {
                gap = {runner.last_timestamp(), dur};
                break;
            }
            if (before_n < opts.latency_window) {
                before_sum += static_cast<double>(dur);
                ++before_n;
            }
        }
        if (!gap || before_n == 0) {
            ++result.rejected;
            continue;
        }
        double before = before_sum / before_n;
        double after_sum = 0.0;
        for (int i = 0; i < opts.latency_window; ++i)
            after_sum += static_cast<double>(runner.access());
        double after = after_sum / opts.latency_window;

        bool ok = std::abs(before - result.latency_low_cycles) <=
                      opts.tol * result.latency_low_cycles &&
                  std::abs(after - result.latency_high_cycles) <=
                      opts.tol * result.latency_high_cycles;
        if (!ok) {
            ++result.rejected;
            continue;
        }
        std::uint64_t gap_start = gap->first - static_cast<std::uint64_t>(gap->second);
        result.samples_us.push_back(static_cast<double>(gap_start - t0) * 1000.0 / tsc_khz);
    }
    return result;
}

// Partition into (accepted, rejected) by before/after latency tolerance.
inline std::pair<std::vector<TransitionMeasurement>, std::vector<TransitionMeasurement>>
filter_invalid(const std::vector<TransitionMeasurement>& samples, double expected_before,
               double expected_after, double tol_fraction = 0.10) {
    std::vector<TransitionMeasurement> accepted, rejected;
    for (const auto& s : samples) {
        bool ok = std::abs(s.latency_before_cycles - expected_before) <=
                      tol_fraction * expected_before &&
                  std::abs(s.latency_after_cycles - expected_after) <=
                      tol_fraction * expected_after;
        (ok ? accepted : rejected).push_back(s);
    }
    return {std::move(accepted), std::move(rejected)};
}

} // namespace eeprobe

#endif
