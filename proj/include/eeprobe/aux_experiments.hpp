#ifndef EEPROBE_AUX_EXPERIMENTS_HPP
#define EEPROBE_AUX_EXPERIMENTS_HPP

#include <cstdint>
#include <vector>

#include "eeprobe/chase.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

namespace eeprobe {

struct TstateResult {
    int level = 0;
    double nominal_duty = 1.0;
    double effective_duty = 1.0;
    bool implemented = true;
};

namespace detail {

// register-only arithmetic loop; completed iterations map linearly to
// unskipped cycles
inline std::uint64_t hw_arith_iterations(Backend& backend, int cpu, double duration_us) {
    std::uint64_t end = backend.now_cycles(cpu) +
                        static_cast<std::uint64_t>(duration_us *
                                                   static_cast<double>(backend.tsc_khz()) /
                                                   1000.0);
    volatile std::uint64_t a = 1, b = 2, c = 3, d = 4;
    std::uint64_t iters = 0;
    while (backend.now_cycles(cpu) < end) {
        for (int i = 0; i < 1024; ++i) {
            a = a + b;
            b = b + c;
            c = c + d;
            d = d + a;
        }
        ++iters;
    }
    return iters;
}

} // namespace detail

// Effective duty cycle under clock modulation: work completed modulated
// over work completed unmodulated in the same wall time.
inline TstateResult measure_tstate(int level, std::int64_t duration_s, Backend& backend,
                                   int cpu = 0) {
    if (level < 0 || level > 15)
        throw Error(errc::invalid_argument, "duty level must be 0..15");

    TstateResult result;
    result.level = level;
    result.nominal_duty = level == 0 ? 1.0 : static_cast<double>(level) / 16.0;

    std::uint64_t saved = backend.read_msr(cpu, msr::IA32_CLOCK_MODULATION);
    double dur_us = static_cast<double>(duration_s) * 1e6;
    try {
        if (auto* sim = backend.as_sim()) {
            backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, 0);
            backend.advance_us(dur_us);
            std::uint64_t reg = level == 0 ? 0 : (0x10ull | static_cast<std::uint64_t>(level));
            backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, reg);
            backend.advance_us(dur_us);
            result.effective_duty = sim->simulated_duty(cpu);
            result.implemented =
                level == 0 ||
                level >= sim->params().tstate_min_implemented_level;
        } else {
            backend.pin_to_cpu(cpu);
            backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, 0);
            std::uint64_t base = detail::hw_arith_iterations(backend, cpu, dur_us);
            std::uint64_t reg = level == 0 ? 0 : (0x10ull | static_cast<std::uint64_t>(level));
            backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, reg);
            std::uint64_t readback = backend.read_msr(cpu, msr::IA32_CLOCK_MODULATION);
            result.implemented = readback == reg;
            std::uint64_t modulated = detail::hw_arith_iterations(backend, cpu, dur_us);
            result.effective_duty =
                base > 0 ? static_cast<double>(modulated) / static_cast<double>(base) : 0.0;
        }
    } catch (...) {
        backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, saved);
        throw;
    }
    backend.write_msr(cpu, msr::IA32_CLOCK_MODULATION, saved);
    return result;
}

enum class PperfWorkload { stall_chase, compute };

// PPERF delta over APERF delta for a stalled or compute-bound run.
inline double measure_pperf_ratio(PperfWorkload workload, std::int64_t duration_s,
                                  Backend& backend, int cpu = 0) {
    backend.pin_to_cpu(cpu);
    double dur_us = static_cast<double>(duration_s) * 1e6;

    std::uint64_t aperf0 = backend.read_counter(cpu, CounterEvent::aperf);
    std::uint64_t pperf0 = backend.read_counter(cpu, CounterEvent::pperf);

    if (backend.as_sim()) {
        backend.set_workload(cpu, workload == PperfWorkload::stall_chase
                                      ? WorkloadClass::dram_chase
                                      : WorkloadClass::compute);
        backend.advance_us(dur_us);
        backend.set_workload(cpu, WorkloadClass::idle);
    } else if (workload == PperfWorkload::stall_chase) {
        ChaseBuffer buf = build_chase(preset_lines("dram"), 64, 1);
        ChaseRunner runner(buf, backend, cpu);
        std::uint64_t end = backend.now_cycles(cpu) +
                            static_cast<std::uint64_t>(
                                dur_us * static_cast<double>(backend.tsc_khz()) / 1000.0);
        while (backend.now_cycles(cpu) < end)
            (void)runner.access();
    } else {
        (void)detail::hw_arith_iterations(backend, cpu, dur_us);
    }

    std::uint64_t aperf1 = backend.read_counter(cpu, CounterEvent::aperf);
    std::uint64_t pperf1 = backend.read_counter(cpu, CounterEvent::pperf);
    if (aperf1 <= aperf0)
        throw Error(errc::counter_unavailable, "aperf did not advance");
    return static_cast<double>(pperf1 - pperf0) / static_cast<double>(aperf1 - aperf0);
}

// Sweep over all encodable duty settings; unsupported ones are reported.
inline std::vector<TstateResult> sweep_tstates(std::int64_t duration_s, Backend& backend,
                                               int cpu = 0) {
    std::vector<TstateResult> out;
    for (int level = 15; level >= 1; --level)
        out.push_back(measure_tstate(level, duration_s, backend, cpu));
    return out;
}

} // namespace eeprobe

#endif
