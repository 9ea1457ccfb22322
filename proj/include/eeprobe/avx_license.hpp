#ifndef EEPROBE_AVX_LICENSE_HPP
#define EEPROBE_AVX_LICENSE_HPP

#include <algorithm>
#include <barrier>
#include <cstdint>
#include <map>
#include <thread>
#include <vector>

#include "eeprobe/analysis.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

#if defined(__x86_64__)
#include <immintrin.h>
#include <x86intrin.h>
#endif

namespace eeprobe {

// mirrors the stress-test invocation -l <low %> -p <period us> -t <duration s>
struct HighLowConfig {
    std::int64_t period_us = 2'000'000;
    int low_fraction_pct = 50;
    std::int64_t duration_s = 300;
    std::vector<int> cpus = {0};
    std::int64_t core_khz = 3'000'000;
    // the reference stress test's High phase also touches memory; off by
    // default to isolate license effects from uncore effects
    bool high_memory = false;

    void validate() const {
        if (low_fraction_pct < 0 || low_fraction_pct > 100)
            throw Error(errc::invalid_argument, "low fraction must be 0..100 %");
        if (period_us < 100)
            throw Error(errc::invalid_argument, "period must be >= 100 us");
        if (cpus.empty())
            throw Error(errc::invalid_argument, "need at least one cpu");
    }
};

struct HighLowResult {
    std::map<int, std::vector<LicensePhaseRecord>> records; // per cpu
    int overrun_phases = 0; // wall time > 1.5x nominal, flagged not failed
};

namespace detail {

#if defined(__x86_64__)
// High: register-only 512-bit FMA to hold the AVX-512 license. Low: long
// running serializing instructions (mfence, cpuid).
inline void hw_high_kernel_until(std::uint64_t end_tsc, const double* stream = nullptr,
                                 std::size_t stream_len = 0) {
#if defined(__AVX512F__)
    __m512d a = _mm512_set1_pd(1.000000059604645);
    __m512d b = _mm512_set1_pd(0.999999940395355);
    __m512d c = _mm512_set1_pd(0.0);
    unsigned aux = 0;
    std::size_t pos = 0;
    while (__rdtscp(&aux) < end_tsc) {
        for (int i = 0; i < 64; ++i)
            c = _mm512_fmadd_pd(a, b, c);
        if (stream) {
            c = _mm512_fmadd_pd(a, _mm512_loadu_pd(stream + pos), c);
            pos = (pos + 8) % stream_len;
        }
    }
    volatile double sink = _mm512_reduce_add_pd(c);
    (void)sink;
#else
    (void)end_tsc;
    (void)stream;
    (void)stream_len;
    throw Error(errc::backend_unavailable, "binary built without AVX-512 support");
#endif
}

inline void hw_low_kernel_until(std::uint64_t end_tsc) {
    unsigned aux = 0;
    while (__rdtscp(&aux) < end_tsc) {
        _mm_mfence();
        unsigned eax = 0, ebx, ecx, edx;
        asm volatile("cpuid" : "+a"(eax), "=b"(ebx), "=c"(ecx), "=d"(edx)::);
    }
}
#endif

} // namespace detail

// Alternating High/Low phases on every configured CPU with counters
// sampled at each phase boundary.
inline HighLowResult run_high_low(const HighLowConfig& config, Backend& backend) {
    config.validate();
    for (int cpu : config.cpus)
        backend.set_core_frequency(cpu, config.core_khz);

    std::int64_t iterations = config.duration_s * 1'000'000 / config.period_us;
    double low_us = static_cast<double>(config.period_us) * config.low_fraction_pct / 100.0;
    double high_us = static_cast<double>(config.period_us) - low_us;

    HighLowResult result;
    for (int cpu : config.cpus)
        result.records[cpu] = {};

    struct Snapshot {
        std::uint64_t throttle, license2, aperf;
    };
    auto snap = [&](int cpu) {
        return Snapshot{backend.read_counter(cpu, CounterEvent::throttle),
                        backend.read_counter(cpu, CounterEvent::license2),
                        backend.read_counter(cpu, CounterEvent::aperf)};
    };

    auto book = [&](PhaseKind kind, double dur_us, const std::map<int, Snapshot>& before,
                    std::int64_t wall_ns) {
        double nominal_ns = dur_us * 1000.0;
        if (static_cast<double>(wall_ns) > 1.5 * nominal_ns)
            ++result.overrun_phases;
        for (int cpu : config.cpus) {
            Snapshot after = snap(cpu);
            const Snapshot& b = before.at(cpu);
            result.records[cpu].emplace_back(
                kind, static_cast<std::int64_t>(after.aperf - b.aperf),
                static_cast<std::int64_t>(after.throttle - b.throttle),
                static_cast<std::int64_t>(after.license2 - b.license2), wall_ns);
        }
    };

    if (auto* sim = backend.as_sim()) {
        for (std::int64_t it = 0; it < iterations; ++it) {
            for (PhaseKind kind : {PhaseKind::High, PhaseKind::Low}) {
                double dur_us = kind == PhaseKind::High ? high_us : low_us;
                if (dur_us <= 0.0)
                    continue;
                std::map<int, Snapshot> before;
                for (int cpu : config.cpus)
                    before[cpu] = snap(cpu);
                std::uint64_t t0 = sim->now_cycles(config.cpus[0]);
                sim->run_phase(config.cpus, kind, dur_us,
                               static_cast<double>(config.period_us));
                std::uint64_t t1 = sim->now_cycles(config.cpus[0]);
                std::int64_t wall_ns = static_cast<std::int64_t>(
                    static_cast<double>(t1 - t0) * 1e6 / static_cast<double>(sim->tsc_khz()));
                book(kind, dur_us, before, wall_ns);
            }
        }
        return result;
    }

#if defined(__x86_64__)
    // one pinned worker per CPU; an epoch barrier keeps phase starts aligned
    const auto n = static_cast<std::ptrdiff_t>(config.cpus.size());
    std::barrier sync(n + 1);
    std::atomic<int> phase_kind{-1}; // -1 stop, 0 High, 1 Low
    std::atomic<std::uint64_t> phase_end{0};

    std::vector<std::thread> workers;
    for (int cpu : config.cpus) {
        workers.emplace_back([&, cpu] {
            backend.pin_to_cpu(cpu);
            std::vector<double> stream;
            if (config.high_memory)
                stream.assign(1 << 16, 1.0);
            for (;;) {
                sync.arrive_and_wait();
                int k = phase_kind.load(std::memory_order_acquire);
                if (k < 0)
                    return;
                std::uint64_t end = phase_end.load(std::memory_order_acquire);
                if (k == 0)
                    detail::hw_high_kernel_until(end, stream.empty() ? nullptr : stream.data(),
                                                 stream.size());
                else
                    detail::hw_low_kernel_until(end);
                sync.arrive_and_wait();
            }
        });
    }

    double tsc_khz = static_cast<double>(backend.tsc_khz());
    for (std::int64_t it = 0; it < iterations; ++it) {
        for (PhaseKind kind : {PhaseKind::High, PhaseKind::Low}) {
            double dur_us = kind == PhaseKind::High ? high_us : low_us;
            if (dur_us <= 0.0)
                continue;
            std::map<int, Snapshot> before;
            for (int cpu : config.cpus)
                before[cpu] = snap(cpu);
            std::uint64_t t0 = backend.now_cycles(config.cpus[0]);
            phase_kind.store(kind == PhaseKind::High ? 0 : 1, std::memory_order_release);
            phase_end.store(t0 + static_cast<std::uint64_t>(dur_us * tsc_khz / 1000.0),
                            std::memory_order_release);
            sync.arrive_and_wait(); // start
            sync.arrive_and_wait(); // end
            std::uint64_t t1 = backend.now_cycles(config.cpus[0]);
            book(kind, dur_us, before,
                 static_cast<std::int64_t>(static_cast<double>(t1 - t0) * 1e6 / tsc_khz));
        }
    }
    phase_kind.store(-1, std::memory_order_release);
    sync.arrive_and_wait();
    for (auto& w : workers)
        w.join();
    return result;
#else
    throw Error(errc::backend_unavailable, "hardware High/Low run needs x86_64");
#endif
}

struct LicenseSummary {
    SummaryStats throttle_us_per_transition;
    SummaryStats low_license_us;
    SummaryStats throttle_fraction_high;
    SummaryStats license_fraction_low;
    std::map<int, SummaryStats> per_thread_throttle_us;
    std::map<int, SummaryStats> per_thread_low_license_us;
};

// throttle cycles convert at the phase's effective frequency, license
// cycles at the license-level frequency.
inline LicenseSummary summarize_license(const std::map<int, std::vector<LicensePhaseRecord>>& records,
                                        std::int64_t core_khz, std::int64_t license_khz) {
    if (records.empty())
        throw Error(errc::empty_input, "no phase records");
    double core_kcyc_per_us = static_cast<double>(core_khz) / 1000.0;
    double lic_kcyc_per_us = static_cast<double>(license_khz) / 1000.0;

    std::vector<double> thr_us_all, lic_us_all, thr_frac, lic_frac;
    LicenseSummary out;
    for (const auto& [cpu, recs] : records) {
        std::vector<double> thr_us_cpu, lic_us_cpu;
        for (const auto& r : recs) {
            if (r.kind == PhaseKind::High) {
                double us = static_cast<double>(r.cycles_throttled) / core_kcyc_per_us;
                thr_us_cpu.push_back(us);
                thr_frac.push_back(r.cycles_total > 0
                                       ? static_cast<double>(r.cycles_throttled) /
                                             static_cast<double>(r.cycles_total)
                                       : 0.0);
            } else {
                double us = static_cast<double>(r.cycles_license2) / lic_kcyc_per_us;
                lic_us_cpu.push_back(us);
                lic_frac.push_back(r.cycles_total > 0
                                       ? static_cast<double>(r.cycles_license2) /
                                             static_cast<double>(r.cycles_total)
                                       : 0.0);
            }
        }
        if (!thr_us_cpu.empty())
            out.per_thread_throttle_us[cpu] = summarize(thr_us_cpu);
        if (!lic_us_cpu.empty())
            out.per_thread_low_license_us[cpu] = summarize(lic_us_cpu);
        thr_us_all.insert(thr_us_all.end(), thr_us_cpu.begin(), thr_us_cpu.end());
        lic_us_all.insert(lic_us_all.end(), lic_us_cpu.begin(), lic_us_cpu.end());
    }
    if (!thr_us_all.empty())
        out.throttle_us_per_transition = summarize(thr_us_all);
    if (!lic_us_all.empty())
        out.low_license_us = summarize(lic_us_all);
    if (!thr_frac.empty())
        out.throttle_fraction_high = summarize(thr_frac);
    if (!lic_frac.empty())
        out.license_fraction_low = summarize(lic_frac);
    return out;
}

} // namespace eeprobe

#endif
