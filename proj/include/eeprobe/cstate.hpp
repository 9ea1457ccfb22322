#ifndef EEPROBE_CSTATE_HPP
#define EEPROBE_CSTATE_HPP

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

#include "eeprobe/analysis.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

#if defined(__x86_64__)
#include <x86intrin.h>
#endif

namespace eeprobe {

struct WakeupSample {
    CState cstate = CState::C6;
    CpuRelation relation = CpuRelation::local;
    std::int64_t core_khz = 0;
    double latency_us = 0.0;
    bool flagged = false;
};

struct CpuPair {
    int caller = 0;
    int callee = 0;
};

// Caller and callee placement for a relation: local stays on the first
// socket, remote crosses to the second (upper half of the logical CPUs).
inline CpuPair pick_cpu_pair(CpuRelation relation, int num_cpus) {
    if (num_cpus < 4)
        throw Error(errc::invalid_cpu, "need at least 4 logical CPUs");
    if (relation == CpuRelation::local)
        return {0, 2};
    return {0, num_cpus / 2};
}

namespace detail {

// Deeper states than the target are disabled so the callee idles in
// exactly the requested state; restored on scope exit.
class CStateScope {
public:
    CStateScope(Backend& backend, int cpu, CState target) : backend_(&backend), cpu_(cpu) {
        static constexpr CState order[] = {CState::C1, CState::C1E, CState::C6};
        bool past_target = target == CState::C0poll;
        for (CState s : order) {
            if (past_target) {
                saved_.push_back({s, backend_->cstate_enabled(cpu_, s)});
                backend_->set_cstate_enabled(cpu_, s, false);
            }
            if (s == target)
                past_target = true;
        }
    }

    ~CStateScope() {
        for (auto& [s, enabled] : saved_) {
            try {
                backend_->set_cstate_enabled(cpu_, s, enabled);
            } catch (...) {
            }
        }
    }

private:
    Backend* backend_;
    int cpu_;
    std::vector<std::pair<CState, bool>> saved_;
};

#if defined(__x86_64__)
// Two pinned threads; the caller stamps the TSC right before signaling,
// the callee right after unblocking. Userspace timestamping adds the
// signal-delivery overhead that wakeup_baseline quantifies; kernel-side
// confirmation is possible via the sched:sched_wake_idle_without_ipi and
// power:cpu_idle tracepoints.
inline double hw_wakeup_once(Backend& backend, const CpuPair& pair, bool poll,
                             double sleep_us) {
    std::mutex m;
    std::condition_variable cv;
    bool go = false;
    std::atomic<std::uint64_t> t_signal{0};
    std::atomic<std::uint64_t> t_awake{0};

    std::thread callee([&] {
        backend.pin_to_cpu(pair.callee);
        unsigned aux = 0;
        if (poll) {
            while (t_signal.load(std::memory_order_acquire) == 0)
                ;
            t_awake.store(__rdtscp(&aux), std::memory_order_release);
            return;
        }
        std::unique_lock<std::mutex> lk(m);
        cv.wait(lk, [&] { return go; });
        t_awake.store(__rdtscp(&aux), std::memory_order_release);
    });

    backend.pin_to_cpu(pair.caller);
    backend.advance_us(sleep_us);
    unsigned aux = 0;
    if (poll) {
        t_signal.store(__rdtscp(&aux), std::memory_order_release);
    } else {
        {
            std::lock_guard<std::mutex> lk(m);
            go = true;
            t_signal.store(__rdtscp(&aux), std::memory_order_release);
        }
        cv.notify_one();
    }
    callee.join();
    double delta = static_cast<double>(t_awake.load() - t_signal.load());
    return delta * 1000.0 / static_cast<double>(backend.tsc_khz());
}
#endif

} // namespace detail

// Wake-up latency between a caller and a callee CPU: the callee blocks on
// a condition, the caller sleeps about a second and signals.
inline std::vector<WakeupSample> measure_wakeup(Backend& backend, CState cstate,
                                                CpuRelation relation, std::int64_t core_khz,
                                                int reps = 100, double sleep_us = 1e6) {
    CpuPair pair = pick_cpu_pair(relation, backend.num_cpus());
    detail::CStateScope scope(backend, pair.callee, cstate);
    backend.set_core_frequency(pair.callee, core_khz);
    backend.set_core_frequency(pair.caller, core_khz);

    std::vector<WakeupSample> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    if (auto* sim = backend.as_sim()) {
        for (int rep = 0; rep < reps; ++rep) {
            backend.advance_us(sleep_us);
            WakeupSample s;
            s.cstate = cstate;
            s.relation = relation;
            s.core_khz = core_khz;
            s.latency_us = sim->simulated_wakeup(pair.callee, cstate, relation, core_khz);
            samples.push_back(s);
        }
        return samples;
    }
#if defined(__x86_64__)
    for (int rep = 0; rep < reps; ++rep) {
        WakeupSample s;
        s.cstate = cstate;
        s.relation = relation;
        s.core_khz = core_khz;
        s.latency_us =
            detail::hw_wakeup_once(backend, pair, cstate == CState::C0poll, sleep_us);
        if (s.latency_us <= 0.0)
            s.latency_us = 0.001;
        samples.push_back(s);
    }
    return samples;
#else
    throw Error(errc::backend_unavailable, "hardware wake-up needs x86_64");
#endif
}

// Signal-delivery floor with no C-state exit: the callee busy-polls.
inline double wakeup_baseline(Backend& backend, CpuRelation relation, int reps) {
    auto samples = measure_wakeup(backend, CState::C0poll, relation,
                                  backend.core_frequency(0), reps, 1000.0);
    std::vector<double> lat;
    lat.reserve(samples.size());
    for (const auto& s : samples)
        lat.push_back(s.latency_us);
    return summarize(lat).p50;
}

struct WakeupSweepResult {
    std::vector<WakeupSample> samples;
    double baseline_us = 0.0;
};

// Full C-state x P-state sweep for one relation, reps per cell.
inline WakeupSweepResult sweep_wakeup(Backend& backend, const std::vector<CState>& cstates,
                                      const std::vector<std::int64_t>& khz_list,
                                      CpuRelation relation, int reps, double sleep_us = 1e6) {
    WakeupSweepResult result;
    result.baseline_us = wakeup_baseline(backend, relation, std::max(10, reps / 10));
    for (CState c : cstates)
        for (std::int64_t khz : khz_list) {
            auto cell = measure_wakeup(backend, c, relation, khz, reps, sleep_us);
            result.samples.insert(result.samples.end(), cell.begin(), cell.end());
        }
    return result;
}

} // namespace eeprobe

#endif
