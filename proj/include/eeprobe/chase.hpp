#ifndef EEPROBE_CHASE_HPP
#define EEPROBE_CHASE_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

#if defined(__x86_64__)
#include <x86intrin.h>
#endif

namespace eeprobe {

// Single-cycle pointer-chase permutation over cache-line-sized slots.
struct ChaseBuffer {
    std::int64_t num_lines = 0;
    std::int64_t stride_bytes = 64;
    std::vector<std::int64_t> permutation; // next slot index per slot
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> memory; // backing store on the hardware path

    std::int64_t footprint_bytes() const { return num_lines * stride_bytes; }
};

// Sattolo's algorithm: a uniformly random permutation that is one cycle,
// so dependent loads serialize and visit every slot before repeating.
inline ChaseBuffer build_chase(std::int64_t num_lines, std::int64_t stride_bytes,
                               std::uint64_t seed) {
    if (num_lines < 1)
        throw Error(errc::invalid_argument, "num_lines must be >= 1");
    if (stride_bytes < 64)
        throw Error(errc::invalid_argument, "stride_bytes must be >= 64");

    ChaseBuffer buf;
    buf.num_lines = num_lines;
    buf.stride_bytes = stride_bytes;
    buf.seed = seed;
    buf.permutation.resize(static_cast<std::size_t>(num_lines));
    for (std::int64_t i = 0; i < num_lines; ++i)
        buf.permutation[static_cast<std::size_t>(i)] = i;

    std::mt19937_64 rng(seed);
    for (std::int64_t i = num_lines - 1; i > 0; --i) {
        std::uniform_int_distribution<std::int64_t> pick(0, i - 1);
        std::swap(buf.permutation[static_cast<std::size_t>(i)],
                  buf.permutation[static_cast<std::size_t>(pick(rng))]);
    }

    try {
        buf.memory.assign(static_cast<std::size_t>(buf.footprint_bytes()), 0);
    } catch (const std::bad_alloc&) {
        throw Error(errc::allocation_failure,
                    std::to_string(buf.footprint_bytes()) + " bytes for chase buffer");
    }
    // each slot stores the index of the next slot (dependent-load encoding)
    for (std::int64_t i = 0; i < num_lines; ++i) {
        auto* slot = reinterpret_cast<std::int64_t*>(
            buf.memory.data() + static_cast<std::size_t>(i * stride_bytes));
        *slot = buf.permutation[static_cast<std::size_t>(i)];
    }
    return buf;
}

struct ChasePreset {
    std::string name;
    std::int64_t num_lines;
};

// llc: 18 slices x 1.375 MiB = 24.75 MiB at 64 B lines
inline const std::vector<ChasePreset>& chase_presets() {
    static const std::vector<ChasePreset> presets = {
        {"l1", 256},        // 16 KiB
        {"llc", 405504},    // 24.75 MiB
        {"dram", 2097152},  // 128 MiB
    };
    return presets;
}

inline std::int64_t preset_lines(const std::string& name) {
    for (const auto& p : chase_presets())
        if (p.name == name)
            return p.num_lines;
    throw Error(errc::invalid_argument, "unknown chase preset '" + name + "'");
}

inline WorkloadClass classify_footprint(std::int64_t footprint_bytes) {
    if (footprint_bytes <= 32 * 1024)
        return WorkloadClass::l1_chase;
    if (footprint_bytes <= 28 * 1024 * 1024)
        return WorkloadClass::llc_chase;
    return WorkloadClass::dram_chase;
}

// Issues one dependent load at a time on either backend; the caller must
// already be pinned.
class ChaseRunner {
public:
    ChaseRunner(const ChaseBuffer& buffer, Backend& backend, int cpu)
        : buf_(&buffer), backend_(&backend), cpu_(cpu), sim_(backend.as_sim()) {
        backend_->set_workload(cpu_, classify_footprint(buffer.footprint_bytes()));
        if (!sim_) {
            // touch every page once and run one untimed lap
            for (std::int64_t i = 0; i < buf_->num_lines; ++i)
                (void)buf_->memory[static_cast<std::size_t>(i * buf_->stride_bytes)];
            for (std::int64_t i = 0; i < buf_->num_lines; ++i)
                cursor_ = next_slot(cursor_);
        }
        last_timestamp_ = backend_->now_cycles(cpu_);
    }

    ~ChaseRunner() {
        try {
            backend_->set_workload(cpu_, WorkloadClass::idle);
        } catch (...) {
        }
    }

    ChaseRunner(const ChaseRunner&) = delete;
    ChaseRunner& operator=(const ChaseRunner&) = delete;

    // one timed access; returns the duration in TSC cycles
    std::int64_t access() {
        if (sim_) {
            std::int64_t dur = sim_->simulated_access(cpu_);
            last_timestamp_ = sim_->now_cycles(cpu_);
            return dur;
        }
#if defined(__x86_64__)
        unsigned aux = 0;
        std::uint64_t t0 = __rdtscp(&aux);
        cursor_ = next_slot(cursor_);
        std::uint64_t t1 = __rdtscp(&aux);
        last_timestamp_ = t1;
        return static_cast<std::int64_t>(t1 - t0 > 0 ? t1 - t0 : 1);
#else
        throw Error(errc::backend_unavailable, "hardware chase requires x86_64");
#endif
    }

    std::uint64_t last_timestamp() const { return last_timestamp_; }

private:
    std::int64_t next_slot(std::int64_t idx) const {
        auto* slot = reinterpret_cast<const volatile std::int64_t*>(
            buf_->memory.data() + static_cast<std::size_t>(idx * buf_->stride_bytes));
        return *slot;
    }

    const ChaseBuffer* buf_;
    Backend* backend_;
    int cpu_;
    SimBackend* sim_;
    std::int64_t cursor_ = 0;
    std::uint64_t last_timestamp_ = 0;
};

inline LatencyTrace run_chase(const ChaseBuffer& buffer, std::int64_t num_accesses,
                              Backend& backend, int cpu) {
    ChaseRunner runner(buffer, backend, cpu);
    LatencyTrace trace;
    trace.tsc_khz = backend.tsc_khz();
    trace.entries.reserve(static_cast<std::size_t>(num_accesses));
    for (std::int64_t i = 0; i < num_accesses; ++i) {
        std::int64_t dur = runner.access();
        trace.entries.push_back(
            {static_cast<std::int64_t>(runner.last_timestamp()), dur});
    }
    return trace;
}

inline double average_access_cycles(const LatencyTrace& trace, std::size_t from_index,
                                    std::size_t to_index) {
    if (from_index >= to_index || to_index > trace.entries.size())
        throw Error(errc::empty_input, "average_access_cycles window is empty or out of range");
    double sum = 0.0;
    for (std::size_t i = from_index; i < to_index; ++i)
        sum += static_cast<double>(trace.entries[i].duration_cycles);
    return sum / static_cast<double>(to_index - from_index);
}

} // namespace eeprobe

#endif
