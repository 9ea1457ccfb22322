#ifndef EEPROBE_DATAPOWER_HPP
#define EEPROBE_DATAPOWER_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "eeprobe/analysis.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

#if defined(__x86_64__) && defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace eeprobe {

// 512-bit operand as 8x64-bit words.
using Operand = std::array<std::uint64_t, 8>;

inline int popcount(const Operand& op) {
    int bits = 0;
    for (std::uint64_t w : op)
        bits += std::popcount(w);
    return bits;
}

// Exactly `popcount` set bits at seed-drawn uniform positions.
inline Operand make_operand(int popcount_bits, int width_bits = 512, std::uint64_t seed = 0) {
    if (width_bits <= 0 || width_bits > 512)
        throw Error(errc::range_violation, "width must be in (0, 512]");
    if (popcount_bits < 0 || popcount_bits > width_bits)
        throw Error(errc::range_violation, "popcount must lie in [0, width]");
    std::vector<int> positions(static_cast<std::size_t>(width_bits));
    std::iota(positions.begin(), positions.end(), 0);
    std::mt19937_64 rng(seed);
    Operand op{};
    for (int k = 0; k < popcount_bits; ++k) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k),
                                                        positions.size() - 1);
        std::swap(positions[static_cast<std::size_t>(k)], positions[pick(rng)]);
        int bit = positions[static_cast<std::size_t>(k)];
        op[static_cast<std::size_t>(bit / 64)] |= 1ull << (bit % 64);
    }
    return op;
}

struct SweepPoint {
    int popcnt_v1 = 0;
    int popcnt_v2 = 0;
    std::int64_t core_khz = 0;
    std::vector<PowerSample> samples;
    bool frequency_drift = false;
};

struct XorPointOptions {
    int min_samples = 50;
    double sample_interval_ms = 100.0;
    int active_cores = 36;
    double freq_drift_tol = 0.01;
};

#if defined(__x86_64__) && defined(__AVX512F__)
namespace detail {
// value1 in zmm0-7, value2 in zmm8-15; value2 ^= value1 in a loop,
// unrolled over the 8 independent register pairs
inline void xor_kernel(const Operand& v1, const Operand& v2, std::atomic<bool>& stop) {
    __m512i a = _mm512_loadu_si512(v1.data());
    __m512i b0 = _mm512_loadu_si512(v2.data());
    __m512i b1 = b0, b2 = b0, b3 = b0, b4 = b0, b5 = b0, b6 = b0, b7 = b0;
    while (!stop.load(std::memory_order_relaxed)) {
        for (int i = 0; i < 256; ++i) {
            b0 = _mm512_xor_si512(b0, a);
            b1 = _mm512_xor_si512(b1, a);
            b2 = _mm512_xor_si512(b2, a);
            b3 = _mm512_xor_si512(b3, a);
            b4 = _mm512_xor_si512(b4, a);
            b5 = _mm512_xor_si512(b5, a);
            b6 = _mm512_xor_si512(b6, a);
            b7 = _mm512_xor_si512(b7, a);
        }
    }
    volatile std::uint64_t sink =
        _mm512_reduce_add_epi64(_mm512_xor_si512(_mm512_xor_si512(b0, b1),
                                                 _mm512_xor_si512(b2, b3))) ^
        _mm512_reduce_add_epi64(_mm512_xor_si512(_mm512_xor_si512(b4, b5),
                                                 _mm512_xor_si512(b6, b7)));
    (void)sink;
}
} // namespace detail
#endif

// Runs the XOR kernel on all configured cores at a fixed frequency and
// collects power samples throughout.
inline SweepPoint run_xor_point(const Operand& v1, const Operand& v2, std::int64_t core_khz,
                                std::int64_t duration_s, Backend& backend,
                                XorPointOptions opts = {}) {
    SweepPoint point;
    point.popcnt_v1 = popcount(v1);
    point.popcnt_v2 = popcount(v2);
    point.core_khz = core_khz;

    int n_samples = std::max<int>(
        opts.min_samples,
        static_cast<int>(static_cast<double>(duration_s) * 1000.0 / opts.sample_interval_ms));

    if (auto* sim = backend.as_sim()) {
        backend.set_core_frequency(0, core_khz);
        backend.advance_us(2000.0); // past the P-state update slot
        sim->set_data_workload(point.popcnt_v1, point.popcnt_v2, opts.active_cores);
        std::int64_t f0 = sim->effective_core_khz(0);
        for (int i = 0; i < n_samples; ++i) {
            point.samples.push_back(backend.sample_power());
            backend.advance_us(opts.sample_interval_ms * 1000.0);
        }
        std::int64_t f1 = sim->effective_core_khz(0);
        point.frequency_drift =
            std::abs(static_cast<double>(f1 - f0)) >
            opts.freq_drift_tol * static_cast<double>(f0);
        sim->clear_data_workload();
        return point;
    }

#if defined(__x86_64__) && defined(__AVX512F__)
    int cores = std::min(opts.active_cores, backend.num_cpus());
    for (int cpu = 0; cpu < cores; ++cpu)
        backend.set_core_frequency(cpu, core_khz);
    std::atomic<bool> stop{false};
    std::vector<std::thread> workers;
    for (int cpu = 0; cpu < cores; ++cpu)
        workers.emplace_back([&, cpu] {
            backend.pin_to_cpu(cpu);
            detail::xor_kernel(v1, v2, stop);
        });
    for (int i = 0; i < n_samples; ++i) {
        point.samples.push_back(backend.sample_power());
        backend.advance_us(opts.sample_interval_ms * 1000.0);
    }
    stop.store(true, std::memory_order_relaxed);
    for (auto& w : workers)
        w.join();
    return point;
#else
    throw Error(errc::backend_unavailable, "hardware XOR kernel needs AVX-512");
#endif
}

// Drops the first `head` and last `tail` samples; exact subsequence.
inline std::vector<PowerSample> trim_samples(const std::vector<PowerSample>& samples,
                                             std::size_t head = 10, std::size_t tail = 5) {
    if (samples.size() <= head + tail)
        throw Error(errc::too_few_samples,
                    "need more than " + std::to_string(head + tail) + " samples");
    return {samples.begin() + static_cast<std::ptrdiff_t>(head),
            samples.end() - static_cast<std::ptrdiff_t>(tail)};
}

inline double mean_watts(const std::vector<PowerSample>& samples) {
    if (samples.empty())
        throw Error(errc::empty_input, "no power samples");
    double sum = 0.0;
    for (const auto& s : samples)
        sum += s.watts;
    return sum / static_cast<double>(samples.size());
}

// OLS of mean trimmed power on x1 = popcnt(v1) * cores and the hinge
// x2 = max(0, popcnt(v2) - popcnt(v1)) * cores; coefficients in mW per
// bit per core.
inline std::map<std::int64_t, RegressionFit> fit_power_model(const std::vector<SweepPoint>& points,
                                                             int active_cores,
                                                             std::size_t trim_head = 10,
                                                             std::size_t trim_tail = 5) {
    std::map<std::int64_t, std::vector<const SweepPoint*>> by_khz;
    for (const auto& p : points)
        by_khz[p.core_khz].push_back(&p);

    std::map<std::int64_t, RegressionFit> fits;
    for (auto& [khz, group] : by_khz) {
        std::vector<std::pair<int, int>> configs;
        for (const auto* p : group) {
            std::pair<int, int> cfg{p->popcnt_v1, p->popcnt_v2};
            if (std::find(configs.begin(), configs.end(), cfg) == configs.end())
                configs.push_back(cfg);
        }
        if (configs.size() < 3)
            throw Error(errc::invalid_argument,
                        "need >= 3 distinct popcount configurations per frequency");
        std::vector<std::vector<double>> X;
        std::vector<double> y;
        for (const auto* p : group) {
            double x1 = static_cast<double>(p->popcnt_v1) * active_cores;
            double x2 = static_cast<double>(std::max(0, p->popcnt_v2 - p->popcnt_v1)) *
                        active_cores;
            X.push_back({1.0, x1, x2});
            y.push_back(mean_watts(trim_samples(p->samples, trim_head, trim_tail)));
        }
        RegressionFit fit = least_squares(X, y, {"intercept", "v1_bits", "v2_extra_bits"});
        fit.coef["v1_bits"] *= 1000.0; // W/bit -> mW/bit
        fit.coef["v2_extra_bits"] *= 1000.0;
        fits[khz] = fit;
    }
    return fits;
}

inline double predict_power(const RegressionFit& fit, int popcnt_v1, int popcnt_v2,
                            int active_cores) {
    double x1 = static_cast<double>(popcnt_v1) * active_cores;
    double x2 = static_cast<double>(std::max(0, popcnt_v2 - popcnt_v1)) * active_cores;
    return fit.intercept_w + (fit.coef.at("v1_bits") * x1 + fit.coef.at("v2_extra_bits") * x2) /
                                 1000.0;
}

} // namespace eeprobe

#endif
