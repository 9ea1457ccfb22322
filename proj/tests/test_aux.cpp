#include <doctest.h>

#include "eeprobe/aux_experiments.hpp"

using namespace eeprobe;

namespace {
SimBackend make_sim(std::uint64_t seed = 1) {
    BackendConfig cfg;
    cfg.seed = seed;
    return SimBackend(cfg);
}
} // namespace

TEST_CASE("duty level range is validated") {
    auto sim = make_sim();
    CHECK_THROWS_AS(measure_tstate(-1, 1, sim), Error);
    CHECK_THROWS_AS(measure_tstate(16, 1, sim), Error);
}

TEST_CASE("level zero means modulation off") {
    auto sim = make_sim();
    auto r = measure_tstate(0, 1, sim);
    CHECK(r.nominal_duty == 1.0);
    CHECK(r.effective_duty == doctest::Approx(1.0));
    CHECK(r.implemented);
}

TEST_CASE("the deepest duty level is accepted but has no effect") {
    auto sim = make_sim();
    auto r = measure_tstate(1, 1, sim);
    CHECK(r.nominal_duty == doctest::Approx(1.0 / 16.0));
    CHECK(r.effective_duty == doctest::Approx(1.0));
    CHECK_FALSE(r.implemented);
}

TEST_CASE("half duty modulates below nominal") {
    auto sim = make_sim();
    auto r = measure_tstate(8, 1, sim);
    CHECK(r.nominal_duty == doctest::Approx(0.5));
    CHECK(r.effective_duty == doctest::Approx(0.45));
    CHECK(r.implemented);
}

TEST_CASE("effective duty shrinks monotonically with deeper modulation") {
    auto sim = make_sim();
    auto sweep = sweep_tstates(1, sim);
    REQUIRE(sweep.size() == 15);
    double prev = 2.0;
    for (const auto& r : sweep) {
        if (!r.implemented)
            continue;
        CHECK(r.effective_duty < prev);
        CHECK(r.effective_duty <= r.nominal_duty + 1e-12);
        prev = r.effective_duty;
    }
}

TEST_CASE("modulation register is restored afterwards") {
    auto sim = make_sim();
    sim.write_msr(0, msr::IA32_CLOCK_MODULATION, 0x17);
    (void)measure_tstate(8, 1, sim);
    CHECK(sim.read_msr(0, msr::IA32_CLOCK_MODULATION) == 0x17);
}

TEST_CASE("modulation register is restored when a write fails midway") {
    auto sim = make_sim();
    sim.write_msr(0, msr::IA32_CLOCK_MODULATION, 0x17);
    sim.fail_msr_writes_after(1); // the baseline write succeeds, the duty write fails
    CHECK_THROWS_AS(measure_tstate(8, 1, sim), Error);
    CHECK(sim.read_msr(0, msr::IA32_CLOCK_MODULATION) == 0x17);
}

TEST_CASE("productive-cycle ratio is unity when the counter includes stalls") {
    auto sim = make_sim();
    CHECK(measure_pperf_ratio(PperfWorkload::compute, 1, sim) == doctest::Approx(1.0));
    CHECK(measure_pperf_ratio(PperfWorkload::stall_chase, 1, sim) == doctest::Approx(1.0));
}

TEST_CASE("stalls are visible when the counter discounts them") {
    BackendConfig cfg;
    cfg.seed = 2;
    cfg.sim.pperf_counts_stalled_cycles = false;
    SimBackend sim(cfg);
    double compute = measure_pperf_ratio(PperfWorkload::compute, 1, sim);
    double stalled = measure_pperf_ratio(PperfWorkload::stall_chase, 1, sim);
    CHECK(compute == doctest::Approx(1.0));
    CHECK(stalled == doctest::Approx(0.05).epsilon(0.01));
    CHECK(stalled <= 1.0 + 1e-12);
}
