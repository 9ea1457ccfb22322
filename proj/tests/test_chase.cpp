#include <doctest.h>

#include <set>

#include "eeprobe/chase.hpp"

using namespace eeprobe;

namespace {
SimBackend make_sim(std::uint64_t seed = 1) {
    BackendConfig cfg;
    cfg.seed = seed;
    return SimBackend(cfg);
}

// pin the uncore and wait until the switch actually took (a fraction of
// transitions does not take and needs a rewrite)
void pin_uncore(SimBackend& sim, int ratio) {
    for (int i = 0; i < 10; ++i) {
        sim.set_uncore_range(ratio, ratio);
        sim.advance_us(5000.0);
    }
}
} // namespace

TEST_CASE("single line chase points to itself") {
    auto buf = build_chase(1, 64, 123);
    REQUIRE(buf.permutation.size() == 1);
    CHECK(buf.permutation[0] == 0);
}

TEST_CASE("traversal returns to the start after visiting every slot") {
    auto buf = build_chase(8, 64, 7);
    std::set<std::int64_t> seen;
    std::int64_t cur = 0;
    for (int hop = 0; hop < 8; ++hop) {
        cur = buf.permutation[static_cast<std::size_t>(cur)];
        CHECK(seen.insert(cur).second); // each slot visited once
    }
    CHECK(cur == 0);
    CHECK(seen.size() == 8);
}

TEST_CASE("same seed reproduces the same permutation") {
    auto a = build_chase(1000, 64, 42);
    auto b = build_chase(1000, 64, 42);
    CHECK(a.permutation == b.permutation);
    auto c = build_chase(1000, 64, 43);
    CHECK(a.permutation != c.permutation);
}

TEST_CASE("dependent-load encoding matches the permutation") {
    auto buf = build_chase(64, 128, 9);
    for (std::int64_t i = 0; i < buf.num_lines; ++i) {
        auto* slot = reinterpret_cast<const std::int64_t*>(
            buf.memory.data() + static_cast<std::size_t>(i * buf.stride_bytes));
        CHECK(*slot == buf.permutation[static_cast<std::size_t>(i)]);
    }
    CHECK(buf.footprint_bytes() == 64 * 128);
}

TEST_CASE("chase construction validates its arguments") {
    CHECK_THROWS_AS(build_chase(0, 64, 1), Error);
    CHECK_THROWS_AS(build_chase(8, 32, 1), Error);
}

TEST_CASE("presets cover the platform cache levels") {
    CHECK(preset_lines("l1") == 256);
    CHECK(preset_lines("llc") == 405504);
    CHECK(preset_lines("llc") * 64 == 405504 * 64); // 24.75 MiB
    CHECK(preset_lines("dram") == 2097152);
    CHECK_THROWS_AS(preset_lines("l9"), Error);
}

TEST_CASE("footprints classify to the right workload class") {
    CHECK(classify_footprint(256 * 64) == WorkloadClass::l1_chase);
    CHECK(classify_footprint(32 * 1024) == WorkloadClass::l1_chase);
    CHECK(classify_footprint(405504 * 64) == WorkloadClass::llc_chase);
    CHECK(classify_footprint(128 * 1024 * 1024) == WorkloadClass::dram_chase);
}

TEST_CASE("zero accesses give an empty but valid trace") {
    auto sim = make_sim();
    auto buf = build_chase(16, 64, 1);
    auto trace = run_chase(buf, 0, sim, 0);
    CHECK(trace.entries.empty());
    CHECK(validate_trace(trace));
}

TEST_CASE("trace length equals the requested access count") {
    auto sim = make_sim();
    auto buf = build_chase(256, 64, 1);
    auto trace = run_chase(buf, 777, sim, 0);
    CHECK(trace.entries.size() == 777);
    CHECK(validate_trace(trace));
}

TEST_CASE("l1 accesses are much faster than llc accesses") {
    auto sim = make_sim();
    auto l1 = run_chase(build_chase(preset_lines("l1"), 64, 1), 500, sim, 0);
    auto llc = run_chase(build_chase(preset_lines("llc"), 64, 1), 500, sim, 0);
    double l1_mean = average_access_cycles(l1, 0, 500);
    double llc_mean = average_access_cycles(llc, 100, 500);
    CHECK(l1_mean * 3.0 < llc_mean);
}

TEST_CASE("llc latency at pinned 2.4 GHz uncore is 83 cycles") {
    auto sim = make_sim(3);
    pin_uncore(sim, 24);
    auto buf = build_chase(preset_lines("llc"), 64, 1);
    ChaseRunner runner(buf, sim, 0);
    sim.advance_us(5000.0);
    double sum = 0.0;
    for (int i = 0; i < 256; ++i)
        sum += static_cast<double>(runner.access());
    CHECK(sum / 256 == doctest::Approx(83.0).epsilon(0.02));
}

TEST_CASE("llc latency at pinned 1.4 GHz uncore is 119 cycles") {
    auto sim = make_sim(4);
    pin_uncore(sim, 14);
    auto buf = build_chase(preset_lines("llc"), 64, 1);
    ChaseRunner runner(buf, sim, 0);
    sim.advance_us(5000.0);
    double sum = 0.0;
    for (int i = 0; i < 256; ++i)
        sum += static_cast<double>(runner.access());
    CHECK(sum / 256 == doctest::Approx(119.0).epsilon(0.02));
}

TEST_CASE("average_access_cycles windows") {
    LatencyTrace t;
    t.tsc_khz = 3'000'000;
    t.entries = {{10, 80}, {20, 90}, {30, 100}};
    CHECK(average_access_cycles(t, 0, 3) == doctest::Approx(90.0));
    CHECK(average_access_cycles(t, 1, 2) == doctest::Approx(90.0));
    CHECK_THROWS_AS(average_access_cycles(t, 2, 2), Error);
    CHECK_THROWS_AS(average_access_cycles(t, 0, 4), Error);
}

TEST_CASE("runner resets the workload signal on destruction") {
    auto sim = make_sim();
    {
        auto buf = build_chase(preset_lines("llc"), 64, 1);
        ChaseRunner runner(buf, sim, 0);
        (void)runner.access();
    }
    // after the heavy chase ends the control loop targets the floor again
    sim.advance_us(20'000.0);
    for (int i = 0; i < 5 && sim.current_uncore_khz() != 1'200'000; ++i) {
        // a failed (artifact) down-switch retriggers on the next demand change
        ChaseBuffer tick = build_chase(preset_lines("llc"), 64, 1);
        { ChaseRunner r(tick, sim, 0); (void)r.access(); }
        sim.advance_us(20'000.0);
    }
    CHECK(sim.current_uncore_khz() == 1'200'000);
}
