#include <doctest.h>

#include <random>

#include "eeprobe/core.hpp"

using namespace eeprobe;

TEST_CASE("validate_trace accepts monotone positive traces") {
    LatencyTrace t;
    t.tsc_khz = 3'000'000;
    t.entries = {{10, 5}, {20, 5}};
    CHECK(validate_trace(t));
}

TEST_CASE("validate_trace rejects order violations") {
    LatencyTrace t;
    t.tsc_khz = 3'000'000;
    t.entries = {{20, 5}, {10, 5}};
    CHECK_FALSE(validate_trace(t));
}

TEST_CASE("validate_trace rejects zero durations") {
    LatencyTrace t;
    t.tsc_khz = 3'000'000;
    t.entries = {{10, 0}};
    CHECK_FALSE(validate_trace(t));
}

TEST_CASE("validate_trace rejects bad tsc_khz") {
    LatencyTrace t;
    t.entries = {{10, 5}};
    t.tsc_khz = 0;
    CHECK_FALSE(validate_trace(t));
}

TEST_CASE("cycles_to_us uses the trace tsc") {
    LatencyTrace t;
    t.tsc_khz = 3'000'000;
    CHECK(t.cycles_to_us(3000.0) == doctest::Approx(1.0));
}

TEST_CASE("FrequencyLevel rejects non-positive khz") {
    CHECK_THROWS_AS(FrequencyLevel(0, FreqDomain::core), Error);
    CHECK_THROWS_AS(FrequencyLevel(-5, FreqDomain::uncore), Error);
    FrequencyLevel f(2'400'000, FreqDomain::uncore);
    CHECK(f.khz == 2'400'000);
}

TEST_CASE("PowerSample rejects negative watts") {
    CHECK_THROWS_AS(PowerSample(0, -1.0, PowerSource::simulated), Error);
    PowerSample s(100, 362.0, PowerSource::external_file);
    CHECK(s.watts == 362.0);
}

TEST_CASE("LicensePhaseRecord enforces counter bounds") {
    CHECK_THROWS_AS(LicensePhaseRecord(PhaseKind::High, 100, 101, 0, 1), Error);
    CHECK_THROWS_AS(LicensePhaseRecord(PhaseKind::Low, 100, 0, 101, 1), Error);
    CHECK_THROWS_AS(LicensePhaseRecord(PhaseKind::Low, 100, -1, 0, 1), Error);
    LicensePhaseRecord r(PhaseKind::High, 100, 50, 25, 1);
    CHECK(r.cycles_throttled == 50);
}

TEST_CASE("trace JSON round-trip over random traces") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 50; ++it) {
        LatencyTrace t;
        t.tsc_khz = 3'000'000;
        std::int64_t ts = 0;
        std::uniform_int_distribution<std::int64_t> step(1, 1000);
        for (int i = 0; i < 100; ++i) {
            std::int64_t d = step(rng);
            ts += d + step(rng);
            t.entries.push_back({ts, d});
        }
        json j = t;
        auto back = j.get<LatencyTrace>();
        REQUIRE(back.entries.size() == t.entries.size());
        CHECK(back.tsc_khz == t.tsc_khz);
        for (std::size_t i = 0; i < t.entries.size(); ++i) {
            CHECK(back.entries[i].timestamp_cycles == t.entries[i].timestamp_cycles);
            CHECK(back.entries[i].duration_cycles == t.entries[i].duration_cycles);
        }
    }
}

TEST_CASE("TransitionMeasurement and Histogram JSON round-trip") {
    TransitionMeasurement m;
    m.t_delay_us = 750.25;
    m.t_gap_us = 15.5;
    m.latency_before_cycles = 119.0;
    m.latency_after_cycles = 83.0;
    m.valid = true;
    json jm = m;
    auto m2 = jm.get<TransitionMeasurement>();
    CHECK(m2.t_delay_us == m.t_delay_us);
    CHECK(m2.valid == m.valid);

    Histogram h;
    h.origin = 0.0;
    h.bin_width = 25.0;
    h.counts = {1, 0, 7};
    h.n = 8;
    h.clamped = 1;
    json jh = h;
    auto h2 = jh.get<Histogram>();
    CHECK(h2.counts == h.counts);
    CHECK(h2.clamped == h.clamped);
}

TEST_CASE("report serialization carries the schema version") {
    ExperimentReport r;
    r.experiment = "pstate";
    r.seed = 42;
    json j = r;
    CHECK(j.at("schema") == 1);
    CHECK(j.at("experiment") == "pstate");
    CHECK(j.at("seed") == 42);
}
