#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "eeprobe/sim_backend.hpp"

using namespace eeprobe;

namespace {
SimBackend make_sim(std::uint64_t seed = 1) {
    BackendConfig cfg;
    cfg.seed = seed;
    return SimBackend(cfg);
}
} // namespace

TEST_CASE("uncore ratio limit encode/decode round-trips") {
    for (int lo = 12; lo <= 24; ++lo)
        for (int hi = lo; hi <= 24; ++hi) {
            auto [dlo, dhi] = decode_uncore_ratio_limit(encode_uncore_ratio_limit(lo, hi));
            CHECK(dlo == lo);
            CHECK(dhi == hi);
        }
    // max ratio lives in the low bits, min ratio one byte up
    CHECK(encode_uncore_ratio_limit(12, 24) == ((12ull << 8) | 24ull));
}

TEST_CASE("clock advances exactly with the configured tsc") {
    auto sim = make_sim();
    std::uint64_t c0 = sim.now_cycles(0);
    sim.advance_us(1.0);
    CHECK(sim.now_cycles(0) - c0 == 3000);
    CHECK_THROWS_AS(sim.advance_us(-1.0), Error);
}

TEST_CASE("timestamps never decrease") {
    auto sim = make_sim();
    std::uint64_t prev = sim.now_cycles(0);
    for (int i = 0; i < 100; ++i) {
        sim.advance_us(0.5);
        std::uint64_t c = sim.now_cycles(0);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("msr write then read returns the value") {
    auto sim = make_sim();
    std::uint64_t v = encode_uncore_ratio_limit(14, 20);
    sim.write_msr(0, msr::UNCORE_RATIO_LIMIT, v);
    CHECK(sim.read_msr(0, msr::UNCORE_RATIO_LIMIT) == v);
}

TEST_CASE("unmodeled registers are rejected") {
    auto sim = make_sim();
    CHECK_THROWS_AS(sim.read_msr(0, 0xDEAD), Error);
    CHECK_THROWS_AS(sim.write_msr(0, 0xDEAD, 1), Error);
}

TEST_CASE("boot uncore limit encodes the platform range") {
    auto sim = make_sim();
    auto [lo, hi] = sim.uncore_range();
    CHECK(lo == 12);
    CHECK(hi == 24);
}

TEST_CASE("uncore range validation") {
    auto sim = make_sim();
    CHECK_THROWS_AS(sim.set_uncore_range(25, 12), Error);
    CHECK_THROWS_AS(sim.set_uncore_range(11, 24), Error);
    CHECK_THROWS_AS(sim.set_uncore_range(12, 25), Error);
    sim.set_uncore_range(24, 24);
    auto [lo, hi] = sim.uncore_range();
    CHECK(lo == 24);
    CHECK(hi == 24);
}

TEST_CASE("core frequency selection and validation") {
    auto sim = make_sim();
    sim.set_core_frequency(0, 2'400'000);
    CHECK(sim.core_frequency(0) == 2'400'000);
    CHECK_THROWS_AS(sim.set_core_frequency(0, 999), Error);
    CHECK_THROWS_AS(sim.set_core_frequency(0, 2'450'000), Error);
    auto freqs = sim.selectable_frequencies(0);
    CHECK(freqs.front() == 1'200'000);
    CHECK(freqs.back() == 3'000'000);
    CHECK(freqs.size() == 19);
}

TEST_CASE("frequency requests take effect at the next update slot") {
    auto sim = make_sim();
    // land shortly after a 500 us update slot boundary
    std::uint64_t interval = 500 * 3000;
    double to_boundary =
        static_cast<double>(interval - sim.now_cycles(0) % interval) / 3000.0;
    sim.advance_us(to_boundary + 10.0);
    sim.set_core_frequency(0, 1'200'000);
    CHECK(sim.effective_core_khz(0) == 3'000'000);
    sim.advance_us(200.0); // still before the next slot boundary
    CHECK(sim.effective_core_khz(0) == 3'000'000);
    sim.advance_us(500.0); // past it
    CHECK(sim.effective_core_khz(0) == 1'200'000);
}

TEST_CASE("counters are monotone under random interleavings") {
    auto sim = make_sim(7);
    std::mt19937_64 rng(7);
    std::map<std::pair<int, CounterEvent>, std::uint64_t> last;
    std::uniform_int_distribution<int> cpu_pick(0, 3);
    std::uniform_int_distribution<int> ev_pick(0, 3);
    std::uniform_real_distribution<double> dt(0.0, 50.0);
    const CounterEvent events[] = {CounterEvent::throttle, CounterEvent::license2,
                                   CounterEvent::aperf, CounterEvent::pperf};
    for (int i = 0; i < 500; ++i) {
        sim.advance_us(dt(rng));
        int cpu = cpu_pick(rng);
        CounterEvent ev = events[ev_pick(rng)];
        std::uint64_t v = sim.read_counter(cpu, ev);
        auto key = std::make_pair(cpu, ev);
        auto it = last.find(key);
        if (it != last.end())
            CHECK(v >= it->second);
        last[key] = v;
    }
}

TEST_CASE("throttle counter stays flat without license transitions") {
    auto sim = make_sim();
    std::uint64_t t0 = sim.read_counter(0, CounterEvent::throttle);
    sim.set_workload(0, WorkloadClass::compute);
    sim.advance_us(10'000.0);
    CHECK(sim.read_counter(0, CounterEvent::throttle) == t0);
}

TEST_CASE("identical parameters and call sequence reproduce identical state") {
    auto a = make_sim(99);
    auto b = make_sim(99);
    auto poke = [](SimBackend& s) {
        s.set_core_frequency(0, 1'800'000);
        s.advance_us(700.0);
        s.set_uncore_range(20, 20);
        s.advance_us(5000.0);
        s.set_workload(1, WorkloadClass::llc_chase);
        for (int i = 0; i < 100; ++i)
            (void)s.simulated_access(1);
        s.write_msr(2, msr::IA32_CLOCK_MODULATION, 0x14);
    };
    poke(a);
    poke(b);
    CHECK(a.control_state() == b.control_state());
    CHECK(a.now_cycles(0) == b.now_cycles(0));
    CHECK(a.read_counter(1, CounterEvent::aperf) == b.read_counter(1, CounterEvent::aperf));
    CHECK(a.current_uncore_khz() == b.current_uncore_khz());
}

TEST_CASE("power line parsing") {
    auto s = parse_power_line("1000000,362.0");
    CHECK(s.t_ns == 1'000'000);
    CHECK(s.watts == 362.0);
    CHECK(s.source == PowerSource::external_file);
    CHECK_THROWS_AS(parse_power_line("abc"), Error);
    CHECK_THROWS_AS(parse_power_line("12,"), Error);
    CHECK_THROWS_AS(parse_power_line("12,4x"), Error);
    CHECK_THROWS_AS(parse_power_line("1.5,20"), Error);
}

TEST_CASE("file power source feeds samples in order") {
    std::string path = "power_test_tmp.csv";
    {
        std::ofstream out(path);
        out << "# comment\n100,10.5\n200,11.5\n";
    }
    BackendConfig cfg;
    cfg.power_source = PowerSource::external_file;
    cfg.power_file = path;
    SimBackend sim(cfg);
    CHECK(sim.sample_power().watts == 10.5);
    CHECK(sim.sample_power().watts == 11.5);
    CHECK_THROWS_AS(sim.sample_power(), Error); // exhausted
    std::remove(path.c_str());
}

TEST_CASE("modeled power spans the published full-load range") {
    auto sim = make_sim();
    sim.advance_us(1000.0); // past the initial update slot
    double idle = sim.sample_power().watts;
    CHECK(idle == doctest::Approx(362.0)); // 3 GHz base
    sim.set_data_workload(512, 512, 36);
    double full = sim.sample_power().watts;
    CHECK(full == doctest::Approx(362.0 + 3.13 * 512 * 36 / 1000.0));
    CHECK(full > 415.0);
    CHECK(full < 425.0);
    sim.clear_data_workload();
    CHECK(sim.sample_power().watts == doctest::Approx(idle));
    CHECK_THROWS_AS(sim.set_data_workload(513, 0, 36), Error);
}

TEST_CASE("pinning is validated and idempotent") {
    auto sim = make_sim();
    sim.pin_to_cpu(0);
    sim.pin_to_cpu(0);
    CHECK(sim.current_cpu() == 0);
    sim.pin_to_cpu(5);
    CHECK(sim.current_cpu() == 5);
    CHECK_THROWS_AS(sim.pin_to_cpu(9999), Error);
    CHECK_THROWS_AS(sim.pin_to_cpu(-1), Error);
}

TEST_CASE("cstate knobs persist per cpu") {
    auto sim = make_sim();
    CHECK(sim.cstate_enabled(3, CState::C6));
    sim.set_cstate_enabled(3, CState::C6, false);
    CHECK_FALSE(sim.cstate_enabled(3, CState::C6));
    CHECK(sim.cstate_enabled(4, CState::C6));
    sim.set_cstate_enabled(3, CState::C6, true);
    CHECK(sim.cstate_enabled(3, CState::C6));
}

TEST_CASE("governor reports userspace") {
    auto sim = make_sim();
    CHECK(sim.governor(0) == "userspace");
}

TEST_CASE("uncore pin can be overridden by the power limit") {
    BackendConfig cfg;
    cfg.seed = 5;
    cfg.sim.rapl_limit_100s_w = 100.0; // modeled idle power / 2 already exceeds this
    SimBackend sim(cfg);
    sim.set_uncore_range(24, 24);
    // drive transitions until one takes (artifacts retry)
    for (int i = 0; i < 10; ++i) {
        sim.set_uncore_range(24, 24);
        sim.advance_us(5000.0);
    }
    CHECK(sim.current_uncore_khz() == 1'200'000); // clamped to the floor
}

TEST_CASE("injected msr failure is transient") {
    auto sim = make_sim();
    sim.fail_msr_writes_after(0);
    CHECK_THROWS_AS(sim.write_msr(0, msr::IA32_CLOCK_MODULATION, 1), Error);
    sim.write_msr(0, msr::IA32_CLOCK_MODULATION, 2); // recovered
    CHECK(sim.read_msr(0, msr::IA32_CLOCK_MODULATION) == 2);
}
