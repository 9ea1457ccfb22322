#include <doctest.h>

#include "eeprobe/avx_license.hpp"

using namespace eeprobe;

namespace {
SimBackend make_sim(std::uint64_t seed = 1) {
    BackendConfig cfg;
    cfg.seed = seed;
    return SimBackend(cfg);
}
} // namespace

TEST_CASE("high/low configuration validation") {
    HighLowConfig cfg;
    cfg.low_fraction_pct = 101;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.low_fraction_pct = 50;
    cfg.period_us = 50;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.period_us = 1000;
    cfg.cpus.clear();
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("standard run produces the documented per-phase counters") {
    auto sim = make_sim(2);
    HighLowConfig cfg;
    cfg.period_us = 2'000'000;
    cfg.low_fraction_pct = 50;
    cfg.duration_s = 30; // scaled from the 300 s reference invocation
    cfg.cpus = {0, 1};
    cfg.core_khz = 3'000'000;
    auto r = run_high_low(cfg, sim);

    for (int cpu : cfg.cpus) {
        const auto& recs = r.records.at(cpu);
        CHECK(recs.size() == 2 * 15); // 15 iterations, High and Low each
        for (const auto& rec : recs) {
            CHECK(rec.cycles_throttled >= 0);
            CHECK(rec.cycles_throttled <= rec.cycles_total);
            CHECK(rec.cycles_license2 <= rec.cycles_total);
            if (rec.kind == PhaseKind::High) {
                double us = static_cast<double>(rec.cycles_throttled) / 3000.0;
                CHECK(us >= 61.9);
                CHECK(us <= 75.1);
                CHECK(rec.cycles_license2 == 0);
            } else {
                double us = static_cast<double>(rec.cycles_license2) / 2700.0;
                CHECK(us >= 554.9);
                CHECK(us <= 704.1);
            }
        }
    }
    CHECK(r.overrun_phases == 0);
}

TEST_CASE("throttle cycles per transition land in the published window") {
    auto sim = make_sim(3);
    HighLowConfig cfg;
    cfg.period_us = 2'000'000;
    cfg.low_fraction_pct = 50;
    cfg.duration_s = 30;
    cfg.cpus = {0};
    auto r = run_high_low(cfg, sim);
    for (const auto& rec : r.records.at(0))
        if (rec.kind == PhaseKind::High) {
            CHECK(rec.cycles_throttled >= 62 * 3000 - 3);
            CHECK(rec.cycles_throttled <= 75 * 3000 + 3);
        }
}

TEST_CASE("license summary converts with the right frequencies") {
    std::map<int, std::vector<LicensePhaseRecord>> records;
    // one High phase with 62 us of throttling at 3 GHz, one Low phase with
    // 600 us of license residency at 2.7 GHz
    records[0].emplace_back(PhaseKind::High, 3'000'000'000, 186'000, 0, 1);
    records[0].emplace_back(PhaseKind::Low, 2'900'000'000, 0, 1'620'000, 1);
    auto s = summarize_license(records, 3'000'000, 2'700'000);
    CHECK(s.throttle_us_per_transition.p50 == doctest::Approx(62.0));
    CHECK(s.low_license_us.p50 == doctest::Approx(600.0));
    CHECK(s.throttle_us_per_transition.min == s.throttle_us_per_transition.max);
    CHECK(s.per_thread_throttle_us.at(0).n == 1);
}

TEST_CASE("all-zero counters summarize to zero") {
    std::map<int, std::vector<LicensePhaseRecord>> records;
    records[0].emplace_back(PhaseKind::High, 1000, 0, 0, 1);
    records[0].emplace_back(PhaseKind::Low, 1000, 0, 0, 1);
    auto s = summarize_license(records, 3'000'000, 2'700'000);
    CHECK(s.throttle_us_per_transition.mean == 0.0);
    CHECK(s.low_license_us.mean == 0.0);
    CHECK(s.throttle_fraction_high.mean == 0.0);
    CHECK(s.license_fraction_low.mean == 0.0);
}

TEST_CASE("summary rejects empty input") {
    CHECK_THROWS_AS(summarize_license({}, 3'000'000, 2'700'000), Error);
}

TEST_CASE("throttling happens only in High phases") {
    auto sim = make_sim(4);
    HighLowConfig cfg;
    cfg.period_us = 10'000;
    cfg.low_fraction_pct = 50;
    cfg.duration_s = 1;
    cfg.cpus = {0};
    auto r = run_high_low(cfg, sim);
    for (const auto& rec : r.records.at(0)) {
        if (rec.kind == PhaseKind::Low)
            CHECK(rec.cycles_throttled == 0);
        else
            CHECK(rec.cycles_license2 == 0);
    }
}

TEST_CASE("worst-case duty keeps the core throttled or licensed most of the time") {
    auto sim = make_sim(5);
    HighLowConfig cfg;
    cfg.period_us = 1000;
    cfg.low_fraction_pct = 80;
    cfg.duration_s = 1;
    cfg.cpus = {0};
    auto r = run_high_low(cfg, sim);
    for (const auto& rec : r.records.at(0)) {
        double frac_throttle =
            static_cast<double>(rec.cycles_throttled) / static_cast<double>(rec.cycles_total);
        double frac_license =
            static_cast<double>(rec.cycles_license2) / static_cast<double>(rec.cycles_total);
        if (rec.kind == PhaseKind::High)
            CHECK(frac_throttle > 0.30);
        else
            CHECK(frac_license > 0.85);
    }
}
