#include <doctest.h>

#include <numeric>
#include <random>

#include "eeprobe/analysis.hpp"

using namespace eeprobe;

TEST_CASE("histogram of identical samples is a single bin") {
    auto h = build_histogram({1.0, 1.0, 1.0}, 1.0);
    REQUIRE(h.counts.size() == 2); // samples sit on the 1..2 bin edge
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}) == 3);
    CHECK(h.n == 3);
}

TEST_CASE("histogram bins centered samples one per bin") {
    auto h = build_histogram({0.5, 1.5, 2.5}, 1.0);
    REQUIRE(h.counts.size() == 3);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 1);
    CHECK(h.counts[2] == 1);
    CHECK(h.clamped == 0);
}

TEST_CASE("histogram clamps below-origin samples into the first bin") {
    auto h = build_histogram({-3.0, 0.5, 1.5}, 1.0, 0.0);
    CHECK(h.counts[0] == 2);
    CHECK(h.clamped == 1);
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}) == h.n);
}

TEST_CASE("histogram conserves every sample over random inputs") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> val(-50.0, 450.0);
    std::uniform_real_distribution<double> width(0.5, 30.0);
    for (int it = 0; it < 100; ++it) {
        std::vector<double> samples;
        std::uniform_int_distribution<int> count(1, 300);
        int n = count(rng);
        for (int i = 0; i < n; ++i)
            samples.push_back(val(rng));
        auto h = build_histogram(samples, width(rng), 0.0);
        CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}) == n);
        CHECK(h.n == n);
    }
}

TEST_CASE("histogram rejects empty input and bad widths") {
    CHECK_THROWS_AS(build_histogram({}, 1.0), Error);
    CHECK_THROWS_AS(build_histogram({1.0}, 0.0), Error);
    CHECK_THROWS_AS(build_histogram({1.0}, -1.0), Error);
}

TEST_CASE("least_squares recovers an exact line") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (double x : {0.0, 1.0, 2.0, 3.0, 4.0}) {
        X.push_back({1.0, x});
        y.push_back(2.0 * x + 1.0);
    }
    auto fit = least_squares(X, y, {"intercept", "x"});
    CHECK(fit.intercept_w == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.coef.at("x") == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.rss == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(fit.n == 5);
}

TEST_CASE("least_squares gives zero slope on constant response") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (double x : {0.0, 1.0, 2.0, 3.0}) {
        X.push_back({1.0, x});
        y.push_back(7.0);
    }
    auto fit = least_squares(X, y, {"intercept", "x"});
    CHECK(fit.coef.at("x") == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fit.intercept_w == doctest::Approx(7.0));
}

TEST_CASE("least_squares rejects rank-deficient designs") {
    // duplicated column
    std::vector<std::vector<double>> X = {{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}};
    std::vector<double> y = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(least_squares(X, y, {"a", "b"}), Error);
    // more columns than rows
    CHECK_THROWS_AS(least_squares({{1.0, 2.0, 3.0}}, {1.0}, {"a", "b", "c"}), Error);
}

TEST_CASE("least_squares residuals are orthogonal to the design") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int it = 0; it < 20; ++it) {
        const std::size_t rows = 40, cols = 3;
        std::vector<std::vector<double>> X(rows, std::vector<double>(cols));
        std::vector<double> y(rows);
        for (auto& row : X)
            for (auto& v : row)
                v = g(rng);
        for (auto& v : y)
            v = g(rng);
        auto fit = least_squares(X, y, {"a", "b", "c"});
        double beta[3] = {fit.coef.at("a"), fit.coef.at("b"), fit.coef.at("c")};
        double ynorm = 0.0;
        for (double v : y)
            ynorm += v * v;
        ynorm = std::sqrt(ynorm);
        for (std::size_t k = 0; k < cols; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                double resid = y[i];
                for (std::size_t j = 0; j < cols; ++j)
                    resid -= X[i][j] * beta[j];
                dot += X[i][k] * resid;
            }
            CHECK(std::abs(dot) <= 1e-8 * ynorm);
        }
    }
}

TEST_CASE("summarize of a single sample") {
    auto s = summarize({5.0});
    CHECK(s.n == 1);
    CHECK(s.mean == 5.0);
    CHECK(s.stdev == 0.0);
    CHECK(s.min == 5.0);
    CHECK(s.p50 == 5.0);
    CHECK(s.p95 == 5.0);
    CHECK(s.max == 5.0);
}

TEST_CASE("summarize nearest-rank percentiles on 1..100") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 1.0);
    auto s = summarize(v);
    CHECK(s.p50 == 50.0);
    CHECK(s.p95 == 95.0);
    CHECK(s.min == 1.0);
    CHECK(s.max == 100.0);
    CHECK(s.mean == doctest::Approx(50.5));
}

TEST_CASE("summarize rejects empty input") {
    CHECK_THROWS_AS(summarize({}), Error);
}

TEST_CASE("csv escaping quotes only when needed") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_escape("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("table export formats") {
    TableData t;
    t.columns = {"a", "b"};
    t.rows = {{"1", "x,y"}, {"2", "z"}};

    CHECK(export_table(t, ExportFormat::csv) == "a,b\n1,\"x,y\"\n2,z\n");
    CHECK(export_table(t, ExportFormat::gnuplot) == "# a b\n1 x,y\n2 z\n");

    auto parsed = json::parse(export_table(t, ExportFormat::json));
    REQUIRE(parsed.is_array());
    CHECK(parsed[0]["a"] == "1");
    CHECK(parsed[1]["b"] == "z");
}

TEST_CASE("empty table exports header only") {
    TableData t;
    t.columns = {"a", "b"};
    CHECK(export_table(t, ExportFormat::csv) == "a,b\n");
    CHECK(export_table(t, ExportFormat::gnuplot) == "# a b\n");
}

TEST_CASE("report JSON round-trips through export") {
    ExperimentReport r;
    r.experiment = "cstate";
    r.backend = BackendKind::simulation;
    r.config["reps"] = "100";
    r.topology = {0, 2};
    r.results = json{{"baseline_us", 1.0}};
    r.seed = 9;
    auto parsed = json::parse(export_report(r));
    CHECK(parsed["schema"] == 1);
    CHECK(parsed["experiment"] == "cstate");
    CHECK(parsed["config"]["reps"] == "100");
    CHECK(parsed["results"]["baseline_us"] == 1.0);
}

TEST_CASE("histogram gnuplot rows are bin_center count") {
    Histogram h;
    h.origin = 0.0;
    h.bin_width = 10.0;
    h.counts = {3, 0, 2};
    h.n = 5;
    auto t = histogram_table(h);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][0] == "5");
    CHECK(t.rows[0][1] == "3");
    CHECK(t.rows[2][0] == "25");
    CHECK(export_table(t, ExportFormat::gnuplot) ==
          "# bin_center count\n5 3\n15 0\n25 2\n");
}
