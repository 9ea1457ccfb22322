#ifndef EEPROBE_ANALYSIS_HPP
#define EEPROBE_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"

namespace eeprobe {

struct SummaryStats {
    std::int64_t n = 0;
    double mean = 0.0;
    double stdev = 0.0;
    double min = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

inline void to_json(json& j, const SummaryStats& s) {
    j = json{{"n", s.n},     {"mean", s.mean}, {"stdev", s.stdev}, {"min", s.min},
             {"p50", s.p50}, {"p95", s.p95},   {"max", s.max}};
}

inline Histogram build_histogram(const std::vector<double>& samples, double bin_width,
                                 double origin = 0.0) {
    if (bin_width <= 0.0)
        throw Error(errc::invalid_argument, "bin_width must be > 0");
    if (samples.empty())
        throw Error(errc::empty_input, "build_histogram needs at least one sample");

    double hi = *std::max_element(samples.begin(), samples.end());
    std::size_t nbins = 1;
    if (hi > origin)
        nbins = static_cast<std::size_t>(std::floor((hi - origin) / bin_width)) + 1;

    Histogram h;
    h.origin = origin;
    h.bin_width = bin_width;
    h.counts.assign(nbins, 0);
    for (double x : samples) {
        auto idx = static_cast<std::int64_t>(std::floor((x - origin) / bin_width));
        if (idx < 0) {
            idx = 0;
            h.clamped++;
        } else if (idx >= static_cast<std::int64_t>(nbins)) {
            idx = static_cast<std::int64_t>(nbins) - 1;
            h.clamped++;
        }
        h.counts[static_cast<std::size_t>(idx)]++;
    }
    h.n = static_cast<std::int64_t>(samples.size());
    return h;
}

// Least squares via Householder QR. X is row-major, rows x cols.
// Column names label the coefficients; column 0 of ones (name "intercept")
// is added by the caller if an intercept is wanted.
inline RegressionFit least_squares(const std::vector<std::vector<double>>& X,
                                   const std::vector<double>& y,
                                   const std::vector<std::string>& names) {
    const std::size_t rows = X.size();
    if (rows == 0 || rows != y.size())
        throw Error(errc::invalid_argument, "least_squares: rows(X) must equal len(y) > 0");
    const std::size_t cols = X[0].size();
    if (cols == 0 || cols > rows)
        throw Error(errc::rank_deficient, "least_squares: need rows >= cols >= 1");
    if (names.size() != cols)
        throw Error(errc::invalid_argument, "least_squares: one name per column");

    std::vector<double> a; // column-major working copy
    a.resize(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (X[i].size() != cols)
            throw Error(errc::invalid_argument, "least_squares: ragged design matrix");
        for (std::size_t k = 0; k < cols; ++k)
            a[k * rows + i] = X[i][k];
    }
    std::vector<double> b = y;

    for (std::size_t k = 0; k < cols; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < rows; ++i)
            norm += a[k * rows + i] * a[k * rows + i];
        norm = std::sqrt(norm);
        if (norm <= 1e-12)
            throw Error(errc::rank_deficient, "least_squares: design matrix is rank deficient");
        double alpha = a[k * rows + k] > 0 ? -norm : norm;
        std::vector<double> v(rows - k);
        v[0] = a[k * rows + k] - alpha;
        for (std::size_t i = k + 1; i < rows; ++i)
            v[i - k] = a[k * rows + i];
        double vnorm2 = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
        if (vnorm2 > 0.0) {
            for (std::size_t j = k; j < cols; ++j) {
                double dot = 0.0;
                for (std::size_t i = k; i < rows; ++i)
                    dot += v[i - k] * a[j * rows + i];
                double scale = 2.0 * dot / vnorm2;
                for (std::size_t i = k; i < rows; ++i)
                    a[j * rows + i] -= scale * v[i - k];
            }
            double dot = 0.0;
            for (std::size_t i = k; i < rows; ++i)
                dot += v[i - k] * b[i];
            double scale = 2.0 * dot / vnorm2;
            for (std::size_t i = k; i < rows; ++i)
                b[i] -= scale * v[i - k];
        }
    }

    std::vector<double> beta(cols, 0.0);
    for (std::size_t k = cols; k-- > 0;) {
        double s = b[k];
        for (std::size_t j = k + 1; j < cols; ++j)
            s -= a[j * rows + k] * beta[j];
        double diag = a[k * rows + k];
        if (std::abs(diag) <= 1e-12)
            throw Error(errc::rank_deficient, "least_squares: design matrix is rank deficient");
        beta[k] = s / diag;
    }

    double rss = 0.0;
    for (std::size_t i = cols; i < rows; ++i)
        rss += b[i] * b[i];

    RegressionFit fit;
    fit.n = static_cast<std::int64_t>(rows);
    fit.rss = rss;
    for (std::size_t k = 0; k < cols; ++k) {
        if (names[k] == "intercept")
            fit.intercept_w = beta[k];
        else
            fit.coef[names[k]] = beta[k];
    }
    return fit;
}

// Nearest-rank percentiles, sample stdev (n-1); stdev of a single sample is 0.
inline SummaryStats summarize(const std::vector<double>& samples) {
    if (samples.empty())
        throw Error(errc::empty_input, "summarize needs at least one sample");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());

    SummaryStats st;
    st.n = static_cast<std::int64_t>(s.size());
    st.min = s.front();
    st.max = s.back();
    auto rank = [&](double p) {
        auto r = static_cast<std::size_t>(std::ceil(p * static_cast<double>(s.size())));
        return s[std::max<std::size_t>(r, 1) - 1];
    };
    st.p50 = rank(0.50);
    st.p95 = rank(0.95);
    st.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double ss = 0.0;
    for (double x : s)
        ss += (x - st.mean) * (x - st.mean);
    st.stdev = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
    return st;
}

// RFC-4180-style quoting: quote when the field contains comma, quote or newline.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos)
        return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    out += '"';
    return out;
}

struct TableData {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

enum class ExportFormat { csv, json, gnuplot };

inline std::string export_table(const TableData& t, ExportFormat format) {
    std::ostringstream os;
    switch (format) {
    case ExportFormat::csv: {
        for (std::size_t i = 0; i < t.columns.size(); ++i)
            os << (i ? "," : "") << csv_escape(t.columns[i]);
        os << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                os << (i ? "," : "") << csv_escape(row[i]);
            os << "\n";
        }
        break;
    }
    case ExportFormat::gnuplot: {
        os << "#";
        for (const auto& c : t.columns)
            os << " " << c;
        os << "\n";
        for (const auto& row : t.rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                os << (i ? " " : "") << row[i];
            os << "\n";
        }
        break;
    }
    case ExportFormat::json: {
        json j = json::array();
        for (const auto& row : t.rows) {
            json o = json::object();
            for (std::size_t i = 0; i < row.size() && i < t.columns.size(); ++i)
                o[t.columns[i]] = row[i];
            j.push_back(o);
        }
        os << j.dump(2) << "\n";
        break;
    }
    }
    return os.str();
}

inline std::string export_report(const ExperimentReport& r) {
    json j = r;
    return j.dump(2) + "\n";
}

// One "bin_center count" row per bin.
inline TableData histogram_table(const Histogram& h) {
    TableData t;
    t.columns = {"bin_center", "count"};
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        double center = h.origin + (static_cast<double>(i) + 0.5) * h.bin_width;
        std::ostringstream c;
        c << center;
        t.rows.push_back({c.str(), std::to_string(h.counts[i])});
    }
    return t;
}

} // namespace eeprobe

#endif
