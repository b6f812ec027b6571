#include "scaleformer/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "scaleformer/error.hpp"

namespace scaleformer {

MultiSeries MultiSeries::slice(std::size_t begin, std::size_t count) const {
    MultiSeries out;
    out.values = values.slice_rows(begin, count);
    if (timestamps) {
        out.timestamps = std::vector<std::int64_t>(timestamps->begin() + static_cast<std::ptrdiff_t>(begin),
                                                   timestamps->begin() + static_cast<std::ptrdiff_t>(begin + count));
    }
    out.time_kind = time_kind;
    out.columns = columns;
    out.name = name;
    return out;
}

std::int64_t MultiSeries::stamp(std::size_t row) const {
    return timestamps ? (*timestamps)[row] : static_cast<std::int64_t>(row);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::optional<double> parse_real(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// YYYY-MM-DDTHH:MM:SS (a space is accepted in place of 'T').
std::optional<std::int64_t> parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    char sep = 0;
    if (s.size() != 19) return std::nullopt;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &se) != 7) {
        return std::nullopt;
    }
    if (sep != 'T' && sep != ' ') return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 59 || h < 0 || mi < 0 || se < 0) return std::nullopt;
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + se;
}

std::string format_iso8601(std::int64_t t) {
    using namespace std::chrono;
    const auto days = static_cast<int>(std::floor(static_cast<double>(t) / 86400.0));
    const std::int64_t rem = t - static_cast<std::int64_t>(days) * 86400;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60));
    return buf;
}

}  // namespace

MultiSeries load_csv(const std::filesystem::path& path, bool has_header,
                     std::optional<std::string> timestamp_column) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (first && has_header) {
            header = std::move(cells);
        } else {
            rows.push_back(std::move(cells));
        }
        first = false;
    }
    if (rows.size() < 2) throw DataError("'" + path.string() + "' has fewer than 2 data rows");
    const std::size_t ncols = has_header ? header.size() : rows.front().size();

    std::optional<std::size_t> ts_col;
    if (timestamp_column) {
        if (has_header) {
            auto it = std::find(header.begin(), header.end(), *timestamp_column);
            if (it == header.end()) throw DataError("timestamp column '" + *timestamp_column + "' not found");
            ts_col = static_cast<std::size_t>(it - header.begin());
        } else {
            auto idx = parse_int(*timestamp_column);
            if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= ncols) {
                throw DataError("timestamp column '" + *timestamp_column + "' is not a valid column index");
            }
            ts_col = static_cast<std::size_t>(*idx);
        }
    }
    const std::size_t nvals = ncols - (ts_col ? 1 : 0);
    if (nvals == 0) throw DataError("'" + path.string() + "' has no value columns");

    MultiSeries out;
    out.name = path.stem().string();
    for (std::size_t c = 0; c < ncols; ++c) {
        if (ts_col && c == *ts_col) continue;
        out.columns.push_back(has_header ? header[c] : "x" + std::to_string(out.columns.size()));
    }
    Matrix values(rows.size(), nvals);
    std::vector<std::int64_t> stamps;
    std::optional<TimeKind> kind;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        const std::size_t file_row = r + (has_header ? 2 : 1);
        if (cells.size() != ncols) {
            throw DataError("row " + std::to_string(file_row) + ": expected " + std::to_string(ncols) +
                            " cells, got " + std::to_string(cells.size()));
        }
        std::size_t vc = 0;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (ts_col && c == *ts_col) {
                std::optional<std::int64_t> t;
                TimeKind k = TimeKind::index;
                if (auto i = parse_int(cells[c])) {
                    t = i;
                } else if (auto iso = parse_iso8601(cells[c])) {
                    t = iso;
                    k = TimeKind::calendar;
                }
                if (!t || (kind && *kind != k)) {
                    throw DataError("row " + std::to_string(file_row) + ", column " + std::to_string(c + 1) +
                                    ": bad timestamp '" + cells[c] + "'");
                }
                kind = k;
                stamps.push_back(*t);
                continue;
            }
            auto v = parse_real(cells[c]);
            if (!v) {
                throw DataError("row " + std::to_string(file_row) + ", column " + std::to_string(c + 1) +
                                ": cannot parse '" + cells[c] + "' as a finite number");
            }
            values(r, vc++) = *v;
        }
    }
    out.values = std::move(values);
    if (ts_col) {
        for (std::size_t i = 1; i < stamps.size(); ++i) {
            if (stamps[i] <= stamps[i - 1]) {
                throw DataError("timestamps not strictly increasing at data row " + std::to_string(i + 1));
            }
        }
        out.timestamps = std::move(stamps);
        out.time_kind = *kind;
    }
    return out;
}

void write_csv(const MultiSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "t";
    for (std::size_t c = 0; c < series.width(); ++c) {
        out << "," << (c < series.columns.size() ? series.columns[c] : "x" + std::to_string(c));
    }
    out << "\n" << std::setprecision(17);
    for (std::size_t r = 0; r < series.length(); ++r) {
        if (series.time_kind == TimeKind::calendar && series.timestamps) {
            out << format_iso8601(series.stamp(r));
        } else {
            out << series.stamp(r);
        }
        for (std::size_t c = 0; c < series.width(); ++c) out << "," << series.values(r, c);
        out << "\n";
    }
}

Splits split(const MultiSeries& series, std::array<double, 3> ratios) {
    for (double f : ratios) {
        if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
    const std::size_t n = series.length();
    const auto floor_len = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
    const std::size_t val = floor_len(ratios[1]);
    const std::size_t test = floor_len(ratios[2]);
    const std::size_t train = n - val - test;

    MultiSeries indexed = series;
    if (!indexed.timestamps) {
        std::vector<std::int64_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::int64_t{0});
        indexed.timestamps = std::move(idx);
        indexed.time_kind = TimeKind::index;
    }
    Splits out;
    out.train = indexed.slice(0, train);
    out.val = indexed.slice(train, val);
    out.test = indexed.slice(train + val, test);
    return out;
}

std::vector<WindowPair> make_windows(const MultiSeries& series, std::size_t lookback_len,
                                     std::size_t horizon_len, std::size_t stride) {
    if (lookback_len == 0 || horizon_len == 0 || stride == 0) {
        throw ConfigError("make_windows: lookback, horizon and stride must be positive");
    }
    const std::size_t n = series.length();
    if (n < lookback_len + horizon_len) {
        throw DataError("make_windows: series of length " + std::to_string(n) + " is shorter than lookback " +
                        std::to_string(lookback_len) + " + horizon " + std::to_string(horizon_len));
    }
    std::vector<WindowPair> out;
    out.reserve((n - lookback_len - horizon_len) / stride + 1);
    for (std::size_t t0 = 0; t0 + lookback_len + horizon_len <= n; t0 += stride) {
        WindowPair w;
        w.t0 = t0;
        w.lookback = series.values.slice_rows(t0, lookback_len);
        w.horizon = series.values.slice_rows(t0 + lookback_len, horizon_len);
        w.lookback_stamps.reserve(lookback_len);
        w.horizon_stamps.reserve(horizon_len);
        for (std::size_t r = 0; r < lookback_len; ++r) w.lookback_stamps.push_back(series.stamp(t0 + r));
        for (std::size_t r = 0; r < horizon_len; ++r) w.horizon_stamps.push_back(series.stamp(t0 + lookback_len + r));
        out.push_back(std::move(w));
    }
    return out;
}

MultiSeries gen_mackey_glass(const MackeyGlassOptions& opts) {
    if (!(opts.tau > 0.0) || !(opts.dt > 0.0)) throw ConfigError("mackey-glass: tau and dt must be positive");
    if (opts.n == 0 || opts.subsample == 0) throw ConfigError("mackey-glass: n and subsample must be >= 1");
    if (opts.season_period == 0) throw ConfigError("mackey-glass: season period must be >= 1");
    const double ratio = opts.tau / opts.dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError("mackey-glass: tau / dt must be an integer");
    }
    const auto delay = static_cast<std::size_t>(rounded);
    constexpr double x0 = 1.2;

    const std::size_t steps = opts.n * opts.subsample;
    std::vector<double> x(steps + 1);
    x[0] = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double lagged = k >= delay ? x[k - delay] : x0;
        const double dx = 0.2 * lagged / (1.0 + std::pow(lagged, 10)) - 0.1 * x[k];
        x[k + 1] = x[k] + opts.dt * dx;
    }

    MultiSeries out;
    out.values = Matrix(opts.n, 1);
    for (std::size_t j = 0; j < opts.n; ++j) {
        const double t = static_cast<double>(j);
        out.values(j, 0) = x[(j + 1) * opts.subsample] + opts.trend_slope * t +
                           opts.season_amp * std::sin(2.0 * std::numbers::pi * t / static_cast<double>(opts.season_period));
    }
    std::ostringstream nm;
    nm << "mg_tau" << opts.tau;
    out.columns = {nm.str()};
    out.name = nm.str();
    return out;
}

MultiSeries synthetic_dataset(std::size_t n) {
    MackeyGlassOptions a;
    a.n = n;
    a.tau = 18.0;
    MackeyGlassOptions b = a;
    b.tau = 12.0;
    b.trend_slope = 1e-4;
    b.season_amp = 0.3;
    b.season_period = 100;
    MackeyGlassOptions c = b;
    c.tau = 9.0;

    const MultiSeries parts[] = {gen_mackey_glass(a), gen_mackey_glass(b), gen_mackey_glass(c)};
    MultiSeries out;
    out.values = Matrix(n, 3);
    for (std::size_t col = 0; col < 3; ++col) {
        for (std::size_t r = 0; r < n; ++r) out.values(r, col) = parts[col].values(r, 0);
        out.columns.push_back(parts[col].columns.front());
    }
    out.name = "mackey_glass_synthetic";
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty sample");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double population_stdev(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

MultiSeries inject_outliers(const MultiSeries& series, double pct, std::uint64_t seed) {
    if (!(pct >= 0.0 && pct <= 1.0)) throw ConfigError("outlier fraction must lie in [0, 1]");
    if (series.length() == 0) throw DataError("inject_outliers: empty series");
    MultiSeries out = series;
    const std::size_t n = series.length();
    const auto count = static_cast<std::size_t>(std::floor(pct * static_cast<double>(n)));
    if (count == 0) return out;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::size_t> rows(n);
    for (std::size_t c = 0; c < series.width(); ++c) {
        const auto column = series.values.col(c);
        const double med = median(column);
        const double sigma = population_stdev(column);
        if (sigma == 0.0) {
            std::clog << "warning: column " << c << " of '" << series.name
                      << "' has zero variance; outliers collapse to the median\n";
        }
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        // Partial Fisher-Yates: the first `count` entries are a uniform sample.
        for (std::size_t i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(rows[i], rows[pick(rng)]);
        }
        for (std::size_t i = 0; i < count; ++i) {
            const double u = 10.0 * (1.0 - unit(rng));
            const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
            out.values(rows[i], c) = med + sign * (50.0 + u) * sigma;
        }
    }
    return out;
}

TimeFeaturizer::TimeFeaturizer(TimeKind kind, double index_span) : kind_(kind), span_(index_span) {
    if (kind_ == TimeKind::index && !(span_ > 0.0)) throw ConfigError("time featurizer span must be positive");
}

TimeFeaturizer TimeFeaturizer::for_series(const MultiSeries& full_series) {
    return TimeFeaturizer(full_series.timestamps ? full_series.time_kind : TimeKind::index,
                          static_cast<double>(std::max<std::size_t>(full_series.length(), 1)));
}

Matrix TimeFeaturizer::features(std::span<const std::int64_t> stamps) const {
    Matrix out(stamps.size(), count());
    for (std::size_t r = 0; r < stamps.size(); ++r) {
        if (kind_ == TimeKind::index) {
            out(r, 0) = static_cast<double>(stamps[r]) / span_ - 0.5;
            continue;
        }
        using namespace std::chrono;
        const std::int64_t t = stamps[r];
        const auto days = static_cast<int>(std::floor(static_cast<double>(t) / 86400.0));
        const std::int64_t secs = t - static_cast<std::int64_t>(days) * 86400;
        const sys_days sd{std::chrono::days{days}};
        const year_month_day ymd{sd};
        const weekday wd{sd};
        out(r, 0) = (static_cast<double>(static_cast<unsigned>(ymd.month())) - 1.0) / 11.0 - 0.5;
        out(r, 1) = (static_cast<double>(static_cast<unsigned>(ymd.day())) - 1.0) / 30.0 - 0.5;
        out(r, 2) = static_cast<double>(wd.iso_encoding() - 1) / 6.0 - 0.5;
        out(r, 3) = static_cast<double>(secs / 3600) / 23.0 - 0.5;
    }
    return out;
}

Standardizer Standardizer::fit(const Matrix& m) {
    Standardizer s;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const auto col = m.col(c);
        const double mu = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
        const double sd = population_stdev(col);
        s.mean.push_back(mu);
        s.stdev.push_back(sd > 1e-12 ? sd : 1.0);
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& m) const {
    if (m.cols() != mean.size()) throw ShapeError("standardizer: column mismatch");
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = (m(r, c) - mean[c]) / stdev[c];
    return out;
}

MultiSeries Standardizer::apply(const MultiSeries& s) const {
    MultiSeries out = s;
    out.values = apply(s.values);
    return out;
}

}  // namespace scaleformer
