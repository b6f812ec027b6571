#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scaleformer/tensor.hpp"

namespace scaleformer {

enum class TimeKind {
    index,     // plain integer positions
    calendar,  // seconds since 1970-01-01T00:00:00 (UTC, no zone handling)
};

// A length-L, width-d_x sequence. Timestamps, when present, are strictly
// increasing and one per row.
struct MultiSeries {
    Matrix values;
    std::optional<std::vector<std::int64_t>> timestamps;
    TimeKind time_kind = TimeKind::index;
    std::vector<std::string> columns;
    std::string name;

    std::size_t length() const { return values.rows(); }
    std::size_t width() const { return values.cols(); }
    // Rows [begin, begin + count), timestamps included.
    MultiSeries slice(std::size_t begin, std::size_t count) const;
    // Timestamp of a row, or the row index when the series has none.
    std::int64_t stamp(std::size_t row) const;
};

struct WindowPair {
    Matrix lookback;  // lookback_len x d_x
    Matrix horizon;   // horizon_len x d_x
    std::size_t t0 = 0;
    std::vector<std::int64_t> lookback_stamps;
    std::vector<std::int64_t> horizon_stamps;
};

struct Splits {
    MultiSeries train;
    MultiSeries val;
    MultiSeries test;
};

MultiSeries load_csv(const std::filesystem::path& path, bool has_header,
                     std::optional<std::string> timestamp_column = std::nullopt);
void write_csv(const MultiSeries& series, const std::filesystem::path& path);

// Contiguous chronological split. Validation and test lengths are
// floor(fraction * L); the remainder goes to train. Slices always carry
// timestamps (row indices of the source when it had none).
Splits split(const MultiSeries& series, std::array<double, 3> ratios);

// Windows at origins 0, stride, 2*stride, ... with the horizon immediately
// following the lookback.
std::vector<WindowPair> make_windows(const MultiSeries& series, std::size_t lookback_len,
                                     std::size_t horizon_len, std::size_t stride);

struct MackeyGlassOptions {
    double tau = 18.0;
    std::size_t n = 10000;
    double dt = 0.1;
    std::size_t subsample = 10;
    // The integration is deterministic; kept so generated sets are keyed like
    // every other random source in an experiment.
    std::uint64_t seed = 0;
    double trend_slope = 0.0;
    double season_amp = 0.0;
    std::size_t season_period = 100;
};

// Euler integration of dx/dt = 0.2 x(t-tau) / (1 + x(t-tau)^10) - 0.1 x(t),
// history x(t) = 1.2 for t <= 0, one sample every `subsample` steps.
MultiSeries gen_mackey_glass(const MackeyGlassOptions& opts);

// Three-column set: tau=18 plain; tau=12 and tau=9 with trend and seasonality.
MultiSeries synthetic_dataset(std::size_t n = 10000);

// Replaces floor(pct * L) rows per column by median +- (50 + u) * sigma,
// u ~ U(0, 10], using statistics of the clean column.
MultiSeries inject_outliers(const MultiSeries& series, double pct, std::uint64_t seed);

// Calendar features (month, day, weekday, hour) scaled to [-0.5, 0.5], or a
// single position feature t / span - 0.5 for index-only data.
class TimeFeaturizer {
public:
    TimeFeaturizer(TimeKind kind, double index_span);
    static TimeFeaturizer for_series(const MultiSeries& full_series);

    std::size_t count() const { return kind_ == TimeKind::calendar ? 4 : 1; }
    TimeKind kind() const { return kind_; }
    Matrix features(std::span<const std::int64_t> stamps) const;

private:
    TimeKind kind_;
    double span_;
};

// Per-column z-scoring with statistics fitted on one matrix.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stdev;

    static Standardizer fit(const Matrix& m);
    Matrix apply(const Matrix& m) const;
    MultiSeries apply(const MultiSeries& s) const;
};

double median(std::vector<double> v);
double population_stdev(std::span<const double> v);

}  // namespace scaleformer
