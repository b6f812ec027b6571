#include "scaleformer/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scaleformer/error.hpp"

namespace scaleformer {

NormMode parse_norm_mode(std::string_view s) {
    if (s == "none") return NormMode::none;
    if (s == "mean") return NormMode::mean;
    if (s == "mean_std" || s == "mean-std") return NormMode::mean_std;
    throw ConfigError("unknown normalization mode '" + std::string(s) + "'");
}

std::string to_string(NormMode m) {
    switch (m) {
        case NormMode::none: return "none";
        case NormMode::mean: return "mean";
        case NormMode::mean_std: return "mean_std";
    }
    return "?";
}

NormStats cross_scale_stats(const Matrix& enc, const Matrix& dec, NormMode mode) {
    if (enc.cols() != dec.cols()) {
        throw ShapeError("cross_scale_stats: encoder has " + std::to_string(enc.cols()) + " columns, decoder " +
                         std::to_string(dec.cols()));
    }
    const std::size_t d = enc.cols();
    const std::size_t n = enc.rows() + dec.rows();
    if (n == 0) throw ShapeError("cross_scale_stats: no rows");
    NormStats stats;
    stats.mode = mode;
    stats.mean.assign(d, 0.0);
    if (mode == NormMode::none) return stats;

    const Matrix all = vstack(enc, dec);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) stats.mean[c] += all(r, c);
    for (double& m : stats.mean) m /= static_cast<double>(n);
    if (mode == NormMode::mean_std) {
        std::vector<double> sd(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) sd[c] += (all(r, c) - stats.mean[c]) * (all(r, c) - stats.mean[c]);
        for (double& s : sd) s = std::max(std::sqrt(s / static_cast<double>(n)), kStdevFloor);
        stats.stdev = std::move(sd);
    }
    return stats;
}

namespace {
void check_width(const Matrix& x, const NormStats& stats) {
    if (x.cols() != stats.mean.size()) {
        throw ShapeError("normalization: matrix has " + std::to_string(x.cols()) + " columns, stats " +
                         std::to_string(stats.mean.size()));
    }
}
}  // namespace

Matrix apply_norm(const Matrix& x, const NormStats& stats) {
    check_width(x, stats);
    if (stats.mode == NormMode::none) return x;
    Matrix out = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            double v = x(r, c) - stats.mean[c];
            if (stats.mode == NormMode::mean_std) v /= (*stats.stdev)[c];
            out(r, c) = v;
        }
    }
    return out;
}

Matrix remove_norm(const Matrix& y, const NormStats& stats) {
    check_width(y, stats);
    if (stats.mode == NormMode::none) return y;
    Matrix out = y;
    for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
            double v = y(r, c);
            if (stats.mode == NormMode::mean_std) v *= (*stats.stdev)[c];
            out(r, c) = v + stats.mean[c];
        }
    }
    return out;
}

NormNodes cross_scale_stats(ad::Var enc, ad::Var dec, NormMode mode) {
    const Shape se = enc.shape();
    const Shape sd = dec.shape();
    if (se.w != sd.w || se.b != sd.b) {
        throw ShapeError("cross_scale_stats: encoder " + se.str() + " and decoder " + sd.str() + " disagree");
    }
    NormNodes out;
    out.mode = mode;
    auto& g = enc.graph();
    if (mode == NormMode::none) {
        out.mean = g.constant(Tensor(Shape{se.b, 1, se.w}, 0.0));
        return out;
    }
    const ad::Var all = ad::concat({enc, dec}, 1);
    out.mean = ad::mean(all, 1);
    if (mode == NormMode::mean_std) {
        const ad::Var centered = all - out.mean;
        const ad::Var var = ad::mean(centered * centered, 1);
        // Clamping the variance keeps sqrt's derivative finite on constant windows.
        out.stdev = ad::sqrt(ad::clamp(var, kStdevFloor * kStdevFloor, std::numeric_limits<double>::infinity()));
    }
    return out;
}

ad::Var apply_norm(ad::Var x, const NormNodes& stats) {
    if (stats.mode == NormMode::none) return x;
    ad::Var centered = x - stats.mean;
    return stats.stdev ? centered / *stats.stdev : centered;
}

ad::Var remove_norm(ad::Var y, const NormNodes& stats) {
    if (stats.mode == NormMode::none) return y;
    return (stats.stdev ? y * *stats.stdev : y) + stats.mean;
}

}  // namespace scaleformer
