#include "scaleformer/multiscale.hpp"

#include <algorithm>

#include "scaleformer/error.hpp"

namespace scaleformer {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

ScaleStep make_step(std::size_t factor, std::size_t lookback, std::size_t horizon) {
    return ScaleStep{factor, ceil_div(lookback, factor), ceil_div(horizon, factor)};
}

}  // namespace

ScaleSchedule ScaleSchedule::same_scale(std::size_t iterations, std::size_t lookback, std::size_t horizon) {
    if (iterations == 0) throw ConfigError("same-scale refinement needs at least one iteration");
    ScaleSchedule out;
    out.s = 1;
    out.m = iterations - 1;
    out.ladder.assign(iterations, 1);
    out.steps.assign(iterations, make_step(1, lookback, horizon));
    return out;
}

ScaleSchedule scale_schedule(std::size_t lookback, std::size_t horizon, std::size_t s,
                             std::optional<std::size_t> m_override) {
    if (s < 2) throw ConfigError("scale factor must be >= 2");
    if (lookback == 0 || horizon == 0) throw ConfigError("lookback and horizon must be positive");
    std::size_t m = 0;
    if (m_override) {
        m = *m_override;
    } else {
        if (lookback < s) {
            throw ConfigError("lookback " + std::to_string(lookback) + " is shorter than the scale factor " +
                              std::to_string(s));
        }
        std::size_t log = 0;
        for (std::size_t p = s; p <= lookback; p *= s) ++log;
        m = log - 1;
    }
    ScaleSchedule out;
    out.s = s;
    out.m = m;
    std::size_t factor = 1;
    for (std::size_t i = 0; i < m; ++i) factor *= s;
    for (std::size_t i = 0; i <= m; ++i) {
        out.ladder.push_back(factor);
        out.steps.push_back(make_step(factor, lookback, horizon));
        factor /= s;
    }
    return out;
}

Matrix avg_pool(const Matrix& x, std::size_t factor) {
    if (factor == 0) throw ConfigError("pooling factor must be >= 1");
    if (x.rows() == 0) throw ShapeError("avg_pool: empty input");
    if (factor == 1) return x;
    const std::size_t L = x.rows();
    const std::size_t out_len = ceil_div(L, factor);
    const std::size_t pad = out_len * factor - L;
    Matrix out(out_len, x.cols(), 0.0);
    for (std::size_t t = 0; t < out_len; ++t) {
        for (std::size_t k = 0; k < factor; ++k) {
            const std::size_t padded = t * factor + k;
            const std::size_t src = padded < pad ? 0 : padded - pad;
            for (std::size_t c = 0; c < x.cols(); ++c) out(t, c) += x(src, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) out(t, c) /= static_cast<double>(factor);
    }
    return out;
}

Tensor avg_pool(const Tensor& x, std::size_t factor) {
    if (factor == 1) return x;
    const Shape s = x.shape();
    std::vector<Matrix> pooled;
    pooled.reserve(s.b);
    for (std::size_t b = 0; b < s.b; ++b) pooled.push_back(avg_pool(x.matrix(b), factor));
    return Tensor::stack(pooled);
}

Matrix upsample_linear(const Matrix& x, std::size_t factor) {
    if (factor == 0) throw ConfigError("upsampling factor must be >= 1");
    if (x.rows() == 0) throw ShapeError("upsample_linear: empty input");
    if (factor == 1) return x;
    const std::size_t L = x.rows();
    Matrix out(L * factor, x.cols());
    for (std::size_t t = 0; t < L * factor; ++t) {
        const std::size_t i = t / factor;
        const std::size_t j = std::min(i + 1, L - 1);
        const double frac = static_cast<double>(t % factor) / static_cast<double>(factor);
        for (std::size_t c = 0; c < x.cols(); ++c) out(t, c) = x(i, c) + (x(j, c) - x(i, c)) * frac;
    }
    return out;
}

Matrix upsample_operator(std::size_t in_len, std::size_t factor, std::size_t out_len) {
    if (factor == 0 || in_len == 0) throw ConfigError("upsample_operator: factor and length must be >= 1");
    if (out_len > in_len * factor) throw ShapeError("upsample_operator: output longer than the stretched input");
    Matrix op(out_len, in_len, 0.0);
    for (std::size_t t = 0; t < out_len; ++t) {
        const std::size_t i = t / factor;
        const std::size_t j = std::min(i + 1, in_len - 1);
        const double frac = static_cast<double>(t % factor) / static_cast<double>(factor);
        op(t, i) += 1.0 - frac;
        op(t, j) += frac;
    }
    return op;
}

std::vector<Matrix> pool_targets(const Matrix& horizon, const ScaleSchedule& schedule) {
    std::vector<Matrix> out;
    out.reserve(schedule.count());
    for (const auto& step : schedule.steps) out.push_back(avg_pool(horizon, step.factor));
    return out;
}

std::vector<Tensor> pool_targets(const Tensor& horizon, const ScaleSchedule& schedule) {
    std::vector<Tensor> out;
    out.reserve(schedule.count());
    for (const auto& step : schedule.steps) out.push_back(avg_pool(horizon, step.factor));
    return out;
}

}  // namespace scaleformer
