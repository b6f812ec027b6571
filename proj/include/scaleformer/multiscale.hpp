#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "scaleformer/tensor.hpp"

namespace scaleformer {

struct ScaleStep {
    std::size_t factor = 1;        // pooling factor s_i
    std::size_t lookback_len = 0;  // ceil(lookback / s_i)
    std::size_t horizon_len = 0;   // ceil(horizon / s_i)
};

// Ladder {s^m, ..., s, 1}, coarsest first.
struct ScaleSchedule {
    std::size_t s = 2;
    std::size_t m = 0;
    std::vector<std::size_t> ladder;
    std::vector<ScaleStep> steps;

    std::size_t count() const { return steps.size(); }
    // `iterations` steps at the original resolution (same-scale refinement).
    static ScaleSchedule same_scale(std::size_t iterations, std::size_t lookback, std::size_t horizon);
};

// m = floor(log_s lookback) - 1 unless overridden.
ScaleSchedule scale_schedule(std::size_t lookback, std::size_t horizon, std::size_t s,
                             std::optional<std::size_t> m_override = std::nullopt);

// Row t of the result is the mean of rows [t*f, (t+1)*f). When L is not a
// multiple of f, row 0 is replicated on the left until it is.
Matrix avg_pool(const Matrix& x, std::size_t factor);
Tensor avg_pool(const Tensor& x, std::size_t factor);

// Linear interpolation onto L*f rows; positions past the last knot hold its value.
Matrix upsample_linear(const Matrix& x, std::size_t factor);

// The first `out_len` rows of upsample_linear as a (out_len x in_len) linear
// map, so the resampling can sit inside a differentiable graph as a matmul.
Matrix upsample_operator(std::size_t in_len, std::size_t factor, std::size_t out_len);

// avg_pool(horizon, s_i) for every step of the schedule.
std::vector<Matrix> pool_targets(const Matrix& horizon, const ScaleSchedule& schedule);
std::vector<Tensor> pool_targets(const Tensor& horizon, const ScaleSchedule& schedule);

}  // namespace scaleformer
