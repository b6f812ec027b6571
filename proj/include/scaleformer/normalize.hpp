#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/tensor.hpp"

namespace scaleformer {

enum class NormMode { none, mean, mean_std };

NormMode parse_norm_mode(std::string_view s);
std::string to_string(NormMode m);

inline constexpr double kStdevFloor = 1e-8;

// Statistics of the vertical concatenation of encoder and decoder inputs.
struct NormStats {
    NormMode mode = NormMode::mean;
    std::vector<double> mean;                  // zeros in `none` mode
    std::optional<std::vector<double>> stdev;  // mean_std mode only, >= kStdevFloor
};

NormStats cross_scale_stats(const Matrix& enc, const Matrix& dec, NormMode mode);
Matrix apply_norm(const Matrix& x, const NormStats& stats);
Matrix remove_norm(const Matrix& y, const NormStats& stats);

// Batched, differentiable counterpart used inside the refinement loop.
// Shapes: enc (B, Le, d), dec (B, Ld, d); mean/stdev are (B, 1, d).
struct NormNodes {
    NormMode mode = NormMode::mean;
    ad::Var mean;
    std::optional<ad::Var> stdev;
};

NormNodes cross_scale_stats(ad::Var enc, ad::Var dec, NormMode mode);
ad::Var apply_norm(ad::Var x, const NormNodes& stats);
ad::Var remove_norm(ad::Var y, const NormNodes& stats);

}  // namespace scaleformer
