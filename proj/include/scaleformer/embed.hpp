#pragma once

#include <cstddef>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/tensor.hpp"

namespace scaleformer {

// Source flag appended to every value row.
inline constexpr double kFlagLookback = 0.0;
inline constexpr double kFlagZeroInit = 0.5;
inline constexpr double kFlagPrediction = 1.0;

// Throws ConfigError unless flag is one of the three source flags.
double check_source_flag(double flag);

// Appended to the temporal features: 1/s_i - 0.5.
double scale_indicator(std::size_t scale);

struct EmbedParams {
    Matrix value_weights;  // (d_x + 1) x d_model, last row multiplies the source flag
    Matrix time_weights;   // (n_time_feats + 1) x d_model, last row multiplies the scale indicator
    std::size_t d_model = 0;
};

Matrix value_embed(const Matrix& x, double source_flag, const EmbedParams& params);
Matrix temporal_embed(const Matrix& feats, std::size_t scale, const EmbedParams& params);

// PE[p, 2k] = sin((p + offset) * s / 10000^(2k/d)), PE[p, 2k+1] = cos(same).
Matrix positional_embed(std::size_t length, std::size_t offset, std::size_t scale, std::size_t d_model);

Matrix compose_embedding(const Matrix& value_e, const Matrix& temporal_e, const Matrix& positional_e);

// Graph forms. x: (B, L, d_x); flags: (1|B, L, 1) with one flag per row;
// weights: (1, d_x + 1, d_model).
ad::Var value_embed(ad::Var x, const Tensor& flags, ad::Var weights);
// feats: (B, L, n_time_feats); weights: (1, n_time_feats + 1, d_model).
ad::Var temporal_embed(const Tensor& feats, std::size_t scale, ad::Var weights);

}  // namespace scaleformer
