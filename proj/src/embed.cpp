#include "scaleformer/embed.hpp"

#include <cmath>

#include "scaleformer/error.hpp"

namespace scaleformer {

double check_source_flag(double flag) {
    if (flag != kFlagLookback && flag != kFlagZeroInit && flag != kFlagPrediction) {
        throw ConfigError("source flag must be 0, 0.5 or 1, got " + std::to_string(flag));
    }
    return flag;
}

double scale_indicator(std::size_t scale) {
    if (scale == 0) throw ConfigError("scale must be >= 1");
    return 1.0 / static_cast<double>(scale) - 0.5;
}

namespace {

// [x | extra] * W for every row.
Matrix affine_rows(const Matrix& x, double extra, const Matrix& w) {
    if (w.rows() != x.cols() + 1) {
        throw ShapeError("embedding weights have " + std::to_string(w.rows()) + " rows, expected " +
                         std::to_string(x.cols() + 1));
    }
    Matrix out(x.rows(), w.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < w.cols(); ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) acc += x(r, j) * w(j, k);
            out(r, k) = acc + extra * w(x.cols(), k);
        }
    }
    return out;
}

}  // namespace

Matrix value_embed(const Matrix& x, double source_flag, const EmbedParams& params) {
    return affine_rows(x, check_source_flag(source_flag), params.value_weights);
}

Matrix temporal_embed(const Matrix& feats, std::size_t scale, const EmbedParams& params) {
    return affine_rows(feats, scale_indicator(scale), params.time_weights);
}

Matrix positional_embed(std::size_t length, std::size_t offset, std::size_t scale, std::size_t d_model) {
    if (d_model == 0 || d_model % 2 != 0) throw ConfigError("positional embedding needs an even d_model");
    Matrix pe(length, d_model);
    for (std::size_t p = 0; p < length; ++p) {
        const double pos = static_cast<double>((p + offset) * scale);
        for (std::size_t k = 0; k < d_model / 2; ++k) {
            const double arg =
                pos / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d_model));
            pe(p, 2 * k) = std::sin(arg);
            pe(p, 2 * k + 1) = std::cos(arg);
        }
    }
    return pe;
}

Matrix compose_embedding(const Matrix& value_e, const Matrix& temporal_e, const Matrix& positional_e) {
    if (value_e.rows() != temporal_e.rows() || value_e.rows() != positional_e.rows() ||
        value_e.cols() != temporal_e.cols() || value_e.cols() != positional_e.cols()) {
        throw ShapeError("compose_embedding: parts differ in shape");
    }
    Matrix out = value_e;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += temporal_e.data()[i] + positional_e.data()[i];
    return out;
}

ad::Var value_embed(ad::Var x, const Tensor& flags, ad::Var weights) {
    const Shape s = x.shape();
    if (flags.shape().l != s.l || flags.shape().w != 1 || (flags.shape().b != 1 && flags.shape().b != s.b)) {
        throw ShapeError("value_embed: flags " + flags.shape().str() + " do not match input " + s.str());
    }
    for (double f : flags.data()) check_source_flag(f);
    auto& g = x.graph();
    ad::Var flag_col = g.constant(flags);
    if (flags.shape().b != s.b) flag_col = ad::broadcast_to(flag_col, Shape{s.b, s.l, 1});
    return ad::matmul(ad::concat({x, flag_col}, 2), weights);
}

ad::Var temporal_embed(const Tensor& feats, std::size_t scale, ad::Var weights) {
    const Shape s = feats.shape();
    Tensor augmented(Shape{s.b, s.l, s.w + 1});
    const double ind = scale_indicator(scale);
    for (std::size_t b = 0; b < s.b; ++b) {
        for (std::size_t l = 0; l < s.l; ++l) {
            for (std::size_t w = 0; w < s.w; ++w) augmented(b, l, w) = feats(b, l, w);
            augmented(b, l, s.w) = ind;
        }
    }
    return ad::matmul(weights.graph().constant(std::move(augmented)), weights);
}

}  // namespace scaleformer
