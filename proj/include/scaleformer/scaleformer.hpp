#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/backbone.hpp"
#include "scaleformer/multiscale.hpp"
#include "scaleformer/normalize.hpp"
#include "scaleformer/tensor.hpp"

namespace scaleformer {

enum class Variant {
    msa,    // full multi-scale refinement
    msa_r,  // last step replaced by interpolation of the previous scale
    ia,     // refinement repeated at the original resolution
    single, // one pass at the original resolution
};

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct RunMode {
    Variant variant = Variant::msa;
    std::size_t iterations = 5;  // ia only
};

struct ForecastConfig {
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t scale_factor = 2;
    std::optional<std::size_t> m_override;
    NormMode norm = NormMode::mean;
    RunMode mode;
    bool detach_between_scales = false;

    void validate() const;
    // The steps actually run for this mode (a single factor-1 step for `single`).
    ScaleSchedule schedule() const;
    // Rows of the lookback repeated at the head of the decoder in `single` mode.
    std::size_t label_len() const { return lookback / 2; }
};

struct ForecastBatch {
    Tensor lookback;       // (B, lookback, d_x)
    Tensor lookback_time;  // (B, lookback, n_time_feats)
    Tensor horizon_time;   // (B, horizon, n_time_feats)
};

struct ScaleTrace {
    std::size_t step = 0;
    std::size_t factor = 1;
    Shape enc_shape;
    Shape dec_shape;
    Tensor mean;  // (B, 1, d_x); zeros without normalization, empty when interpolated
    double elapsed_seconds = 0.0;
    bool backbone_called = true;
};

using TraceHook = std::function<void(const ScaleTrace&)>;

struct ScaleOutputs {
    std::vector<ad::Var> mean;                   // element i: (B, horizon_len_i, d_x)
    std::vector<std::optional<ad::Var>> sigma;   // gaussian head only
    std::vector<std::optional<NormNodes>> stats; // empty for the interpolated step
    ScaleSchedule schedule;
    bool last_interpolated = false;
    std::size_t backbone_calls = 0;

    std::size_t count() const { return mean.size(); }
    ad::Var final_mean() const { return mean.back(); }
};

ScaleOutputs forecast(ad::Graph& g, const Backbone& backbone, ParameterSet& params, const ForecastConfig& config,
                      const ForecastBatch& batch, const ForwardContext& ctx = {}, const TraceHook& hook = {});

// Per-scale loss: (prediction mean, optional sigma, target) -> scalar.
using ScaleLoss = std::function<ad::Var(ad::Var, std::optional<ad::Var>, ad::Var)>;

// Weighted mean over scales of loss(out_i, pooled target_i). Without weights
// every scale counts equally. `horizon` is (B, horizon, d_x).
ad::Var multi_scale_loss(ad::Graph& g, const ScaleOutputs& outputs, const Tensor& horizon, const ScaleLoss& loss,
                         const std::vector<double>& weights = {});

// Inference on one window; returns every scale's mean forecast.
std::vector<Matrix> forecast_window(const Backbone& backbone, ParameterSet& params, const ForecastConfig& config,
                                    const Matrix& lookback, const Matrix& lookback_time, const Matrix& horizon_time);

}  // namespace scaleformer
