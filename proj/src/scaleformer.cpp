#include "scaleformer/scaleformer.hpp"

#include <chrono>

#include "scaleformer/embed.hpp"
#include "scaleformer/error.hpp"

namespace scaleformer {

Variant parse_variant(const std::string& s) {
    if (s == "msa") return Variant::msa;
    if (s == "msa_r") return Variant::msa_r;
    if (s == "ia") return Variant::ia;
    if (s == "single") return Variant::single;
    throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::msa: return "msa";
        case Variant::msa_r: return "msa_r";
        case Variant::ia: return "ia";
        case Variant::single: return "single";
    }
    return "?";
}

void ForecastConfig::validate() const {
    if (lookback == 0 || horizon == 0) throw ConfigError("lookback and horizon must be positive");
    if (mode.variant == Variant::ia && mode.iterations == 0) throw ConfigError("ia needs at least one iteration");
    if (mode.variant == Variant::single && label_len() == 0) throw ConfigError("single mode needs lookback >= 2");
    if (mode.variant == Variant::msa || mode.variant == Variant::msa_r) {
        const ScaleSchedule s = scale_schedule(lookback, horizon, scale_factor, m_override);
        if (mode.variant == Variant::msa_r && s.m == 0) throw ConfigError("msa_r needs at least two scales");
    }
}

ScaleSchedule ForecastConfig::schedule() const {
    switch (mode.variant) {
        case Variant::msa:
        case Variant::msa_r: return scale_schedule(lookback, horizon, scale_factor, m_override);
        case Variant::ia: return ScaleSchedule::same_scale(mode.iterations, lookback, horizon);
        case Variant::single: return ScaleSchedule::same_scale(1, lookback, horizon);
    }
    throw ConfigError("unhandled variant");
}

namespace {

using Clock = std::chrono::steady_clock;

void check_batch(const ForecastBatch& batch, const ForecastConfig& config, const Backbone& backbone) {
    const Shape s = batch.lookback.shape();
    if (s.l != config.lookback || s.w != backbone.d_x()) {
        throw ShapeError("forecast: lookback " + s.str() + " does not match lookback=" +
                         std::to_string(config.lookback) + ", d_x=" + std::to_string(backbone.d_x()));
    }
    const Shape lt = batch.lookback_time.shape();
    const Shape ht = batch.horizon_time.shape();
    if (lt.b != s.b || lt.l != config.lookback || lt.w != backbone.n_time_feats() || ht.b != s.b ||
        ht.l != config.horizon || ht.w != backbone.n_time_feats()) {
        throw ShapeError("forecast: time features " + lt.str() + " / " + ht.str() + " do not fit the batch");
    }
}

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t end) {
    const Shape s = t.shape();
    Tensor out(Shape{s.b, end - begin, s.w});
    for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t l = begin; l < end; ++l)
            for (std::size_t w = 0; w < s.w; ++w) out(b, l - begin, w) = t(b, l, w);
    return out;
}

Tensor vcat(const Tensor& top, const Tensor& bottom) {
    const Shape a = top.shape();
    const Shape b = bottom.shape();
    Tensor out(Shape{a.b, a.l + b.l, a.w});
    for (std::size_t i = 0; i < a.b; ++i) {
        for (std::size_t l = 0; l < a.l; ++l)
            for (std::size_t w = 0; w < a.w; ++w) out(i, l, w) = top(i, l, w);
        for (std::size_t l = 0; l < b.l; ++l)
            for (std::size_t w = 0; w < a.w; ++w) out(i, a.l + l, w) = bottom(i, l, w);
    }
    return out;
}

// One backbone call on normalized inputs, returning denormalized outputs.
struct StepResult {
    ad::Var mean;
    std::optional<ad::Var> sigma;
    NormNodes stats;
};

StepResult run_step(ad::Graph& g, const Backbone& backbone, ParameterSet& params, NormMode norm, ad::Var enc,
                    ad::Var dec, BackboneInput in, const ForwardContext& ctx) {
    StepResult r;
    r.stats = cross_scale_stats(enc, dec, norm);
    in.enc = apply_norm(enc, r.stats);
    in.dec = apply_norm(dec, r.stats);
    BackboneOutput out = backbone.forward(g, params, in, ctx);
    r.mean = remove_norm(out.mean, r.stats);
    if (out.sigma) r.sigma = r.stats.stdev ? *out.sigma * *r.stats.stdev : *out.sigma;
    return r;
}

void emit(const TraceHook& hook, std::size_t step, std::size_t factor, Shape enc, Shape dec, const NormNodes* stats,
          Clock::time_point start) {
    if (!hook) return;
    ScaleTrace t;
    t.step = step;
    t.factor = factor;
    t.enc_shape = enc;
    t.dec_shape = dec;
    if (stats != nullptr) t.mean = stats->mean.value();
    t.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    t.backbone_called = stats != nullptr;
    hook(t);
}

ScaleOutputs forecast_single(ad::Graph& g, const Backbone& backbone, ParameterSet& params, const ForecastConfig& config,
                             const ForecastBatch& batch, const ForwardContext& ctx, const TraceHook& hook) {
    const auto start = Clock::now();
    const std::size_t B = batch.lookback.shape().b;
    const std::size_t d = backbone.d_x();
    const std::size_t label = config.label_len();
    const std::size_t H = config.horizon;
    const std::size_t L = config.lookback;

    ScaleOutputs out;
    out.schedule = config.schedule();
    const Tensor label_rows = rows_of(batch.lookback, L - label, L);
    ad::Var enc = g.constant(batch.lookback);
    ad::Var dec = g.constant(vcat(label_rows, Tensor(Shape{B, H, d}, 0.0)));

    BackboneInput in;
    in.enc_time = batch.lookback_time;
    in.dec_time = vcat(rows_of(batch.lookback_time, L - label, L), batch.horizon_time);
    in.dec_flags = Tensor(Shape{1, label + H, 1}, kFlagZeroInit);
    for (std::size_t l = 0; l < label; ++l) in.dec_flags(0, l, 0) = kFlagLookback;
    in.scale = 1;
    in.dec_offset = L - label;

    StepResult r = run_step(g, backbone, params, config.norm, enc, dec, in, ctx);
    out.mean.push_back(ad::slice(r.mean, 1, label, label + H));
    out.sigma.push_back(r.sigma ? std::optional<ad::Var>(ad::slice(*r.sigma, 1, label, label + H)) : std::nullopt);
    out.stats.push_back(r.stats);
    out.backbone_calls = 1;
    emit(hook, 0, 1, enc.shape(), dec.shape(), &out.stats.back().value(), start);
    return out;
}

}  // namespace

ScaleOutputs forecast(ad::Graph& g, const Backbone& backbone, ParameterSet& params, const ForecastConfig& config,
                      const ForecastBatch& batch, const ForwardContext& ctx, const TraceHook& hook) {
    config.validate();
    check_batch(batch, config, backbone);
    if (config.mode.variant == Variant::single) return forecast_single(g, backbone, params, config, batch, ctx, hook);

    const std::size_t B = batch.lookback.shape().b;
    const std::size_t d = backbone.d_x();
    const bool same_scale = config.mode.variant == Variant::ia;

    ScaleOutputs out;
    out.schedule = config.schedule();
    const std::size_t n = out.schedule.count();

    for (std::size_t i = 0; i < n; ++i) {
        const auto start = Clock::now();
        const ScaleStep& step = out.schedule.steps[i];
        const bool last = i + 1 == n;

        // Decoder input: zeros at the coarsest step, afterwards the previous
        // output resampled onto this step's grid.
        std::optional<ad::Var> prev_mean;
        std::optional<ad::Var> prev_sigma;
        if (i > 0) {
            prev_mean = config.detach_between_scales ? ad::detach(out.mean.back()) : out.mean.back();
            prev_sigma = out.sigma.back();
            if (!same_scale) {
                const std::size_t ratio = out.schedule.steps[i - 1].factor / step.factor;
                const ad::Var U = g.constant(Tensor::from_matrix(
                    upsample_operator(out.schedule.steps[i - 1].horizon_len, ratio, step.horizon_len)));
                prev_mean = ad::matmul(U, *prev_mean);
                if (prev_sigma) prev_sigma = ad::matmul(U, *prev_sigma);
            }
        }

        if (last && config.mode.variant == Variant::msa_r) {
            out.mean.push_back(*prev_mean);
            out.sigma.push_back(prev_sigma);
            out.stats.push_back(std::nullopt);
            out.last_interpolated = true;
            emit(hook, i, step.factor, Shape{B, step.lookback_len, d}, prev_mean->shape(), nullptr, start);
            break;
        }

        ad::Var enc = g.constant(avg_pool(batch.lookback, step.factor));
        ad::Var dec = prev_mean ? *prev_mean : g.constant(Tensor(Shape{B, step.horizon_len, d}, 0.0));

        BackboneInput in;
        in.enc_time = avg_pool(batch.lookback_time, step.factor);
        in.dec_time = avg_pool(batch.horizon_time, step.factor);
        in.dec_flags = Tensor(Shape{1, step.horizon_len, 1}, i == 0 ? kFlagZeroInit : kFlagPrediction);
        in.scale = step.factor;
        in.dec_offset = step.lookback_len;

        StepResult r = run_step(g, backbone, params, config.norm, enc, dec, in, ctx);
        ++out.backbone_calls;
        out.mean.push_back(r.mean);
        out.sigma.push_back(r.sigma);
        out.stats.push_back(r.stats);
        emit(hook, i, step.factor, enc.shape(), dec.shape(), &out.stats.back().value(), start);
    }
    return out;
}

ad::Var multi_scale_loss(ad::Graph& g, const ScaleOutputs& outputs, const Tensor& horizon, const ScaleLoss& loss,
                         const std::vector<double>& weights) {
    const std::size_t n = outputs.count();
    if (n == 0) throw ShapeError("multi_scale_loss: no outputs");
    if (!weights.empty() && weights.size() != n) {
        throw ConfigError("multi_scale_loss: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(n) + " scales");
    }
    if (outputs.schedule.count() != n) throw ShapeError("multi_scale_loss: outputs and schedule disagree");
    const std::vector<Tensor> targets = pool_targets(horizon, outputs.schedule);
    double total_weight = 0.0;
    std::optional<ad::Var> total;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) throw ConfigError("multi_scale_loss: negative weight");
        total_weight += w;
        if (w == 0.0) continue;
        ad::Var term = loss(outputs.mean[i], outputs.sigma[i], g.constant(targets[i])) * w;
        total = total ? *total + term : term;
    }
    if (!total || total_weight <= 0.0) throw ConfigError("multi_scale_loss: weights sum to zero");
    return *total / total_weight;
}

std::vector<Matrix> forecast_window(const Backbone& backbone, ParameterSet& params, const ForecastConfig& config,
                                    const Matrix& lookback, const Matrix& lookback_time, const Matrix& horizon_time) {
    ad::Graph g(false);
    ForecastBatch batch{Tensor::from_matrix(lookback), Tensor::from_matrix(lookback_time),
                        Tensor::from_matrix(horizon_time)};
    const ScaleOutputs out = forecast(g, backbone, params, config, batch);
    std::vector<Matrix> result;
    result.reserve(out.count());
    for (const auto& m : out.mean) result.push_back(m.value().matrix());
    return result;
}

}  // namespace scaleformer
