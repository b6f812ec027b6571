#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scaleformer/error.hpp"
#include "scaleformer/loss.hpp"
#include "scaleformer/scaleformer.hpp"

using namespace scaleformer;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(s);
    for (double& v : t.data()) v = n(rng);
    return t;
}

ForecastBatch random_batch(std::size_t b, std::size_t L, std::size_t H, std::size_t dx, std::size_t nt,
                           std::mt19937_64& rng) {
    return {random_tensor(Shape{b, L, dx}, rng), random_tensor(Shape{b, L, nt}, rng),
            random_tensor(Shape{b, H, nt}, rng)};
}

BackboneConfig small_backbone(std::size_t d_model = 8) {
    BackboneConfig c;
    c.d_model = d_model;
    c.n_heads = 2;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.d_ff = d_model;
    return c;
}

ForecastConfig config(Variant v, std::size_t L, std::size_t H, std::size_t s = 2) {
    ForecastConfig c;
    c.lookback = L;
    c.horizon = H;
    c.scale_factor = s;
    c.mode.variant = v;
    return c;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

TEST(Forecast, OutputCountAndLengths) {
    std::mt19937_64 rng(1);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    for (std::size_t s : {2u, 3u, 4u}) {
        for (std::size_t L : {16u, 27u, 40u}) {
            const std::size_t H = 10;
            const ForecastConfig c = config(Variant::msa, L, H, s);
            ad::Graph g(false);
            const ScaleOutputs out = forecast(g, bb, ps, c, random_batch(2, L, H, 2, 1, rng));
            std::size_t m = 0;
            for (std::size_t p = s; p <= L; p *= s) ++m;
            m = m == 0 ? 0 : m - 1;
            ASSERT_EQ(out.count(), m + 1) << s << " " << L;
            std::size_t factor = 1;
            for (std::size_t k = 0; k < m; ++k) factor *= s;
            for (std::size_t i = 0; i <= m; ++i) {
                EXPECT_EQ(out.mean[i].shape(), (Shape{2, ceil_div(H, factor), 2}));
                factor /= s;
            }
            EXPECT_EQ(out.backbone_calls, m + 1);
        }
    }
}

TEST(Forecast, ZeroBackboneGivesConstantOutputs) {
    std::mt19937_64 rng(2);
    TransformerBackbone bb(small_backbone(), 3, 1);
    ParameterSet ps = bb.init(0);
    fill_parameters(ps, 0.0);
    for (NormMode norm : {NormMode::none, NormMode::mean, NormMode::mean_std}) {
        ForecastConfig c = config(Variant::msa, 32, 16);
        c.norm = norm;
        ad::Graph g(false);
        const ScaleOutputs out = forecast(g, bb, ps, c, random_batch(2, 32, 16, 3, 1, rng));
        for (const auto& m : out.mean) {
            const Tensor& v = m.value();
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t l = 1; l < v.shape().l; ++l)
                    for (std::size_t w = 0; w < 3; ++w) EXPECT_NEAR(v(b, l, w), v(b, 0, w), 1e-12);
        }
    }
}

TEST(Forecast, ParameterCountIndependentOfDepth) {
    TransformerBackbone bb(small_backbone(), 2, 1);
    const std::size_t base = bb.init(0).scalar_count();
    // The backbone is shared, so the count cannot depend on the ladder; only
    // the objective adds its two latents.
    Objective adaptive(LossKind::adaptive), mse_obj(LossKind::mse);
    EXPECT_EQ(adaptive.params().scalar_count() - mse_obj.params().scalar_count(), 2u);
    std::mt19937_64 rng(0);
    for (std::size_t m : {0u, 1u, 3u}) {
        ForecastConfig c = config(Variant::msa, 32, 16);
        c.m_override = m;
        ParameterSet ps = bb.init(0);
        ad::Graph g(false);
        forecast(g, bb, ps, c, random_batch(1, 32, 16, 2, 1, rng));
        EXPECT_EQ(ps.scalar_count(), base);
    }
}

TEST(Forecast, ReducedVariantSavesOneCall) {
    std::mt19937_64 rng(3);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    const ForecastBatch batch = random_batch(2, 32, 16, 2, 1, rng);
    ad::Graph g(false);
    const ScaleOutputs full = forecast(g, bb, ps, config(Variant::msa, 32, 16), batch);
    const ScaleOutputs reduced = forecast(g, bb, ps, config(Variant::msa_r, 32, 16), batch);
    EXPECT_EQ(reduced.backbone_calls + 1, full.backbone_calls);
    EXPECT_EQ(reduced.count(), full.count());
    EXPECT_TRUE(reduced.last_interpolated);
    EXPECT_FALSE(reduced.stats.back().has_value());
    // Steps before the last are identical.
    const std::size_t n = full.count();
    for (std::size_t i = 0; i + 1 < n; ++i) EXPECT_EQ(full.mean[i].value(), reduced.mean[i].value());
    // The last is the previous output interpolated onto the original grid.
    const Matrix prev = reduced.mean[n - 2].value().matrix(1);
    const Matrix U = upsample_operator(prev.rows(), 2, 16);
    const Tensor last = reduced.mean[n - 1].value();
    for (std::size_t r = 0; r < 16; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < prev.rows(); ++k) acc += U(r, k) * prev(k, 0);
        EXPECT_NEAR(last(1, r, 0), acc, 1e-12);
    }
    EXPECT_THROW(config(Variant::msa_r, 32, 16, 64).validate(), ConfigError);
}

TEST(Forecast, SameScaleAndSingleModes) {
    std::mt19937_64 rng(4);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    const ForecastBatch batch = random_batch(2, 16, 8, 2, 1, rng);
    ForecastConfig ia = config(Variant::ia, 16, 8);
    ia.mode.iterations = 3;
    ad::Graph g(false);
    const ScaleOutputs a = forecast(g, bb, ps, ia, batch);
    ASSERT_EQ(a.count(), 3u);
    EXPECT_EQ(a.backbone_calls, 3u);
    for (const auto& m : a.mean) EXPECT_EQ(m.shape(), (Shape{2, 8, 2}));

    std::vector<Shape> dec_shapes;
    const ScaleOutputs s = forecast(g, bb, ps, config(Variant::single, 16, 8), batch, {},
                                    [&](const ScaleTrace& t) { dec_shapes.push_back(t.dec_shape); });
    ASSERT_EQ(s.count(), 1u);
    EXPECT_EQ(s.mean[0].shape(), (Shape{2, 8, 2}));
    ASSERT_EQ(dec_shapes.size(), 1u);
    EXPECT_EQ(dec_shapes[0], (Shape{2, 8 + 8, 2}));
    EXPECT_THROW(parse_variant("multi"), ConfigError);
}

TEST(Forecast, TraceHookFollowsLadder) {
    std::mt19937_64 rng(5);
    TransformerBackbone bb(small_backbone(), 1, 1);
    ParameterSet ps = bb.init(0);
    std::vector<ScaleTrace> traces;
    ad::Graph g(false);
    forecast(g, bb, ps, config(Variant::msa, 32, 8), random_batch(1, 32, 8, 1, 1, rng), {},
             [&](const ScaleTrace& t) { traces.push_back(t); });
    const std::vector<std::size_t> ladder = {16, 8, 4, 2, 1};
    ASSERT_EQ(traces.size(), ladder.size());
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        EXPECT_EQ(traces[i].factor, ladder[i]);
        EXPECT_EQ(traces[i].enc_shape.l, ceil_div(32, ladder[i]));
        EXPECT_EQ(traces[i].dec_shape.l, ceil_div(8, ladder[i]));
    }
}

TEST(Forecast, WindowMatchesBatchRow) {
    std::mt19937_64 rng(6);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    const ForecastBatch batch = random_batch(3, 16, 8, 2, 1, rng);
    const ForecastConfig c = config(Variant::msa, 16, 8);
    ad::Graph g(false);
    const ScaleOutputs out = forecast(g, bb, ps, c, batch);
    const auto per_scale = forecast_window(bb, ps, c, batch.lookback.matrix(2), batch.lookback_time.matrix(2),
                                           batch.horizon_time.matrix(2));
    ASSERT_EQ(per_scale.size(), out.count());
    for (std::size_t i = 0; i < out.count(); ++i)
        EXPECT_LT(max_abs_diff(per_scale[i], out.mean[i].value().matrix(2)), 1e-12);
}

TEST(Forecast, ShapeChecks) {
    std::mt19937_64 rng(7);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    ad::Graph g(false);
    EXPECT_THROW(forecast(g, bb, ps, config(Variant::msa, 16, 8), random_batch(1, 12, 8, 2, 1, rng)), ShapeError);
    EXPECT_THROW(forecast(g, bb, ps, config(Variant::msa, 16, 8), random_batch(1, 16, 8, 3, 1, rng)), ShapeError);
    EXPECT_THROW(forecast(g, bb, ps, config(Variant::msa, 16, 8), random_batch(1, 16, 8, 2, 2, rng)), ShapeError);
}

TEST(MultiScaleLoss, EqualWeightsAverageScales) {
    std::mt19937_64 rng(8);
    TransformerBackbone bb(small_backbone(), 2, 1);
    ParameterSet ps = bb.init(0);
    const ForecastBatch batch = random_batch(2, 16, 8, 2, 1, rng);
    const Tensor horizon = random_tensor(Shape{2, 8, 2}, rng);
    ad::Graph g(false);
    const ScaleOutputs out = forecast(g, bb, ps, config(Variant::msa, 16, 8), batch);
    const ScaleLoss l = [](ad::Var p, std::optional<ad::Var>, ad::Var t) { return mse(p, t); };

    // Pool the targets by hand.
    double expect = 0.0;
    for (std::size_t i = 0; i < out.count(); ++i) {
        const std::size_t f = out.schedule.steps[i].factor;
        double sq = 0.0;
        const Tensor& pred = out.mean[i].value();
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t r = 0; r < 8 / f; ++r)
                for (std::size_t w = 0; w < 2; ++w) {
                    double t = 0.0;
                    for (std::size_t k = 0; k < f; ++k) t += horizon(b, r * f + k, w);
                    sq += std::pow(pred(b, r, w) - t / static_cast<double>(f), 2);
                }
        expect += sq / static_cast<double>(2 * (8 / f) * 2);
    }
    expect /= static_cast<double>(out.count());
    EXPECT_NEAR(multi_scale_loss(g, out, horizon, l).value().item(), expect, 1e-12);

    std::vector<double> only_last(out.count(), 0.0);
    only_last.back() = 3.0;
    EXPECT_NEAR(multi_scale_loss(g, out, horizon, l, only_last).value().item(),
                mse(out.final_mean().value().matrix(0), horizon.matrix(0)) / 2.0 +
                    mse(out.final_mean().value().matrix(1), horizon.matrix(1)) / 2.0,
                1e-12);
    EXPECT_THROW(multi_scale_loss(g, out, horizon, l, {1.0}), ConfigError);
    EXPECT_THROW(multi_scale_loss(g, out, horizon, l, std::vector<double>(out.count(), 0.0)), ConfigError);
    std::vector<double> negative(out.count(), 1.0);
    negative[0] = -1.0;
    EXPECT_THROW(multi_scale_loss(g, out, horizon, l, negative), ConfigError);
}

TEST(Forecast, DetachCutsCrossScaleGradient) {
    std::mt19937_64 rng(9);
    TransformerBackbone bb(small_backbone(), 1, 1);
    const ForecastBatch batch = random_batch(1, 16, 8, 1, 1, rng);
    const Tensor horizon = random_tensor(Shape{1, 8, 1}, rng);
    auto grads = [&](bool detach, std::vector<double> weights) {
        ParameterSet ps = bb.init(1);
        ForecastConfig c = config(Variant::msa, 16, 8);
        c.detach_between_scales = detach;
        ps.zero_grad();
        ad::Graph g;
        const ScaleOutputs out = forecast(g, bb, ps, c, batch);
        g.backward(multi_scale_loss(g, out, horizon,
                                    [](ad::Var p, std::optional<ad::Var>, ad::Var t) { return mse(p, t); }, weights));
        std::vector<double> flat;
        for (const auto& p : ps) flat.insert(flat.end(), p.grad.data().begin(), p.grad.data().end());
        return flat;
    };
    const std::size_t n = config(Variant::msa, 16, 8).schedule().count();
    std::vector<double> first(n, 0.0), last(n, 0.0);
    first.front() = 1.0;
    last.back() = 1.0;
    EXPECT_EQ(grads(false, first), grads(true, first));
    EXPECT_NE(grads(false, last), grads(true, last));
}

TEST(Forecast, FullGraphGradientWithAdaptiveLoss) {
    std::mt19937_64 rng(10);
    TransformerBackbone bb(small_backbone(8), 2, 1);
    ParameterSet ps = bb.init(3);
    Objective obj(LossKind::adaptive);
    obj.params().at("loss.theta_alpha").value[0] = 0.3;
    obj.params().at("loss.theta_c").value[0] = -0.2;
    const ForecastBatch batch = random_batch(2, 16, 8, 2, 1, rng);
    const Tensor horizon = random_tensor(Shape{2, 8, 2}, rng);
    ForecastConfig c = config(Variant::msa, 16, 8);
    ParameterSet all;
    for (const auto& p : ps) all.add(p.name, p.value);
    Parameter& ta = all.add("loss.theta_alpha", obj.params().at("loss.theta_alpha").value);
    Parameter& tc = all.add("loss.theta_c", obj.params().at("loss.theta_c").value);
    auto f = [&](ad::Graph& g) {
        const ScaleOutputs out = forecast(g, bb, all, c, batch);
        return multi_scale_loss(g, out, horizon, [&](ad::Var p, std::optional<ad::Var>, ad::Var t) {
            return adaptive_loss(p - t, derive_alpha(g.param(ta)), derive_scale(g.param(tc)));
        });
    };
    EXPECT_LT(ad::grad_check(f, all), 1e-4);
}
