#include "scaleformer/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "scaleformer/embed.hpp"
#include "scaleformer/error.hpp"

namespace scaleformer {

HeadKind parse_head(const std::string& s) {
    if (s == "point") return HeadKind::point;
    if (s == "gaussian") return HeadKind::gaussian;
    throw ConfigError("unknown head '" + s + "'");
}

std::string to_string(HeadKind h) { return h == HeadKind::point ? "point" : "gaussian"; }

void BackboneConfig::validate() const {
    if (d_model == 0 || d_model % 2 != 0) throw ConfigError("d_model must be a positive even number");
    if (n_heads == 0 || d_model % n_heads != 0) throw ConfigError("n_heads must divide d_model");
    if (enc_layers == 0 || dec_layers == 0) throw ConfigError("encoder and decoder need at least one layer");
    if (d_ff == 0) throw ConfigError("d_ff must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

ad::Var attention(ad::Var q, ad::Var k, ad::Var v, std::size_t n_heads) {
    const Shape sq = q.shape();
    const Shape sk = k.shape();
    if (sk != v.shape() || sq.w != sk.w || sq.b != sk.b) {
        throw ShapeError("attention: incompatible Q " + sq.str() + ", K " + sk.str() + ", V " + v.shape().str());
    }
    if (n_heads == 0 || sq.w % n_heads != 0) throw ShapeError("attention: width not divisible by heads");
    const std::size_t dh = sq.w / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        ad::Var qh = n_heads == 1 ? q : ad::slice(q, 2, h * dh, (h + 1) * dh);
        ad::Var kh = n_heads == 1 ? k : ad::slice(k, 2, h * dh, (h + 1) * dh);
        ad::Var vh = n_heads == 1 ? v : ad::slice(v, 2, h * dh, (h + 1) * dh);
        ad::Var scores = ad::matmul(qh, ad::transpose(kh)) * inv_sqrt;
        heads.push_back(ad::matmul(ad::softmax(scores), vh));
    }
    return n_heads == 1 ? heads.front() : ad::concat(heads, 2);
}

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-k, k);
    Tensor t(shape);
    for (double& x : t.data()) x = u(rng);
    return t;
}

void add_linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    ps.add(name + ".w", uniform_tensor(Shape{1, in, out}, in, rng));
    ps.add(name + ".b", uniform_tensor(Shape{1, 1, out}, in, rng));
}

void add_norm(ParameterSet& ps, const std::string& name, std::size_t width) {
    ps.add(name + ".g", Tensor(Shape{1, 1, width}, 1.0));
    ps.add(name + ".b", Tensor(Shape{1, 1, width}, 0.0));
}

ad::Var linear(ad::Graph& g, ParameterSet& ps, const std::string& name, ad::Var x) {
    return ad::matmul(x, g.param(ps.at(name + ".w"))) + g.param(ps.at(name + ".b"));
}

ad::Var norm(ad::Graph& g, ParameterSet& ps, const std::string& name, ad::Var x) {
    return ad::layer_norm(x, g.param(ps.at(name + ".g")), g.param(ps.at(name + ".b")));
}

ad::Var maybe_dropout(ad::Var x, double rate, const ForwardContext& ctx) {
    if (!ctx.training || rate <= 0.0) return x;
    if (ctx.rng == nullptr) throw ConfigError("dropout during training needs a random generator");
    return ad::dropout(x, rate, *ctx.rng);
}

ad::Var mha(ad::Graph& g, ParameterSet& ps, const std::string& name, ad::Var xq, ad::Var xkv, std::size_t heads) {
    ad::Var q = linear(g, ps, name + ".q", xq);
    ad::Var k = linear(g, ps, name + ".k", xkv);
    ad::Var v = linear(g, ps, name + ".v", xkv);
    return linear(g, ps, name + ".o", attention(q, k, v, heads));
}

ad::Var feed_forward(ad::Graph& g, ParameterSet& ps, const std::string& name, ad::Var x) {
    return linear(g, ps, name + ".ff2", ad::relu(linear(g, ps, name + ".ff1", x)));
}

ad::Var embed(ad::Graph& g, ParameterSet& ps, const std::string& side, ad::Var values, const Tensor& flags,
              const Tensor& time, std::size_t scale, std::size_t offset, std::size_t d_model) {
    const Shape s = values.shape();
    ad::Var v = value_embed(values, flags, g.param(ps.at(side + ".embed.value")));
    ad::Var t = temporal_embed(time, scale, g.param(ps.at(side + ".embed.time")));
    ad::Var p = g.constant(Tensor::from_matrix(positional_embed(s.l, offset, scale, d_model)));
    return v + t + p;
}

}  // namespace

TransformerBackbone::TransformerBackbone(BackboneConfig config, std::size_t d_x, std::size_t n_time_feats)
    : Backbone(d_x, n_time_feats), config_(config) {
    config_.validate();
    if (d_x == 0) throw ConfigError("series width must be positive");
}

ParameterSet TransformerBackbone::init(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParameterSet ps;
    const std::size_t dm = config_.d_model;
    for (const std::string side : {"enc", "dec"}) {
        ps.add(side + ".embed.value", uniform_tensor(Shape{1, d_x() + 1, dm}, d_x() + 1, rng));
        ps.add(side + ".embed.time", uniform_tensor(Shape{1, n_time_feats() + 1, dm}, n_time_feats() + 1, rng));
    }

    for (std::size_t l = 0; l < config_.enc_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        for (const char* proj : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) add_linear(ps, pre + proj, dm, dm, rng);
        add_norm(ps, pre + ".norm1", dm);
        add_linear(ps, pre + ".ff1", dm, config_.d_ff, rng);
        add_linear(ps, pre + ".ff2", config_.d_ff, dm, rng);
        add_norm(ps, pre + ".norm2", dm);
    }
    for (std::size_t l = 0; l < config_.dec_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        for (const char* proj : {".self.q", ".self.k", ".self.v", ".self.o", ".cross.q", ".cross.k", ".cross.v",
                                 ".cross.o"}) {
            add_linear(ps, pre + proj, dm, dm, rng);
        }
        add_norm(ps, pre + ".norm1", dm);
        add_norm(ps, pre + ".norm2", dm);
        add_linear(ps, pre + ".ff1", dm, config_.d_ff, rng);
        add_linear(ps, pre + ".ff2", config_.d_ff, dm, rng);
        add_norm(ps, pre + ".norm3", dm);
    }
    const std::size_t out_width = config_.head == HeadKind::gaussian ? 2 * d_x() : d_x();
    add_linear(ps, "out", dm, out_width, rng);
    return ps;
}

BackboneOutput TransformerBackbone::forward(ad::Graph& g, ParameterSet& ps, const BackboneInput& in,
                                            const ForwardContext& ctx) const {
    const Shape se = in.enc.shape();
    const Shape sd = in.dec.shape();
    if (se.w != d_x() || sd.w != d_x() || se.b != sd.b) {
        throw ShapeError("transformer: inputs " + se.str() + " / " + sd.str() + " do not match d_x=" +
                         std::to_string(d_x()));
    }
    const std::size_t dm = config_.d_model;
    const double rate = config_.dropout;

    Tensor enc_flags(Shape{1, se.l, 1}, kFlagLookback);
    ad::Var x = embed(g, ps, "enc", in.enc, enc_flags, in.enc_time, in.scale, 0, dm);
    x = maybe_dropout(x, rate, ctx);
    for (std::size_t l = 0; l < config_.enc_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        x = norm(g, ps, pre + ".norm1", x + maybe_dropout(mha(g, ps, pre + ".attn", x, x, config_.n_heads), rate, ctx));
        x = norm(g, ps, pre + ".norm2", x + maybe_dropout(feed_forward(g, ps, pre, x), rate, ctx));
    }

    ad::Var y = embed(g, ps, "dec", in.dec, in.dec_flags, in.dec_time, in.scale, in.dec_offset, dm);
    y = maybe_dropout(y, rate, ctx);
    for (std::size_t l = 0; l < config_.dec_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        y = norm(g, ps, pre + ".norm1", y + maybe_dropout(mha(g, ps, pre + ".self", y, y, config_.n_heads), rate, ctx));
        y = norm(g, ps, pre + ".norm2", y + maybe_dropout(mha(g, ps, pre + ".cross", y, x, config_.n_heads), rate, ctx));
        y = norm(g, ps, pre + ".norm3", y + maybe_dropout(feed_forward(g, ps, pre, y), rate, ctx));
    }

    ad::Var out = linear(g, ps, "out", y);
    if (config_.head == HeadKind::point) return {out, std::nullopt};
    ad::Var mu = ad::slice(out, 2, 0, d_x());
    ad::Var sigma = ad::softplus(ad::slice(out, 2, d_x(), 2 * d_x())) + 1e-6;
    return {mu, sigma};
}

ParameterSet LinearBackbone::init(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParameterSet ps;
    ps.add("linear.A", uniform_tensor(Shape{1, d_x(), d_x()}, d_x(), rng));
    ps.add("linear.B", uniform_tensor(Shape{1, d_x(), d_x()}, d_x(), rng));
    ps.add("linear.bias", uniform_tensor(Shape{1, 1, d_x()}, d_x(), rng));
    return ps;
}

BackboneOutput LinearBackbone::forward(ad::Graph& g, ParameterSet& ps, const BackboneInput& in,
                                       const ForwardContext&) const {
    if (in.enc.shape().w != d_x() || in.dec.shape().w != d_x()) throw ShapeError("linear backbone: width mismatch");
    ad::Var out = ad::matmul(in.dec, g.param(ps.at("linear.A"))) +
                  ad::matmul(ad::mean(in.enc, 1), g.param(ps.at("linear.B"))) + g.param(ps.at("linear.bias"));
    return {out, std::nullopt};
}

std::unique_ptr<Backbone> make_backbone(const std::string& kind, const BackboneConfig& config, std::size_t d_x,
                                        std::size_t n_time_feats) {
    if (kind == "transformer") return std::make_unique<TransformerBackbone>(config, d_x, n_time_feats);
    if (kind == "linear") {
        if (config.head != HeadKind::point) throw ConfigError("the linear backbone only has a point head");
        return std::make_unique<LinearBackbone>(d_x, n_time_feats);
    }
    throw ConfigError("unknown backbone '" + kind + "'");
}

void fill_parameters(ParameterSet& params, double value) {
    for (auto& p : params) std::fill(p.value.data().begin(), p.value.data().end(), value);
}

}  // namespace scaleformer
