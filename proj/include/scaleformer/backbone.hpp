#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/tensor.hpp"

namespace scaleformer {

enum class HeadKind { point, gaussian };

HeadKind parse_head(const std::string& s);
std::string to_string(HeadKind h);

struct BackboneConfig {
    std::size_t d_model = 32;
    std::size_t n_heads = 2;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 1;
    std::size_t d_ff = 64;
    double dropout = 0.0;
    HeadKind head = HeadKind::point;

    void validate() const;
};

// Inputs of one call of the forecasting module at one scale. Values are
// already normalized; time features are raw (the scale indicator is appended
// inside the embedding).
struct BackboneInput {
    ad::Var enc;        // (B, Le, d_x)
    ad::Var dec;        // (B, Ld, d_x)
    Tensor enc_time;    // (B, Le, n_time_feats)
    Tensor dec_time;    // (B, Ld, n_time_feats)
    Tensor dec_flags;   // (1|B, Ld, 1) source flag per decoder row
    std::size_t scale = 1;
    std::size_t dec_offset = 0;  // position of decoder row 0 on the scale's grid
};

struct BackboneOutput {
    ad::Var mean;                // (B, Ld, d_x)
    std::optional<ad::Var> sigma;  // gaussian head only, > 0
};

struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout
};

// The forecasting module F. A single parameter set is shared by every scale.
class Backbone {
public:
    virtual ~Backbone() = default;

    virtual std::string kind() const = 0;
    virtual ParameterSet init(std::uint64_t seed) const = 0;
    virtual BackboneOutput forward(ad::Graph& g, ParameterSet& params, const BackboneInput& in,
                                   const ForwardContext& ctx) const = 0;
    virtual HeadKind head() const = 0;

    std::size_t d_x() const { return d_x_; }
    std::size_t n_time_feats() const { return n_time_feats_; }

protected:
    Backbone(std::size_t d_x, std::size_t n_time_feats) : d_x_(d_x), n_time_feats_(n_time_feats) {}

private:
    std::size_t d_x_;
    std::size_t n_time_feats_;
};

// softmax(Q K^T / sqrt(d_head)) V for each of n_heads column blocks, heads
// concatenated back along the width. q: (B, Lq, d), k and v: (B, Lk, d).
ad::Var attention(ad::Var q, ad::Var k, ad::Var v, std::size_t n_heads);

// Encoder-decoder transformer with post-norm residual blocks and one-shot
// decoding of the whole horizon.
class TransformerBackbone final : public Backbone {
public:
    TransformerBackbone(BackboneConfig config, std::size_t d_x, std::size_t n_time_feats);

    std::string kind() const override { return "transformer"; }
    ParameterSet init(std::uint64_t seed) const override;
    BackboneOutput forward(ad::Graph& g, ParameterSet& params, const BackboneInput& in,
                           const ForwardContext& ctx) const override;
    HeadKind head() const override { return config_.head; }
    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
};

// dec * A + mean_rows(enc) * B + bias. Small enough for exhaustive tests.
class LinearBackbone final : public Backbone {
public:
    LinearBackbone(std::size_t d_x, std::size_t n_time_feats) : Backbone(d_x, n_time_feats) {}

    std::string kind() const override { return "linear"; }
    ParameterSet init(std::uint64_t seed) const override;
    BackboneOutput forward(ad::Graph& g, ParameterSet& params, const BackboneInput& in,
                           const ForwardContext& ctx) const override;
    HeadKind head() const override { return HeadKind::point; }
};

std::unique_ptr<Backbone> make_backbone(const std::string& kind, const BackboneConfig& config, std::size_t d_x,
                                        std::size_t n_time_feats);

// Sets every entry of every parameter to `value`.
void fill_parameters(ParameterSet& params, double value);

}  // namespace scaleformer
