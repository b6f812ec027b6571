#pragma once

#include <optional>
#include <string>
#include <utility>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/tensor.hpp"

namespace scaleformer {

enum class LossKind { mse, mae, huber, adaptive, nll };

LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

// alpha = lo + (hi - lo) * sigmoid(theta_alpha), c = softplus(theta_c) + floor.
inline constexpr double kAlphaLo = 1e-3;
inline constexpr double kAlphaHi = 1.999;
inline constexpr double kScaleFloor = 1e-6;

std::pair<double, double> loss_params_derive(double theta_alpha, double theta_c);
ad::Var derive_alpha(ad::Var theta_alpha);
ad::Var derive_scale(ad::Var theta_c);

// Mean over elements of |a-2|/a * (((x/c)^2 / |a-2| + 1)^(a/2) - 1).
ad::Var adaptive_loss(ad::Var residual, ad::Var alpha, ad::Var c);
ad::Var mse(ad::Var pred, ad::Var target);
ad::Var mae(ad::Var pred, ad::Var target);
ad::Var huber(ad::Var pred, ad::Var target, double delta = 1.0);
ad::Var gaussian_nll(ad::Var mu, ad::Var sigma, ad::Var y);
// Closed form sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)), z = (y - mu) / sigma.
ad::Var gaussian_crps(ad::Var mu, ad::Var sigma, ad::Var y);

// Plain evaluations of the same objectives.
double adaptive_loss(const Matrix& residual, double alpha, double c);
double mse(const Matrix& pred, const Matrix& target);
double mae(const Matrix& pred, const Matrix& target);
double huber(const Matrix& pred, const Matrix& target, double delta = 1.0);
double gaussian_nll(const Matrix& mu, const Matrix& sigma, const Matrix& y);
double gaussian_crps(const Matrix& mu, const Matrix& sigma, const Matrix& y);

// A training objective plus its own learnable parameters (the adaptive
// loss's two latents; empty otherwise).
class Objective {
public:
    explicit Objective(LossKind kind, double huber_delta = 1.0);

    LossKind kind() const { return kind_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    // Current (alpha, c); adaptive loss only.
    std::pair<double, double> alpha_c() const;

    ad::Var operator()(ad::Graph& g, ad::Var pred, std::optional<ad::Var> sigma, ad::Var target);

private:
    LossKind kind_;
    double huber_delta_;
    ParameterSet params_;
};

}  // namespace scaleformer
