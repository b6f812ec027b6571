#include "scaleformer/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scaleformer/error.hpp"

namespace scaleformer {

LossKind parse_loss(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "mae") return LossKind::mae;
    if (s == "huber") return LossKind::huber;
    if (s == "adaptive") return LossKind::adaptive;
    if (s == "nll") return LossKind::nll;
    throw ConfigError("unknown loss '" + s + "'");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::mse: return "mse";
        case LossKind::mae: return "mae";
        case LossKind::huber: return "huber";
        case LossKind::adaptive: return "adaptive";
        case LossKind::nll: return "nll";
    }
    return "?";
}

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": shapes " + a.str() + " and " + b.str() + " differ");
}

void require_same(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

void require_positive(const Tensor& t, const char* what) {
    for (double v : t.data())
        if (!(v > 0.0)) throw DomainError(std::string(what) + " must be positive");
}

void require_positive(const Matrix& m, const char* what) {
    for (double v : m.data())
        if (!(v > 0.0)) throw DomainError(std::string(what) + " must be positive");
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

std::pair<double, double> loss_params_derive(double theta_alpha, double theta_c) {
    return {kAlphaLo + (kAlphaHi - kAlphaLo) * sigmoid(theta_alpha), softplus(theta_c) + kScaleFloor};
}

ad::Var derive_alpha(ad::Var theta_alpha) { return ad::sigmoid(theta_alpha) * (kAlphaHi - kAlphaLo) + kAlphaLo; }

ad::Var derive_scale(ad::Var theta_c) { return ad::softplus(theta_c) + kScaleFloor; }

ad::Var adaptive_loss(ad::Var residual, ad::Var alpha, ad::Var c) {
    require_positive(c.value(), "adaptive_loss: c");
    const ad::Var gap = ad::abs(alpha - 2.0);
    const ad::Var r = residual / c;
    const ad::Var base = r * r / gap + 1.0;
    const ad::Var power = ad::exp(alpha * 0.5 * ad::log(base));
    return ad::mean_all(gap / alpha * (power - 1.0));
}

ad::Var mse(ad::Var pred, ad::Var target) {
    require_same(pred.shape(), target.shape(), "mse");
    const ad::Var r = pred - target;
    return ad::mean_all(r * r);
}

ad::Var mae(ad::Var pred, ad::Var target) {
    require_same(pred.shape(), target.shape(), "mae");
    return ad::mean_all(ad::abs(pred - target));
}

ad::Var huber(ad::Var pred, ad::Var target, double delta) {
    require_same(pred.shape(), target.shape(), "huber");
    if (!(delta > 0.0)) throw DomainError("huber: delta must be positive");
    const ad::Var a = ad::abs(pred - target);
    const ad::Var inner = ad::clamp(a, 0.0, delta);
    return ad::mean_all(inner * inner * 0.5 + (a - inner) * delta);
}

ad::Var gaussian_nll(ad::Var mu, ad::Var sigma, ad::Var y) {
    require_same(mu.shape(), y.shape(), "gaussian_nll");
    require_same(mu.shape(), sigma.shape(), "gaussian_nll");
    require_positive(sigma.value(), "gaussian_nll: sigma");
    const ad::Var r = y - mu;
    const ad::Var z2 = r * r / (sigma * sigma);
    return ad::mean_all(ad::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi) + z2 * 0.5);
}

ad::Var gaussian_crps(ad::Var mu, ad::Var sigma, ad::Var y) {
    require_same(mu.shape(), y.shape(), "gaussian_crps");
    require_same(mu.shape(), sigma.shape(), "gaussian_crps");
    require_positive(sigma.value(), "gaussian_crps: sigma");
    const ad::Var z = (y - mu) / sigma;
    const ad::Var two_cdf_minus_one = ad::erf(z / std::numbers::sqrt2);
    const ad::Var pdf = ad::exp(z * z * -0.5) / std::sqrt(2.0 * std::numbers::pi);
    return ad::mean_all(sigma * (z * two_cdf_minus_one + pdf * 2.0 - 1.0 / std::sqrt(std::numbers::pi)));
}

double adaptive_loss(const Matrix& residual, double alpha, double c) {
    if (!(c > 0.0)) throw DomainError("adaptive_loss: c must be positive");
    const double gap = std::abs(alpha - 2.0);
    double total = 0.0;
    for (double x : residual.data()) {
        const double r = x / c;
        total += gap / alpha * (std::pow(r * r / gap + 1.0, alpha / 2.0) - 1.0);
    }
    return total / static_cast<double>(residual.size());
}

double mse(const Matrix& pred, const Matrix& target) {
    require_same(pred, target, "mse");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred.data()[i] - target.data()[i];
        total += r * r;
    }
    return total / static_cast<double>(pred.size());
}

double mae(const Matrix& pred, const Matrix& target) {
    require_same(pred, target, "mae");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred.data()[i] - target.data()[i]);
    return total / static_cast<double>(pred.size());
}

double huber(const Matrix& pred, const Matrix& target, double delta) {
    require_same(pred, target, "huber");
    if (!(delta > 0.0)) throw DomainError("huber: delta must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double a = std::abs(pred.data()[i] - target.data()[i]);
        total += a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
    }
    return total / static_cast<double>(pred.size());
}

double gaussian_nll(const Matrix& mu, const Matrix& sigma, const Matrix& y) {
    require_same(mu, y, "gaussian_nll");
    require_same(mu, sigma, "gaussian_nll");
    require_positive(sigma, "gaussian_nll: sigma");
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double s = sigma.data()[i];
        const double r = y.data()[i] - mu.data()[i];
        total += 0.5 * std::log(2.0 * std::numbers::pi * s * s) + r * r / (2.0 * s * s);
    }
    return total / static_cast<double>(mu.size());
}

double gaussian_crps(const Matrix& mu, const Matrix& sigma, const Matrix& y) {
    require_same(mu, y, "gaussian_crps");
    require_same(mu, sigma, "gaussian_crps");
    require_positive(sigma, "gaussian_crps: sigma");
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double s = sigma.data()[i];
        const double z = (y.data()[i] - mu.data()[i]) / s;
        total += s * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
    }
    return total / static_cast<double>(mu.size());
}

Objective::Objective(LossKind kind, double huber_delta) : kind_(kind), huber_delta_(huber_delta) {
    if (kind_ == LossKind::adaptive) {
        // Starts at alpha = 1, c = 1 (up to the floor).
        params_.add("loss.theta_alpha", Tensor::scalar(0.0));
        params_.add("loss.theta_c", Tensor::scalar(std::log(std::numbers::e - 1.0)));
    }
}

std::pair<double, double> Objective::alpha_c() const {
    if (kind_ != LossKind::adaptive) throw ConfigError("alpha and c exist only for the adaptive loss");
    return loss_params_derive(params_.at("loss.theta_alpha").value.item(), params_.at("loss.theta_c").value.item());
}

ad::Var Objective::operator()(ad::Graph& g, ad::Var pred, std::optional<ad::Var> sigma, ad::Var target) {
    switch (kind_) {
        case LossKind::mse: return mse(pred, target);
        case LossKind::mae: return mae(pred, target);
        case LossKind::huber: return huber(pred, target, huber_delta_);
        case LossKind::adaptive: {
            require_same(pred.shape(), target.shape(), "adaptive_loss");
            const ad::Var alpha = derive_alpha(g.param(params_.at("loss.theta_alpha")));
            const ad::Var c = derive_scale(g.param(params_.at("loss.theta_c")));
            return adaptive_loss(pred - target, alpha, c);
        }
        case LossKind::nll:
            if (!sigma) throw ConfigError("the nll loss needs a gaussian head");
            return gaussian_nll(pred, *sigma, target);
    }
    throw ConfigError("unhandled loss kind");
}

}  // namespace scaleformer
