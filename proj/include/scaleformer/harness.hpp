#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scaleformer/backbone.hpp"
#include "scaleformer/data.hpp"
#include "scaleformer/loss.hpp"
#include "scaleformer/scaleformer.hpp"

namespace scaleformer {

struct TrainConfig {
    ForecastConfig forecast;
    BackboneConfig model;
    std::string backbone = "transformer";
    LossKind loss = LossKind::adaptive;
    double huber_delta = 1.0;
    double lr_model = 1e-4;
    double lr_loss_params = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    double grad_clip = 5.0;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 1;
    std::vector<double> scale_weights;  // empty: uniform

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// How a raw series becomes train/val/test splits.
struct DataOptions {
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    bool standardize = true;         // z-score with train-split statistics
    double train_outlier_pct = 0.0;  // injected after standardizing
    std::uint64_t outlier_seed = 0;
    double test_shift = 0.0;         // constant added to the standardized test split
};

nlohmann::json to_json(const DataOptions& opts);
DataOptions data_options_from_json(const nlohmann::json& j);

struct PreparedData {
    Splits splits;
    std::optional<Standardizer> standardizer;
    TimeFeaturizer featurizer{TimeKind::index, 1.0};
};

PreparedData prepare_data(const MultiSeries& series, const DataOptions& opts);

// All windows of a split, stacked along the batch axis.
struct WindowSet {
    Tensor lookback;       // (N, lookback, d_x)
    Tensor horizon;        // (N, horizon, d_x)
    Tensor lookback_time;  // (N, lookback, n_time_feats)
    Tensor horizon_time;   // (N, horizon, n_time_feats)
    std::vector<std::size_t> origins;

    std::size_t size() const { return origins.size(); }
    ForecastBatch batch(std::span<const std::size_t> rows) const;
    Tensor horizon_batch(std::span<const std::size_t> rows) const;
};

WindowSet make_window_set(const MultiSeries& series, const TimeFeaturizer& featurizer, std::size_t lookback,
                          std::size_t horizon, std::size_t stride);

// A trainable model: backbone definition plus both parameter groups.
struct Model {
    std::unique_ptr<Backbone> backbone;
    ParameterSet params;
    Objective objective{LossKind::mse};
};

Model make_model(const TrainConfig& cfg, std::size_t d_x, std::size_t n_time_feats);

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // multi-scale objective
    double val_mse = 0.0;   // final scale, drives early stopping
    std::optional<double> alpha;
    std::optional<double> c;
};

struct TrainResult {
    Model model;  // best-validation parameters
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
    double wall_clock = 0.0;
};

TrainResult train(const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& cfg);

struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> nll;
    std::optional<double> crps;
    std::vector<double> per_scale_mse;
    double wall_clock_train = 0.0;
    double wall_clock_eval = 0.0;
};

MetricsReport evaluate(Model& model, const WindowSet& set, const TrainConfig& cfg);

// Per-scale mean forecasts of one window of a set.
std::vector<Matrix> predict_window(Model& model, const WindowSet& set, std::size_t row, const TrainConfig& cfg);

// Checkpoint holding model and loss parameters plus the configuration needed
// to rebuild them.
void save_model(const std::filesystem::path& path, const Model& model, const TrainConfig& cfg,
                const nlohmann::json& extra = nlohmann::json::object());
struct LoadedModel {
    Model model;
    TrainConfig config;
    nlohmann::json meta;
};
LoadedModel load_model(const std::filesystem::path& path);

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& m);

}  // namespace scaleformer
