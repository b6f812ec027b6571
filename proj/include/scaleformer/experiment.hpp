#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scaleformer/harness.hpp"
#include "scaleformer/stats.hpp"

namespace scaleformer {

// Budget knobs shared by every cell of a preset.
struct ExperimentScale {
    std::size_t series_length = 10000;
    std::size_t train_stride = 16;
    std::size_t eval_stride = 16;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double lr_model = 1e-3;
};

struct ExperimentOptions {
    std::uint64_t seed = 0;
    std::size_t n_seeds = 5;
    ExperimentScale scale;
    // Restricts the run to these cells (all when empty).
    std::vector<std::string> only_cells;
    // Progress messages (cell, replicate); not part of any output file.
    std::function<void(const std::string&)> progress;
};

struct Cell {
    std::string name;
    TrainConfig train;
    DataOptions data;
};

// t-test of cell `a` against cell `b` on test MSE.
struct Comparison {
    std::string a;
    std::string b;
};

struct Preset {
    std::string name;
    std::vector<Cell> cells;
    std::vector<Comparison> comparisons;
};

std::vector<std::string> preset_names();
Preset make_preset(const std::string& name, const ExperimentScale& scale);

struct SeedResult {
    std::uint64_t seed = 0;
    MetricsReport metrics;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::optional<double> alpha;
    std::optional<double> c;
};

struct CellResult {
    std::string name;
    std::vector<SeedResult> seeds;

    std::vector<double> mse() const;
    std::vector<double> mae() const;
};

struct ComparisonResult {
    Comparison pair;
    TTestResult mse;
    TTestResult mae;
};

struct ExperimentResult {
    std::string preset;
    std::vector<CellResult> cells;
    std::vector<ComparisonResult> comparisons;

    const CellResult& cell(const std::string& name) const;
};

ExperimentResult run_experiment(const std::string& preset, const ExperimentOptions& options);

// summary.csv (one row per cell) and seeds.csv (one row per cell and seed).
// Contents depend only on the preset, options and seed.
void write_experiment_csv(const std::filesystem::path& dir, const ExperimentResult& result);

}  // namespace scaleformer
