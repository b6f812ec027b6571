#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scaleformer/tensor.hpp"

namespace scaleformer {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal static SVG line chart with a legend.
std::string svg_line_chart(const std::string& title, const std::vector<PlotSeries>& series, int width = 800,
                           int height = 400);
void write_svg(const std::filesystem::path& path, const std::string& svg);

// Series for one variable of a forecast window: the lookback, the true
// horizon, and every scale's prediction placed at the centres of its pooled
// segments. Rows of `per_scale` are aligned with the horizon's start.
std::vector<PlotSeries> forecast_series(const Matrix& lookback, const Matrix& horizon,
                                        const std::vector<Matrix>& per_scale, const std::vector<std::size_t>& factors,
                                        std::size_t column);

// Long-format CSV: series,time,value.
void write_series_csv(const std::filesystem::path& path, const std::vector<PlotSeries>& series);

}  // namespace scaleformer
