#include "scaleformer/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "scaleformer/error.hpp"

namespace scaleformer {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<PlotSeries>& series, int width, int height) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ShapeError("plot series '" + s.label + "' has mismatched x and y");
        for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
        for (double v : s.y) {
            if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
        }
    }
    if (!(x1 > x0)) x0 -= 1, x1 += 1;
    if (!(y1 > y0)) y0 -= 1, y1 += 1;

    const double left = 50, right = 150, top = 30, bottom = 30;
    const double pw = width - left - right;
    const double ph = height - top - bottom;
    const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    const auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (const double y : {y0, y1}) {
        svg << "<text x=\"4\" y=\"" << num(py(y) + 4) << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(y)
            << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* colour = kPalette[i % std::size(kPalette)];
        svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.y[k])) continue;
            svg << num(px(s.x[k])) << ',' << num(py(s.y[k])) << ' ';
        }
        svg << "\"/>\n";
        const double ly = top + 14.0 * static_cast<double>(i + 1);
        svg << "<line x1=\"" << num(left + pw + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(left + pw + 30)
            << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << num(left + pw + 35) << "\" y=\"" << num(ly) << "\" font-family=\"sans-serif\" "
            << "font-size=\"11\">" << escape(s.label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_svg(const std::filesystem::path& path, const std::string& svg) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << svg;
}

std::vector<PlotSeries> forecast_series(const Matrix& lookback, const Matrix& horizon,
                                        const std::vector<Matrix>& per_scale, const std::vector<std::size_t>& factors,
                                        std::size_t column) {
    if (per_scale.size() != factors.size()) throw ShapeError("one pooling factor per scale is required");
    if (column >= horizon.cols()) throw ShapeError("plot column out of range");
    const double L = static_cast<double>(lookback.rows());
    std::vector<PlotSeries> out;
    PlotSeries past{"lookback", {}, {}};
    for (std::size_t t = 0; t < lookback.rows(); ++t) {
        past.x.push_back(static_cast<double>(t));
        past.y.push_back(lookback(t, column));
    }
    out.push_back(std::move(past));
    PlotSeries truth{"truth", {}, {}};
    for (std::size_t t = 0; t < horizon.rows(); ++t) {
        truth.x.push_back(L + static_cast<double>(t));
        truth.y.push_back(horizon(t, column));
    }
    out.push_back(std::move(truth));
    for (std::size_t i = 0; i < per_scale.size(); ++i) {
        const double f = static_cast<double>(factors[i]);
        // The pooled grid is padded on the left when the horizon is not a multiple of f.
        const double pad = static_cast<double>(per_scale[i].rows()) * f - static_cast<double>(horizon.rows());
        PlotSeries s{"scale " + std::to_string(i) + " (s=" + std::to_string(factors[i]) + ")", {}, {}};
        for (std::size_t t = 0; t < per_scale[i].rows(); ++t) {
            s.x.push_back(L - pad + (static_cast<double>(t) + 0.5) * f - 0.5);
            s.y.push_back(per_scale[i](t, column));
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_series_csv(const std::filesystem::path& path, const std::vector<PlotSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(10);
    out << "series,time,value\n";
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) out << '"' << s.label << "\"," << s.x[k] << ',' << s.y[k] << '\n';
}

}  // namespace scaleformer
