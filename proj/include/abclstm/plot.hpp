#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "abclstm/config.hpp"
#include "abclstm/corpus.hpp"
#include "abclstm/error.hpp"
#include "abclstm/trainer.hpp"

namespace abclstm {

/// Rows of a metrics.csv as written by `train`.
inline std::vector<EpochMetrics> parse_metrics_csv(std::string_view text) {
    const std::string norm = normalize_newlines(text);
    std::vector<EpochMetrics> rows;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError("metrics.csv line " + std::to_string(line_no) + ": " + why);
    };
    while (pos < norm.size()) {
        std::size_t end = norm.find('\n', pos);
        if (end == std::string::npos) end = norm.size();
        const std::string_view line = detail::trim(std::string_view(norm).substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.substr(0, 5) == "epoch") continue;
        std::vector<std::string_view> cols;
        std::size_t p = 0;
        while (true) {
            const std::size_t c = line.find(',', p);
            cols.push_back(detail::trim(line.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p)));
            if (c == std::string_view::npos) break;
            p = c + 1;
        }
        if (cols.size() < 3) throw fail("expected at least 3 columns, got " + std::to_string(cols.size()));
        EpochMetrics m;
        try {
            m.epoch = parse_number<std::uint32_t>("epoch", cols[0]);
            m.mean_loss = parse_number<double>("loss", cols[1]);
            m.accuracy = parse_number<double>("accuracy", cols[2]);
            if (cols.size() > 3) m.wall_time = parse_number<double>("wall_time_s", cols[3]);
        } catch (const ValueError& e) {
            throw fail(e.what());
        }
        if (!std::isfinite(m.mean_loss) || !std::isfinite(m.accuracy)) throw fail("non-finite value");
        rows.push_back(m);
    }
    if (rows.empty()) throw ParseError("metrics.csv has no data rows");
    return rows;
}

struct ChartSpec {
    std::string title;
    std::string y_label;
    double y_min = 0.0;
    double y_max = 1.0;
};

/// Smallest multiple of 0.5 that is >= v (at least 0.5).
inline double nice_ceiling(double v) {
    const double c = std::ceil(v * 2.0) / 2.0;
    return c < 0.5 ? 0.5 : c;
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr double kPlotWidth = 560.0;
inline constexpr double kPlotHeight = 320.0;
inline constexpr double kMarginLeft = 70.0;
inline constexpr double kMarginTop = 40.0;

/// Plot-area coordinates. y grows upward from the x axis; the SVG flips the
/// group so values and coordinates move in the same direction.
inline std::vector<Point> chart_points(const std::vector<double>& xs, const std::vector<double>& ys,
                                       const ChartSpec& spec) {
    if (xs.size() != ys.size()) throw ShapeError("chart: x and y lengths differ");
    double x0 = xs.empty() ? 0.0 : xs.front();
    double x1 = xs.empty() ? 1.0 : xs.back();
    if (x1 <= x0) x1 = x0 + 1.0;
    std::vector<Point> out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double fx = (xs[i] - x0) / (x1 - x0);
        const double fy = (ys[i] - spec.y_min) / (spec.y_max - spec.y_min);
        out.push_back({fx * kPlotWidth, fy * kPlotHeight});
    }
    return out;
}

inline std::string svg_line_chart(const std::vector<double>& xs, const std::vector<double>& ys, const ChartSpec& spec) {
    const auto pts = chart_points(xs, ys, spec);
    const double width = kMarginLeft + kPlotWidth + 30.0;
    const double height = kMarginTop + kPlotHeight + 60.0;
    const double axis_y = kMarginTop + kPlotHeight;
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  width, height, width, height);
    s += buf;
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">%s</text>\n",
                  kMarginLeft + kPlotWidth / 2, spec.title.c_str());
    s += buf;
    // y ticks every 0.5 for loss-sized ranges, 0.25 below that
    const double span = spec.y_max - spec.y_min;
    const double step = span > 1.0 ? 0.5 : 0.25;
    for (double v = spec.y_min; v <= spec.y_max + 1e-9; v += step) {
        const double y = axis_y - (v - spec.y_min) / span * kPlotHeight;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">%.2f</text>\n",
                      kMarginLeft, y, kMarginLeft + kPlotWidth, y, kMarginLeft - 6, y + 4, v);
        s += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  kMarginLeft, axis_y, kMarginLeft + kPlotWidth, axis_y, kMarginLeft, kMarginTop, kMarginLeft, axis_y);
    s += buf;
    if (!xs.empty()) {
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">%g</text>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">%g</text>\n",
                      kMarginLeft, axis_y + 16, xs.front(), kMarginLeft + kPlotWidth, axis_y + 16, xs.back());
        s += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">Epoch</text>\n"
                  "<text x=\"18\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
                  "transform=\"rotate(-90 18 %.1f)\">%s</text>\n",
                  kMarginLeft + kPlotWidth / 2, axis_y + 40, kMarginTop + kPlotHeight / 2, kMarginTop + kPlotHeight / 2,
                  spec.y_label.c_str());
    s += buf;
    std::snprintf(buf, sizeof buf, "<g transform=\"translate(%.1f %.1f) scale(1 -1)\">\n", kMarginLeft, axis_y);
    s += buf;
    s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", i ? " " : "", pts[i].x, pts[i].y);
        s += buf;
    }
    s += "\"/>\n</g>\n</svg>\n";
    return s;
}

struct MetricCharts {
    std::string loss_svg;
    std::string accuracy_svg;
    ChartSpec loss_spec;
    ChartSpec accuracy_spec;
};

inline MetricCharts metric_charts(const std::vector<EpochMetrics>& rows) {
    std::vector<double> xs, loss, acc;
    double max_loss = 0.0;
    for (const auto& r : rows) {
        xs.push_back(r.epoch);
        loss.push_back(r.mean_loss);
        acc.push_back(r.accuracy);
        max_loss = std::max(max_loss, r.mean_loss);
    }
    MetricCharts c;
    c.loss_spec = {"Training loss over time", "Loss", 0.0, nice_ceiling(max_loss)};
    c.accuracy_spec = {"Training accuracy over time", "Accuracy", 0.0, 1.0};
    c.loss_svg = svg_line_chart(xs, loss, c.loss_spec);
    c.accuracy_svg = svg_line_chart(xs, acc, c.accuracy_spec);
    return c;
}

/// Parses the `points` attribute of the first polyline in an SVG.
inline std::vector<Point> polyline_points(std::string_view svg) {
    const auto tag = svg.find("<polyline");
    if (tag == std::string_view::npos) throw FormatError("no polyline in svg");
    const auto attr = svg.find("points=\"", tag);
    if (attr == std::string_view::npos) throw FormatError("polyline has no points");
    const auto begin = attr + 8;
    const auto end = svg.find('"', begin);
    std::vector<Point> out;
    std::string_view list = svg.substr(begin, end - begin);
    std::size_t p = 0;
    while (p < list.size()) {
        std::size_t q = list.find(' ', p);
        if (q == std::string_view::npos) q = list.size();
        const auto pair = list.substr(p, q - p);
        const auto comma = pair.find(',');
        if (comma == std::string_view::npos) throw FormatError("bad polyline coordinate");
        out.push_back({parse_number<double>("x", pair.substr(0, comma)), parse_number<double>("y", pair.substr(comma + 1))});
        p = q + 1;
    }
    return out;
}

} // namespace abclstm
