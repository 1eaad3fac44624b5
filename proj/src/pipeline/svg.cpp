#include "emseg/pipeline/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "emseg/errors.hpp"

namespace emseg::pipeline {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;
constexpr int kTicks = 5;
constexpr std::array<const char*, 6> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::pair<double, double> padded(double lo, double hi) {
    if (!(lo < hi)) {
        const double pad = std::max(1.0, std::abs(lo)) * 0.05;
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

} // namespace

std::string escape_xml(const std::string& text) {
    std::string out;
    for (const char ch : text) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgPlot::add_line(std::vector<double> xs, std::vector<double> ys, std::string label) {
    series_.push_back({std::move(xs), std::move(ys), std::move(label), false});
}

void SvgPlot::add_points(std::vector<double> xs, std::vector<double> ys, std::string label) {
    series_.push_back({std::move(xs), std::move(ys), std::move(label), true});
}

void SvgPlot::set_x_range(double lo, double hi) {
    fixed_x_ = true;
    x_lo_ = lo;
    x_hi_ = hi;
}

void SvgPlot::set_y_range(double lo, double hi) {
    fixed_y_ = true;
    y_lo_ = lo;
    y_hi_ = hi;
}

std::string SvgPlot::render() const {
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin;
    double ymin = xmin;
    double ymax = -xmin;
    for (const auto& s : series_) {
        if (s.xs.size() != s.ys.size()) {
            throw ContractError("plot series '" + s.label + "' has mismatched coordinate counts");
        }
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) {
                continue;
            }
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, s.ys[i]);
            ymax = std::max(ymax, s.ys[i]);
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    auto [x_lo, x_hi] = fixed_x_ ? std::pair{x_lo_, x_hi_} : padded(xmin, xmax);
    auto [y_lo, y_hi] = fixed_y_ ? std::pair{y_lo_, y_hi_} : padded(ymin, ymax);

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return kTop + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h; };

    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n", kWidth,
        kHeight, kWidth, kHeight);
    out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
    out += fmt::format("<text x=\"{:.1f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       kLeft + plot_w / 2, escape_xml(title_));
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
                       "stroke=\"black\"/>\n",
                       kLeft, kTop, plot_w, plot_h);
    for (int k = 0; k <= kTicks; ++k) {
        const double xv = x_lo + (x_hi - x_lo) * k / kTicks;
        const double yv = y_lo + (y_hi - y_lo) * k / kTicks;
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                           "text-anchor=\"middle\">{:.3g}</text>\n",
                           px(xv), kTop + plot_h + 16, xv);
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                           "text-anchor=\"end\">{:.3g}</text>\n",
                           kLeft - 6, py(yv) + 4, yv);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"13\" "
                       "text-anchor=\"middle\">{}</text>\n",
                       kLeft + plot_w / 2, kHeight - 18, escape_xml(x_label_));
    out += fmt::format("<text x=\"18\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"13\" "
                       "text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1f})\">{}</text>\n",
                       kTop + plot_h / 2, kTop + plot_h / 2, escape_xml(y_label_));

    for (std::size_t s = 0; s < series_.size(); ++s) {
        const auto& series = series_[s];
        const char* color = kColors[s % kColors.size()];
        if (series.points) {
            for (std::size_t i = 0; i < series.xs.size(); ++i) {
                if (std::isfinite(series.xs[i]) && std::isfinite(series.ys[i])) {
                    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                                       px(series.xs[i]), py(series.ys[i]), color);
                }
            }
        } else {
            out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"", color);
            for (std::size_t i = 0; i < series.xs.size(); ++i) {
                if (std::isfinite(series.xs[i]) && std::isfinite(series.ys[i])) {
                    out += fmt::format("{:.2f},{:.2f} ", px(series.xs[i]), py(series.ys[i]));
                }
            }
            out += "\"/>\n";
        }
        const double ly = kTop + 14 + 18 * static_cast<double>(s);
        out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n",
                           kWidth - kRight + 12, ly - 4, color);
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                           kWidth - kRight + 30, ly, escape_xml(series.label));
    }
    out += "</svg>\n";
    return out;
}

} // namespace emseg::pipeline
