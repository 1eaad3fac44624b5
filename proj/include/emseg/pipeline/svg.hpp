#pragma once

#include <string>
#include <vector>

namespace emseg::pipeline {

/// Minimal line and scatter chart rendered as standalone SVG text.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string x_label, std::string y_label);

    void add_line(std::vector<double> xs, std::vector<double> ys, std::string label);
    void add_points(std::vector<double> xs, std::vector<double> ys, std::string label);
    /// Fixes an axis range instead of fitting it to the data.
    void set_x_range(double lo, double hi);
    void set_y_range(double lo, double hi);

    /// Throws ContractError if a series has mismatched lengths.
    std::string render() const;

private:
    struct Series {
        std::vector<double> xs;
        std::vector<double> ys;
        std::string label;
        bool points = false;
    };

    std::string title_;
    std::string x_label_;
    std::string y_label_;
    std::vector<Series> series_;
    bool fixed_x_ = false;
    bool fixed_y_ = false;
    double x_lo_ = 0.0;
    double x_hi_ = 1.0;
    double y_lo_ = 0.0;
    double y_hi_ = 1.0;
};

std::string escape_xml(const std::string& text);

} // namespace emseg::pipeline
