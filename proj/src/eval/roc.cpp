#include "emseg/eval/roc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "emseg/errors.hpp"
#include "emseg/eval/metrics.hpp"

namespace emseg::eval {
namespace {

// Distinct Youden values differ by at least 1/(P*N), far above this for any raster size.
constexpr double kYoudenTie = 1e-12;

double between(double lo, double hi) {
    const double mid = lo + (hi - lo) * 0.5;
    return (mid > lo && mid < hi) ? mid : lo;
}

} // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw StructuralError("roc_curve: scores and labels differ in length");
    }
    RocCurve curve;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw NumericError("roc_curve: non-finite score at sample " + std::to_string(i));
        }
        if (labels[i]) {
            ++curve.positives;
        } else {
            ++curve.negatives;
        }
    }
    if (curve.positives == 0 || curve.negatives == 0) {
        throw UndefinedMetricError("roc_curve: evaluation domain holds a single class");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const double p = static_cast<double>(curve.positives);
    const double n = static_cast<double>(curve.negatives);
    curve.points.push_back({scores[order.front()], 0.0, 1.0});

    // Twice the Mann-Whitney count (ties earn one half), kept in integers.
    std::uint64_t doubled_area = 0;
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        std::uint64_t group_tp = 0;
        std::uint64_t group_fp = 0;
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]]) {
                ++group_tp;
            } else {
                ++group_fp;
            }
            ++i;
        }
        doubled_area += group_fp * (2 * tp + group_tp);
        tp += group_tp;
        fp += group_fp;
        const double threshold = i < order.size()
                                     ? between(scores[order[i]], s)
                                     : std::nextafter(s, -std::numeric_limits<double>::infinity());
        curve.points.push_back({threshold, static_cast<double>(tp) / p,
                                static_cast<double>(curve.negatives - fp) / n});
    }
    curve.auc = static_cast<double>(doubled_area) / (2.0 * p * n);
    return curve;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positives,
                 std::span<const std::uint8_t> domain) {
    if (scores.size() != positives.size() || scores.size() != domain.size()) {
        throw StructuralError("roc_auc: scores, positives and domain differ in length");
    }
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (domain[i]) {
            s.push_back(scores[i]);
            l.push_back(positives[i] ? 1 : 0);
        }
    }
    if (s.empty()) {
        throw UndefinedMetricError("roc_auc: empty evaluation domain");
    }
    return roc_curve(s, l);
}

YoudenChoice youden_threshold(std::span<const RocPoint> points) {
    if (points.empty()) {
        throw ContractError("youden_threshold: no operating points");
    }
    YoudenChoice best;
    bool have = false;
    for (const RocPoint& pt : points) {
        const double j = pt.sensitivity + pt.specificity - 1.0;
        const bool tie = have && std::fabs(j - best.youden) <= kYoudenTie;
        if (!have || (!tie && j > best.youden) || (tie && pt.threshold < best.threshold)) {
            best = {pt.threshold, j, pt.sensitivity, pt.specificity};
            have = true;
        }
    }
    return best;
}

} // namespace emseg::eval
