#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emseg::eval {

/// One operating point. A voxel is predicted positive iff its score > threshold.
struct RocPoint {
    double threshold = 0.0;
    double sensitivity = 0.0;
    double specificity = 1.0;
};

/// Points run from the empty prediction (threshold = max score) to the full
/// prediction (threshold just below the min score), one per distinct score.
struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

/// `labels` holds 0/1 per sample; every sample belongs to the evaluation domain.
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Full-raster form: only samples with domain[i] != 0 take part.
RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positives,
                 std::span<const std::uint8_t> domain);

struct YoudenChoice {
    double threshold = 0.0;
    double youden = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

/// Maximizes sensitivity + specificity - 1; ties go to the smaller threshold.
YoudenChoice youden_threshold(std::span<const RocPoint> points);

} // namespace emseg::eval
