#pragma once

#include <cstdint>
#include <string_view>

#include "emseg/errors.hpp"
#include "emseg/volume.hpp"

namespace emseg::eval {

/// A metric whose denominator is empty (single-class domain, empty target, zero variance).
class UndefinedMetricError : public DataError {
public:
    using DataError::DataError;
};

enum class Target { Whole, Recurrence };

std::string_view target_name(Target t);
Target parse_target(std::string_view name);

/// Evaluation sets derived from a partition and a recurrence mask. Negatives are
/// the non-recurrent part of ROI2 for both targets.
struct EvalRegions {
    Volume<std::uint8_t> core;
    Volume<std::uint8_t> recurrence;
    Volume<std::uint8_t> whole;
    Volume<std::uint8_t> negatives;
    double voxel_volume_mm3 = 1.0;

    const Volume<std::uint8_t>& target(Target t) const {
        return t == Target::Whole ? whole : recurrence;
    }
    /// target(t) united with the negatives.
    Volume<std::uint8_t> domain(Target t) const;
};

/// Fails with StructuralError when the recurrence mask leaves ROI2 or extents differ.
EvalRegions make_eval_regions(const RegionPartition& partition,
                              const Volume<std::uint8_t>& recurrence);

struct Confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;
};

/// Dice of the predicted and true positive sets; 1 when both are empty.
double dice(const Confusion& c);
/// Matthews correlation; 0 when any marginal is empty.
double mcc(const Confusion& c);

struct MetricsRecord {
    double auc = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double youden = 0.0;
    double mcc = 0.0;
    double dice = 0.0;
    double tau = 0.0;
    double core_burden_cm3 = 0.0;
    double infiltrated_burden_cm3 = 0.0;
};

Confusion confusion(const Volume<std::uint8_t>& seg, const EvalRegions& regions, Target t);

/// Fills sensitivity, specificity, youden, mcc and dice. The remaining fields
/// are left for the caller.
MetricsRecord region_metrics(const Volume<std::uint8_t>& seg, const EvalRegions& regions,
                             Target t);

/// Same fields from counts already accumulated (e.g. pooled over cases).
MetricsRecord metrics_from_confusion(const Confusion& c);

struct Burden {
    double core_cm3 = 0.0;
    double infiltrated_cm3 = 0.0;
};

Burden tumor_burden(const Volume<std::uint8_t>& seg, const RegionPartition& partition);

} // namespace emseg::eval
