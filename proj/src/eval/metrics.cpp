#include "emseg/eval/metrics.hpp"

#include <cmath>
#include <string>

namespace emseg::eval {

std::string_view target_name(Target t) {
    return t == Target::Whole ? "whole" : "recurrence";
}

Target parse_target(std::string_view name) {
    if (name == "whole") {
        return Target::Whole;
    }
    if (name == "recurrence") {
        return Target::Recurrence;
    }
    throw ContractError("unknown evaluation target '" + std::string(name) + "'");
}

Volume<std::uint8_t> EvalRegions::domain(Target t) const {
    Volume<std::uint8_t> out(negatives.extents);
    const auto& pos = target(t);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = (pos.data[i] || negatives.data[i]) ? 1 : 0;
    }
    return out;
}

EvalRegions make_eval_regions(const RegionPartition& partition,
                              const Volume<std::uint8_t>& recurrence) {
    const Extents& e = partition.extents();
    if (recurrence.extents != e) {
        throw StructuralError("make_eval_regions: recurrence mask extents differ from partition");
    }
    EvalRegions r;
    r.core = Volume<std::uint8_t>(e);
    r.recurrence = Volume<std::uint8_t>(e);
    r.whole = Volume<std::uint8_t>(e);
    r.negatives = Volume<std::uint8_t>(e);
    r.voxel_volume_mm3 = partition.voxel_volume_mm3();
    for (std::size_t i = 0; i < e.voxels(); ++i) {
        const Region region = partition.at(i);
        const bool recur = recurrence.data[i] != 0;
        if (recur && region != Region::Roi2) {
            throw StructuralError("make_eval_regions: recurrence voxel " + std::to_string(i) +
                                  " lies outside ROI2");
        }
        r.core.data[i] = region == Region::Roi1;
        r.recurrence.data[i] = recur;
        r.whole.data[i] = recur || region == Region::Roi1;
        r.negatives.data[i] = region == Region::Roi2 && !recur;
    }
    return r;
}

double dice(const Confusion& c) {
    const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) +
                         static_cast<double>(c.fn);
    return denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

double mcc(const Confusion& c) {
    const double tp = static_cast<double>(c.tp);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);
    const double tn = static_cast<double>(c.tn);
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) {
        return 0.0;
    }
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

Confusion confusion(const Volume<std::uint8_t>& seg, const EvalRegions& regions, Target t) {
    const auto& pos = regions.target(t);
    if (seg.extents != pos.extents) {
        throw StructuralError("confusion: segmentation extents differ from evaluation regions");
    }
    Confusion c;
    for (std::size_t i = 0; i < seg.size(); ++i) {
        const bool predicted = seg.data[i] != 0;
        if (pos.data[i]) {
            predicted ? ++c.tp : ++c.fn;
        } else if (regions.negatives.data[i]) {
            predicted ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

MetricsRecord metrics_from_confusion(const Confusion& c) {
    if (c.tp + c.fn == 0) {
        throw UndefinedMetricError("region_metrics: empty target region");
    }
    if (c.tn + c.fp == 0) {
        throw UndefinedMetricError("region_metrics: empty negative region");
    }
    MetricsRecord m;
    m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    m.youden = m.sensitivity + m.specificity - 1.0;
    m.mcc = mcc(c);
    m.dice = dice(c);
    return m;
}

MetricsRecord region_metrics(const Volume<std::uint8_t>& seg, const EvalRegions& regions,
                             Target t) {
    return metrics_from_confusion(confusion(seg, regions, t));
}

Burden tumor_burden(const Volume<std::uint8_t>& seg, const RegionPartition& partition) {
    if (seg.extents != partition.extents()) {
        throw StructuralError("tumor_burden: segmentation extents differ from partition");
    }
    for (double s : partition.spacing_mm) {
        if (!(s > 0.0)) {
            throw ContractError("tumor_burden: voxel spacing must be positive");
        }
    }
    std::uint64_t core = 0;
    std::uint64_t infiltrated = 0;
    for (std::size_t i = 0; i < seg.size(); ++i) {
        if (!seg.data[i]) {
            continue;
        }
        const Region r = partition.at(i);
        if (r == Region::Roi1) {
            ++core;
        } else if (r == Region::Roi2) {
            ++infiltrated;
        }
    }
    const double cm3 = partition.voxel_volume_mm3() / 1000.0;
    return {static_cast<double>(core) * cm3, static_cast<double>(infiltrated) * cm3};
}

} // namespace emseg::eval
