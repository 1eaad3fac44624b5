#include "emseg/seg/em.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emseg/errors.hpp"

namespace emseg::seg {

std::string_view dissimilarity_name(Dissimilarity) { return "absolute-difference"; }

Dissimilarity parse_dissimilarity(std::string_view name) {
    if (name == "absolute-difference") {
        return Dissimilarity::AbsoluteDifference;
    }
    throw ContractError("unknown dissimilarity '" + std::string(name) + "'");
}

double dissimilarity(Dissimilarity, double a, double b) { return std::fabs(a - b); }

std::size_t PseudoLabelField::accepted() const {
    return static_cast<std::size_t>(std::count(gate.begin(), gate.end(), std::uint8_t{1}));
}

bool gate_accepts(Dissimilarity g, double p_prior, double p_model, double delta) {
    return dissimilarity(g, p_prior, p_model) <= delta;
}

PseudoLabelField e_step(const prior::PriorMap& prior, std::span<const float> prediction, int epoch,
                        Dissimilarity g) {
    if (prediction.size() != prior.size() || prior.uncertainty.size() != prior.size()) {
        throw StructuralError("e_step: prediction has " + std::to_string(prediction.size()) +
                              " ROI2 voxels, prior has " + std::to_string(prior.size()));
    }
    if (epoch < 1) {
        throw ContractError("e_step: epochs are 1-based");
    }
    PseudoLabelField field;
    field.probability = prior.probability;
    field.gate.assign(prior.size(), 0);
    if (epoch == 1) {
        return field;
    }
    for (std::size_t i = 0; i < prior.size(); ++i) {
        if (gate_accepts(g, prior.probability[i], prediction[i], prior.uncertainty[i])) {
            field.gate[i] = 1;
            field.probability[i] = prediction[i];
        }
    }
    return field;
}

template <typename T>
LossReport composite_loss_terms(std::span<const T> prediction, std::span<const std::uint8_t> region,
                                std::span<const float> target, double lambda, std::span<T> grad,
                                GradientSpace space) {
    if (region.size() != prediction.size() || target.size() != prediction.size() ||
        (!grad.empty() && grad.size() != prediction.size())) {
        throw StructuralError("composite_loss: prediction, regions and targets are not congruent");
    }
    std::size_t n_sup = 0;
    std::size_t n_reg = 0;
    for (std::uint8_t r : region) {
        const Region reg = static_cast<Region>(r);
        n_sup += is_observed(reg);
        n_reg += reg == Region::Roi2;
    }
    if (n_sup == 0) {
        throw ContractError("composite_loss: no ROI1 or ROI3 voxels");
    }
    constexpr double eps = kProbabilityClamp;
    double sum_sup = 0.0;
    double sum_reg = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const Region reg = static_cast<Region>(region[i]);
        if (reg == Region::Background) {
            if (!grad.empty()) {
                grad[i] = T{0};
            }
            continue;
        }
        const double y = reg == Region::Roi1 ? 1.0 : (reg == Region::Roi3 ? 0.0 : target[i]);
        const double p = static_cast<double>(prediction[i]);
        const bool clamped = p < eps || p > 1.0 - eps;
        const double pc = std::clamp(p, eps, 1.0 - eps);
        const double ce = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
        double d = 0.0;
        if (space == GradientSpace::Logit) {
            d = p - y;
        } else if (!clamped) {
            d = -y / pc + (1.0 - y) / (1.0 - pc);
        }
        if (reg == Region::Roi2) {
            sum_reg += ce;
            if (!grad.empty()) {
                grad[i] = static_cast<T>(lambda * d / static_cast<double>(n_reg));
            }
        } else {
            sum_sup += ce;
            if (!grad.empty()) {
                grad[i] = static_cast<T>(d / static_cast<double>(n_sup));
            }
        }
    }
    LossReport report;
    report.j_sup = sum_sup / static_cast<double>(n_sup);
    report.j_reg = n_reg ? sum_reg / static_cast<double>(n_reg) : 0.0;
    report.j_total = report.j_sup + lambda * report.j_reg;
    return report;
}

template LossReport composite_loss_terms<float>(std::span<const float>, std::span<const std::uint8_t>,
                                                std::span<const float>, double, std::span<float>, GradientSpace);
template LossReport composite_loss_terms<double>(std::span<const double>, std::span<const std::uint8_t>,
                                                 std::span<const float>, double, std::span<double>, GradientSpace);

std::vector<float> dense_targets(const RegionPartition& partition, const prior::PriorMap& roi2,
                                 const PseudoLabelField& pseudo) {
    if (roi2.extents != partition.extents() || pseudo.size() != roi2.size()) {
        throw StructuralError("dense_targets: prior map and pseudo-labels do not fit the partition");
    }
    std::vector<float> target(partition.labels.size(), 0.0f);
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (partition.at(i) == Region::Roi1) {
            target[i] = 1.0f;
        }
    }
    for (std::size_t k = 0; k < roi2.size(); ++k) {
        target[roi2.voxels[k]] = pseudo.probability[k];
    }
    return target;
}

LossReport composite_loss(std::span<const float> prediction, const RegionPartition& partition,
                          const prior::PriorMap& roi2, const PseudoLabelField& pseudo, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ContractError("composite_loss: lambda must lie in [0, 1]");
    }
    const std::vector<float> target = dense_targets(partition, roi2, pseudo);
    return composite_loss_terms<float>(prediction, partition.labels.data, target, lambda);
}

} // namespace emseg::seg
