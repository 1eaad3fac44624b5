#include "emseg/phantom/histogram_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace emseg::phantom {

namespace {

struct Range {
    double lo = 0;
    double hi = 0;
    bool constant() const { return !(hi > lo); }
};

Range range_of(std::span<const float> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return {*lo, *hi};
}

std::size_t bin_of(double v, const Range& r, int bins) {
    if (r.constant()) return 0;
    const double t = (v - r.lo) / (r.hi - r.lo) * bins;
    return static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(bins - 1)));
}

/// Probability mass per bin over `r`.
std::vector<double> histogram(std::span<const float> v, const Range& r, int bins) {
    std::vector<double> h(bins, 0.0);
    for (float x : v) h[bin_of(x, r, bins)] += 1.0;
    for (auto& m : h) m /= static_cast<double>(v.size());
    return h;
}

/// Piecewise-linear CDF built from a histogram over `r`.
class HistogramCdf {
public:
    HistogramCdf(std::span<const float> v, Range r, int bins) : range_(r), bins_(bins), mass_(histogram(v, r, bins)) {
        edge_.assign(bins + 1, 0.0);
        for (int k = 0; k < bins; ++k) edge_[k + 1] = edge_[k] + mass_[k];
        edge_.back() = 1.0;
    }

    double cdf(double v) const {
        const std::size_t k = bin_of(v, range_, bins_);
        const double width = (range_.hi - range_.lo) / bins_;
        const double within = std::clamp((v - (range_.lo + k * width)) / width, 0.0, 1.0);
        return edge_[k] + mass_[k] * within;
    }

    double inverse(double q) const {
        q = std::clamp(q, 0.0, 1.0);
        // First bin whose upper CDF edge reaches q, skipping empty bins.
        const auto it = std::lower_bound(edge_.begin() + 1, edge_.end(), q);
        std::size_t k = static_cast<std::size_t>(std::distance(edge_.begin() + 1, it));
        k = std::min<std::size_t>(k, bins_ - 1);
        while (k + 1 < static_cast<std::size_t>(bins_) && mass_[k] == 0.0) ++k;
        const double width = (range_.hi - range_.lo) / bins_;
        const double within = mass_[k] > 0 ? std::clamp((q - edge_[k]) / mass_[k], 0.0, 1.0) : 0.0;
        return range_.lo + (k + within) * width;
    }

private:
    Range range_;
    int bins_;
    std::vector<double> mass_;
    std::vector<double> edge_;
};

double median_of(std::vector<float> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

} // namespace

std::vector<float> match_to_reference(std::span<const float> values, std::span<const float> reference, int bins) {
    if (bins < 32) throw ContractError("histogram matching needs at least 32 bins");
    if (values.empty() || reference.empty()) return {values.begin(), values.end()};
    const Range own = range_of(values);
    if (own.constant()) {
        return std::vector<float>(values.size(), static_cast<float>(median_of({reference.begin(), reference.end()})));
    }
    const HistogramCdf source(values, own, bins);
    const HistogramCdf target(reference, Range{0.0, 1.0}, bins);
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = static_cast<float>(std::clamp(target.inverse(source.cdf(values[i])), 0.0, 1.0));
    }
    return out;
}

HistogramMatchResult histogram_match(const std::vector<PhantomCase>& cases, int bins) {
    if (cases.size() < 2) throw ContractError("histogram matching needs at least two cases");
    if (bins < 32) throw ContractError("histogram matching needs at least 32 bins");
    const std::size_t n_channels = cases.front().channels.size();
    for (const auto& c : cases) {
        if (c.channels.size() != n_channels) throw StructuralError("cases disagree on channel count");
    }

    HistogramMatchResult result;
    result.cases = cases;
    result.reference_case.assign(n_channels, std::numeric_limits<std::size_t>::max());

    std::vector<std::vector<std::size_t>> brain(cases.size());
    for (std::size_t c = 0; c < cases.size(); ++c) {
        const auto& p = cases[c].partition;
        for (std::size_t i = 0; i < p.labels.size(); ++i) {
            if (p.at(i) != Region::Background) brain[c].push_back(i);
        }
        if (brain[c].empty()) throw DataError("case " + cases[c].id + " has no brain voxels");
    }

    for (std::size_t ch = 0; ch < n_channels; ++ch) {
        if (cases.front().channels[ch].role == ChannelRole::Metabolite) continue;
        std::vector<std::vector<float>> values(cases.size());
        Range global{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (std::size_t c = 0; c < cases.size(); ++c) {
            const auto& src = cases[c].channels[ch].values.data;
            values[c].reserve(brain[c].size());
            for (std::size_t i : brain[c]) values[c].push_back(src[i]);
            const Range r = range_of(values[c]);
            global.lo = std::min(global.lo, r.lo);
            global.hi = std::max(global.hi, r.hi);
        }

        std::vector<std::vector<double>> hists(cases.size());
        std::vector<double> mean(bins, 0.0);
        for (std::size_t c = 0; c < cases.size(); ++c) {
            hists[c] = histogram(values[c], global, bins);
            for (int k = 0; k < bins; ++k) mean[k] += hists[c][k] / static_cast<double>(cases.size());
        }
        std::size_t ref = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cases.size(); ++c) {
            double d = 0.0;
            for (int k = 0; k < bins; ++k) d += (hists[c][k] - mean[k]) * (hists[c][k] - mean[k]);
            if (d < best) {
                best = d;
                ref = c;
            }
        }
        result.reference_case[ch] = ref;

        const Range ref_range = range_of(values[ref]);
        std::vector<float> reference(values[ref].size());
        for (std::size_t i = 0; i < reference.size(); ++i) {
            reference[i] = ref_range.constant()
                               ? 0.0f
                               : static_cast<float>((values[ref][i] - ref_range.lo) / (ref_range.hi - ref_range.lo));
        }

        for (std::size_t c = 0; c < cases.size(); ++c) {
            std::vector<float> mapped;
            if (c == ref) {
                mapped = reference;
            } else {
                if (range_of(values[c]).constant()) result.constant_channels.push_back({c, ch});
                mapped = match_to_reference(values[c], reference, bins);
            }
            auto& dst = result.cases[c].channels[ch].values.data;
            std::fill(dst.begin(), dst.end(), 0.0f);
            for (std::size_t j = 0; j < brain[c].size(); ++j) dst[brain[c][j]] = mapped[j];
        }
    }
    return result;
}

} // namespace emseg::phantom
