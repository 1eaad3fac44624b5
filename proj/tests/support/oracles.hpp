#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "emseg/eval/metrics.hpp"

namespace emseg::oracle {

/// Mann-Whitney pair statistic: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
inline double pair_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!l[i]) {
            continue;
        }
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[j]) {
                continue;
            }
            pairs += 1.0;
            if (s[i] > s[j]) {
                wins += 1.0;
            } else if (s[i] == s[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / pairs;
}

struct SweepResult {
    double youden = -2.0;
    std::vector<std::uint8_t> prediction;
};

/// Sweeps "score >= c" over every distinct score c, plus the empty prediction.
/// J is compared exactly through integer counts; ties go to the smallest cut,
/// i.e. the largest predicted set.
inline SweepResult youden_sweep(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
    const std::set<double> cuts(s.begin(), s.end());
    long long p = 0;
    long long n = 0;
    for (auto v : l) {
        (v ? p : n) += 1;
    }
    SweepResult best;
    long long best_key = -1;
    auto consider = [&](auto predicate) {
        long long tp = 0;
        long long tn = 0;
        std::vector<std::uint8_t> pred(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            pred[i] = predicate(s[i]);
            tp += pred[i] && l[i];
            tn += !pred[i] && !l[i];
        }
        const long long key = tp * n + tn * p;
        if (key >= best_key) {
            best_key = key;
            best = {static_cast<double>(tp) / static_cast<double>(p) + static_cast<double>(tn) / static_cast<double>(n) - 1.0,
                    pred};
        }
    };
    consider([](double) { return false; });
    for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
        const double c = *it;
        consider([c](double v) { return v >= c; });
    }
    return best;
}

/// Pearson correlation of two 0/1 vectors, NaN when either is constant.
inline double indicator_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0;
    double mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0;
    double saa = 0;
    double sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) {
        return std::nan("");
    }
    return sab / std::sqrt(saa * sbb);
}

struct MaskOracle {
    bool defined = false;
    double sensitivity = 0;
    double specificity = 0;
    double dice = 0;
    /// NaN when the segmentation is constant over the domain.
    double mcc = 0;
};

/// Rates by set arithmetic and MCC as the correlation of the two indicator
/// vectors over the evaluation domain (target plus negatives).
inline MaskOracle mask_oracle(const Volume<std::uint8_t>& seg, const eval::EvalRegions& r, eval::Target t) {
    std::vector<double> a;
    std::vector<double> b;
    double inter = 0;
    double size_a = 0;
    double size_b = 0;
    double neg = 0;
    double neg_rejected = 0;
    for (std::size_t i = 0; i < seg.size(); ++i) {
        const bool truth = r.target(t).data[i];
        if (!truth && !r.negatives.data[i]) {
            continue;
        }
        const bool predicted = seg.data[i] != 0;
        a.push_back(truth);
        b.push_back(predicted);
        inter += truth && predicted;
        size_a += truth;
        size_b += predicted;
        if (!truth) {
            neg += 1;
            neg_rejected += !predicted;
        }
    }
    MaskOracle o;
    if (size_a == 0 || neg == 0) {
        return o;
    }
    o.defined = true;
    o.sensitivity = inter / size_a;
    o.specificity = neg_rejected / neg;
    o.dice = 2 * inter / (size_a + size_b);
    o.mcc = indicator_correlation(a, b);
    return o;
}

} // namespace emseg::oracle
