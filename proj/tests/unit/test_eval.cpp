#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "emseg/eval/metrics.hpp"
#include "emseg/eval/roc.hpp"
#include "emseg/eval/stats.hpp"
#include "support/oracles.hpp"

using namespace emseg;
using namespace emseg::eval;

namespace {

Volume<std::uint8_t> random_mask(Extents e, std::mt19937_64& gen, double density) {
    std::bernoulli_distribution b(density);
    Volume<std::uint8_t> v(e);
    for (auto& x : v.data) {
        x = b(gen);
    }
    return v;
}

RegionPartition strip_partition() {
    // x = 0..3 ROI1, 4..11 ROI2, 12..15 ROI3, single row.
    RegionPartition part;
    part.labels = Volume<std::uint8_t>({16, 1, 1});
    for (int x = 0; x < 16; ++x) {
        part.labels(x, 0, 0) = x < 4 ? 1 : (x < 12 ? 2 : 3);
    }
    return part;
}

} // namespace

TEST(Roc, PerfectRankingGivesUnitArea) {
    std::vector<double> s{0, 1, 0, 1, 1};
    std::vector<std::uint8_t> l{0, 1, 0, 1, 1};
    EXPECT_DOUBLE_EQ(roc_curve(s, l).auc, 1.0);
}

TEST(Roc, AllEqualScoresGiveHalf) {
    std::vector<double> s(6, 0.3);
    std::vector<std::uint8_t> l{0, 1, 0, 1, 1, 0};
    const RocCurve c = roc_curve(s, l);
    EXPECT_DOUBLE_EQ(c.auc, 0.5);
    const YoudenChoice y = youden_threshold(c.points);
    EXPECT_DOUBLE_EQ(y.youden, 0.0);
}

TEST(Roc, WorkedExample) {
    std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    std::vector<std::uint8_t> l{0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(roc_curve(s, l).auc, 0.75);
    EXPECT_DOUBLE_EQ(oracle::pair_auc(s, l), 0.75);
}

TEST(Roc, SingleClassIsUndefined) {
    std::vector<double> s{0.1, 0.2};
    std::vector<std::uint8_t> l{1, 1};
    EXPECT_THROW(roc_curve(s, l), UndefinedMetricError);
}

TEST(Roc, DomainMaskSelectsSamples) {
    std::vector<double> s{0.9, 0.1, 0.4, 0.35, 0.8, 0.0};
    std::vector<std::uint8_t> pos{1, 0, 0, 1, 1, 1};
    std::vector<std::uint8_t> dom{0, 1, 1, 1, 1, 0};
    EXPECT_DOUBLE_EQ(roc_auc(s, pos, dom).auc, 0.75);
}

TEST(Roc, SeparableYoudenSitsBetweenClasses) {
    std::vector<double> s{0.1, 0.2, 0.3, 0.7, 0.8};
    std::vector<std::uint8_t> l{0, 0, 0, 1, 1};
    const YoudenChoice y = youden_threshold(roc_curve(s, l).points);
    EXPECT_DOUBLE_EQ(y.youden, 1.0);
    EXPECT_GT(y.threshold, 0.3);
    EXPECT_LT(y.threshold, 0.7);
}

TEST(Roc, AreaMatchesPairStatisticOnRandomInstances) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + gen() % 999;
        std::vector<double> s(n);
        std::vector<std::uint8_t> l(n);
        const int levels = 1 + static_cast<int>(gen() % 40);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(gen() % levels) / levels;
            l[i] = gen() % 3 == 0;
        }
        l[0] = 0;
        l[1] = 1;
        EXPECT_NEAR(roc_curve(s, l).auc, oracle::pair_auc(s, l), 1e-9);
    }
}

TEST(Roc, YoudenMatchesBruteForceSweep) {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + gen() % 200;
        std::vector<double> s(n);
        std::vector<std::uint8_t> l(n);
        const int levels = 1 + static_cast<int>(gen() % 30);
        for (std::size_t i = 0; i < n; ++i) {
            l[i] = gen() % 2;
            s[i] = static_cast<double>(gen() % levels) / levels + (l[i] ? 0.1 : 0.0);
        }
        l[0] = 0;
        l[1] = 1;
        const YoudenChoice y = youden_threshold(roc_curve(s, l).points);
        const auto b = oracle::youden_sweep(s, l);
        ASSERT_NEAR(y.youden, b.youden, 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_EQ(s[i] > y.threshold, b.prediction[i] != 0) << "trial " << trial;
        }
    }
}

TEST(Roc, AreaInvariantUnderMonotoneMaps) {
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 50 + gen() % 300;
        std::vector<double> s(n);
        std::vector<std::uint8_t> l(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(gen() % 64) / 64.0;
            l[i] = gen() % 2;
        }
        l[0] = 0;
        l[1] = 1;
        const double a = 0.5 + static_cast<double>(gen() % 100) / 10.0;
        std::vector<double> t1(n);
        std::vector<double> t2(n);
        for (std::size_t i = 0; i < n; ++i) {
            t1[i] = a * s[i] - 3.0;
            t2[i] = std::exp(a * s[i]) + s[i] * s[i] * s[i];
        }
        const double base = roc_curve(s, l).auc;
        EXPECT_DOUBLE_EQ(roc_curve(t1, l).auc, base);
        EXPECT_DOUBLE_EQ(roc_curve(t2, l).auc, base);
    }
}

TEST(Metrics, PaperOperatingPointYouden) {
    const double youden = 0.906 + 0.918 - 1.0;
    EXPECT_NEAR(youden, 0.825, 0.002);
}

TEST(Metrics, ConfusionFormulasWorkedExample) {
    Confusion c{2, 1, 1, 6};
    EXPECT_NEAR(dice(c), 4.0 / 6.0, 1e-12);
    EXPECT_NEAR(mcc(c), 11.0 / 21.0, 1e-12);
}

TEST(Metrics, PerfectSegmentation) {
    const RegionPartition part = strip_partition();
    Volume<std::uint8_t> recur({16, 1, 1});
    for (int x = 4; x < 7; ++x) {
        recur(x, 0, 0) = 1;
    }
    const EvalRegions r = make_eval_regions(part, recur);
    for (Target t : {Target::Whole, Target::Recurrence}) {
        const MetricsRecord m = region_metrics(r.target(t), r, t);
        EXPECT_DOUBLE_EQ(m.sensitivity, 1.0);
        EXPECT_DOUBLE_EQ(m.specificity, 1.0);
        EXPECT_DOUBLE_EQ(m.dice, 1.0);
        EXPECT_DOUBLE_EQ(m.mcc, 1.0);
    }
}

TEST(Metrics, RegionSetIdentities) {
    const RegionPartition part = strip_partition();
    Volume<std::uint8_t> recur({16, 1, 1});
    recur(5, 0, 0) = 1;
    recur(9, 0, 0) = 1;
    const EvalRegions r = make_eval_regions(part, recur);
    for (std::size_t i = 0; i < 16; ++i) {
        EXPECT_EQ(r.whole.data[i], r.core.data[i] | r.recurrence.data[i]);
        EXPECT_EQ(r.core.data[i] & r.recurrence.data[i], 0);
        EXPECT_EQ(r.negatives.data[i], part.at(i) == Region::Roi2 && !recur.data[i]);
    }
    const auto recurrence_domain = r.domain(Target::Recurrence);
    const auto whole_domain = r.domain(Target::Whole);
    for (std::size_t i = 0; i < 16; ++i) {
        EXPECT_EQ(recurrence_domain.data[i], part.at(i) == Region::Roi2);
        EXPECT_EQ(whole_domain.data[i], part.at(i) == Region::Roi1 || part.at(i) == Region::Roi2);
    }
}

TEST(Metrics, RecurrenceOutsideRoi2IsRejected) {
    const RegionPartition part = strip_partition();
    Volume<std::uint8_t> recur({16, 1, 1});
    recur(0, 0, 0) = 1;
    EXPECT_THROW(make_eval_regions(part, recur), StructuralError);
}

TEST(Metrics, EmptyTargetIsUndefined) {
    const RegionPartition part = strip_partition();
    const EvalRegions r = make_eval_regions(part, Volume<std::uint8_t>({16, 1, 1}));
    EXPECT_THROW(region_metrics(Volume<std::uint8_t>({16, 1, 1}), r, Target::Recurrence),
                 UndefinedMetricError);
    EXPECT_NO_THROW(region_metrics(Volume<std::uint8_t>({16, 1, 1}), r, Target::Whole));
}

TEST(Metrics, RandomMasksMatchSetArithmetic) {
    std::mt19937_64 gen(21);
    const Extents e{9, 7, 3};
    for (int trial = 0; trial < 1000; ++trial) {
        RegionPartition part;
        part.labels = Volume<std::uint8_t>(e);
        std::uniform_int_distribution<int> lab(0, 3);
        for (auto& v : part.labels.data) {
            v = static_cast<std::uint8_t>(lab(gen));
        }
        Volume<std::uint8_t> recur(e);
        std::bernoulli_distribution half(0.5);
        for (std::size_t i = 0; i < recur.size(); ++i) {
            recur.data[i] = part.at(i) == Region::Roi2 && half(gen);
        }
        const Volume<std::uint8_t> seg = random_mask(e, gen, 0.05 + 0.9 * (trial % 10) / 10.0);
        const EvalRegions r = make_eval_regions(part, recur);
        for (Target t : {Target::Whole, Target::Recurrence}) {
            const auto o = oracle::mask_oracle(seg, r, t);
            if (!o.defined) {
                continue;
            }
            const MetricsRecord m = region_metrics(seg, r, t);
            EXPECT_NEAR(m.dice, o.dice, 1e-9);
            EXPECT_NEAR(m.sensitivity, o.sensitivity, 1e-12);
            EXPECT_NEAR(m.specificity, o.specificity, 1e-12);
            EXPECT_DOUBLE_EQ(m.youden, m.sensitivity + m.specificity - 1.0);
            EXPECT_GE(m.mcc, -1.0);
            EXPECT_LE(m.mcc, 1.0);
            if (!std::isnan(o.mcc)) {
                EXPECT_NEAR(m.mcc, o.mcc, 1e-9);
            }
        }
    }
}

TEST(Metrics, DiceIsSymmetric) {
    Confusion c{5, 3, 2, 11};
    Confusion swapped{5, 2, 3, 11};
    EXPECT_DOUBLE_EQ(dice(c), dice(swapped));
    EXPECT_DOUBLE_EQ(dice({4, 0, 0, 9}), 1.0);
    EXPECT_DOUBLE_EQ(mcc(c), mcc(swapped));
}

TEST(Burden, WorkedExamples) {
    RegionPartition part;
    part.labels = Volume<std::uint8_t>({20, 10, 1}, 3);
    part.spacing_mm = {1.0, 1.0, 10.0};
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 10; ++x) {
            part.labels(x, y, 0) = 1;
            part.labels(x + 10, y, 0) = y < 5 ? 2 : 3;
        }
    }
    const Volume<std::uint8_t> empty(part.extents());
    const Burden none = tumor_burden(empty, part);
    EXPECT_EQ(none.core_cm3, 0.0);
    EXPECT_EQ(none.infiltrated_cm3, 0.0);

    Volume<std::uint8_t> core(part.extents());
    for (std::size_t i = 0; i < core.size(); ++i) {
        core.data[i] = part.at(i) == Region::Roi1;
    }
    const Burden b = tumor_burden(core, part);
    EXPECT_NEAR(b.core_cm3, 1.0, 1e-12);
    EXPECT_EQ(b.infiltrated_cm3, 0.0);

    const Burden all = tumor_burden(Volume<std::uint8_t>(part.extents(), 1), part);
    EXPECT_NEAR(all.core_cm3, 1.0, 1e-12);
    EXPECT_NEAR(all.infiltrated_cm3, 0.5, 1e-12);
}

TEST(Burden, AdditiveOverDisjointSegmentations) {
    std::mt19937_64 gen(31);
    RegionPartition part;
    part.labels = Volume<std::uint8_t>({12, 12, 2});
    part.spacing_mm = {0.9, 0.9, 3.0};
    for (auto& v : part.labels.data) {
        v = static_cast<std::uint8_t>(gen() % 4);
    }
    Volume<std::uint8_t> a(part.extents());
    Volume<std::uint8_t> b(part.extents());
    Volume<std::uint8_t> both(part.extents());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto pick = gen() % 3;
        a.data[i] = pick == 1;
        b.data[i] = pick == 2;
        both.data[i] = pick != 0;
    }
    const Burden ba = tumor_burden(a, part);
    const Burden bb = tumor_burden(b, part);
    const Burden bu = tumor_burden(both, part);
    EXPECT_NEAR(ba.core_cm3 + bb.core_cm3, bu.core_cm3, 1e-12);
    EXPECT_NEAR(ba.infiltrated_cm3 + bb.infiltrated_cm3, bu.infiltrated_cm3, 1e-12);
}

TEST(Stats, IncompleteBetaMatchesReference) {
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> shape(0.05, 60.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double a = shape(gen);
        const double b = shape(gen);
        const double x = unit(gen);
        EXPECT_NEAR(regularized_incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-8)
            << a << " " << b << " " << x;
    }
    EXPECT_THROW(regularized_incomplete_beta(-1.0, 1.0, 0.5), ContractError);
}

TEST(Stats, StudentTailMatchesReference) {
    for (double dof : {1.0, 2.0, 5.0, 17.0, 38.0, 200.0}) {
        boost::math::students_t dist(dof);
        for (double t : {0.0, 0.3, 1.0, 2.5, 4.0, 9.0}) {
            const double ref = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
            EXPECT_NEAR(student_t_two_sided_p(t, dof), ref, 1e-8);
            EXPECT_NEAR(student_t_two_sided_p(-t, dof), ref, 1e-8);
        }
    }
}

TEST(Stats, PearsonExamples) {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> lin;
    std::vector<double> anti;
    for (double v : x) {
        lin.push_back(2 * v + 3);
        anti.push_back(-v);
    }
    const Correlation c = pearson_regression(x, lin);
    EXPECT_NEAR(c.r, 1.0, 1e-12);
    EXPECT_LT(c.p, 1e-8);
    EXPECT_NEAR(c.slope, 2.0, 1e-12);
    EXPECT_NEAR(c.intercept, 3.0, 1e-12);
    EXPECT_NEAR(pearson_regression(x, anti).r, -1.0, 1e-12);

    // Hand evaluation: Sxy = 4.5, Sxx = 5, Syy = 4.75.
    const Correlation w = pearson_regression(std::vector<double>{1, 2, 3, 4},
                                             std::vector<double>{1, 2, 2, 4});
    EXPECT_NEAR(w.r, 4.5 / std::sqrt(5.0 * 4.75), 1e-12);
    boost::math::students_t dist(2.0);
    const double t = w.r * std::sqrt(2.0 / (1.0 - w.r * w.r));
    EXPECT_NEAR(w.p, 2.0 * boost::math::cdf(boost::math::complement(dist, t)), 1e-9);
}

TEST(Stats, PearsonZeroVarianceIsUndefined) {
    std::vector<double> x{1, 2, 3};
    std::vector<double> y{4, 4, 4};
    EXPECT_THROW(pearson_regression(x, y), UndefinedMetricError);
    EXPECT_THROW(pearson_regression(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                 ContractError);
}

TEST(Stats, PairedTTestExamples) {
    std::vector<double> a{1, 2, 3};
    std::vector<double> zeros{0, 0, 0};
    const TTest r = paired_ttest(a, zeros);
    EXPECT_NEAR(r.t, 2.0 / (1.0 / std::sqrt(3.0)), 1e-12);
    EXPECT_NEAR(r.p, 0.0741799002274485, 1e-9);

    const TTest same = paired_ttest(a, a);
    EXPECT_EQ(same.t, 0.0);
    EXPECT_EQ(same.p, 1.0);

    std::vector<double> b{0.1, 0.2, 0.3};
    std::vector<double> shifted{1.1, 1.2, 1.3};
    EXPECT_THROW(paired_ttest(shifted, b), DegenerateTestError);
}

TEST(Stats, SwappingSeriesNegatesStatistic) {
    std::mt19937_64 gen(51);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(3 + trial % 20);
        std::vector<double> b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = nd(gen);
            b[i] = nd(gen) + 0.3;
        }
        const TTest ab = paired_ttest(a, b);
        const TTest ba = paired_ttest(b, a);
        EXPECT_EQ(ab.t, -ba.t);
        EXPECT_EQ(ab.p, ba.p);
    }
}
