#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <filesystem>
#include <random>

#include "emseg/nn/gradient_check.hpp"
#include "emseg/phantom/case_io.hpp"
#include "emseg/prior/edl.hpp"
#include "emseg/prior/prior.hpp"
#include "support/desk_instances.hpp"

using namespace emseg;
using namespace emseg::prior;

namespace {

template <typename F>
double integrate_unit(F f) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-13);
}

// p = probability of class 1 follows Beta(alpha1, alpha0).
double quadrature_expected_mse(const Pair& alpha, const Pair& y) {
    boost::math::beta_distribution<double> dist(alpha[1], alpha[0]);
    return integrate_unit([&](double p) {
        const double sq = (y[1] - p) * (y[1] - p) + (y[0] - (1 - p)) * (y[0] - (1 - p));
        return sq * boost::math::pdf(dist, p);
    });
}

double quadrature_kl(const Pair& a) {
    boost::math::beta_distribution<double> dist(a[1], a[0]);
    return integrate_unit([&](double p) {
        const double f = boost::math::pdf(dist, p);
        return f > 0 ? f * std::log(f) : 0.0;
    });
}

VoxelSet gaussian_voxels(std::size_t n, double separation, bool informative, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> noise;
    VoxelSet set;
    set.features = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t label = i % 2;
        const double mean = informative ? (label ? separation : -separation) : 0.0;
        set.values.push_back(static_cast<float>(mean + noise(gen)));
        set.values.push_back(static_cast<float>(mean + noise(gen)));
        set.labels.push_back(label);
    }
    return set;
}

PriorTrainConfig desk_config() {
    PriorTrainConfig cfg;
    cfg.batch_size = 256;
    cfg.learning_rate = 1e-3;
    cfg.seed = 99;
    return cfg;
}

} // namespace

TEST(EdlTransform, WorkedExamples) {
    const EvidentialOutput zero = edl_transform(0, 0);
    EXPECT_EQ(zero.alpha, (Pair{1, 1}));
    EXPECT_DOUBLE_EQ(zero.probability[0], 0.5);
    EXPECT_DOUBLE_EQ(zero.uncertainty, 1.0);

    const EvidentialOutput a = edl_transform(3, 1);
    EXPECT_EQ(a.alpha, (Pair{4, 2}));
    EXPECT_DOUBLE_EQ(a.strength, 6.0);
    EXPECT_NEAR(a.probability[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(a.probability[1], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(a.uncertainty, 1.0 / 3.0, 1e-15);

    const EvidentialOutput b = edl_transform(-5, 2);
    EXPECT_EQ(b.evidence, (Pair{0, 2}));
    EXPECT_DOUBLE_EQ(b.probability[0], 0.25);
    EXPECT_DOUBLE_EQ(b.probability[1], 0.75);
    EXPECT_DOUBLE_EQ(b.uncertainty, 0.5);

    EXPECT_THROW(edl_transform(NAN, 0), NumericError);
}

TEST(EdlTransform, SubjectiveLogicIdentities) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> raw(-50, 50);
    for (int i = 0; i < 10000; ++i) {
        const EvidentialOutput o = edl_transform(raw(gen), raw(gen));
        EXPECT_NEAR(o.belief[0] + o.belief[1] + o.uncertainty, 1.0, 1e-6);
        EXPECT_NEAR(o.probability[0] + o.probability[1], 1.0, 1e-12);
        EXPECT_GT(o.uncertainty, 0.0);
        EXPECT_LE(o.uncertainty, 1.0);
    }
}

TEST(EdlTransform, MoreEvidenceLowersUncertainty) {
    for (double r0 : {0.0, 0.5, 2.0}) {
        for (double r1 : {0.1, 1.0, 7.0}) {
            double previous = 2.0;
            for (double scale = 0.5; scale <= 64; scale *= 2) {
                const double u = edl_transform(scale * r0, scale * r1).uncertainty;
                EXPECT_LT(u, previous);
                previous = u;
            }
        }
    }
}

TEST(EdlLoss, UniformAlphaExample) {
    EXPECT_NEAR(edl_sample_loss({1, 1}, {1, 0}, 0.0), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(edl_sample_loss({1, 1}, {1, 0}, 1.0), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(edl_sample_loss({1, 1}, {0, 1}, 1.0), 2.0 / 3.0, 1e-12);
    EXPECT_LT(edl_sample_loss({100, 1}, {1, 0}, 0.0), edl_sample_loss({1, 1}, {1, 0}, 0.0));
    EXPECT_THROW(edl_sample_loss({0.5, 1}, {1, 0}, 0.0), ContractError);
    EXPECT_THROW(edl_sample_loss({1, 1}, {1, 0}, 1.5), ContractError);
}

TEST(EdlLoss, ExpectedSquaredErrorMatchesQuadrature) {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> a(1.0, 30.0);
    for (int i = 0; i < 200; ++i) {
        const Pair alpha{a(gen), a(gen)};
        const Pair y = i % 2 ? Pair{0, 1} : Pair{1, 0};
        EXPECT_NEAR(expected_squared_error(alpha, y), quadrature_expected_mse(alpha, y), 1e-9);
    }
}

TEST(EdlLoss, KlMatchesQuadrature) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> a(1.0, 25.0);
    EXPECT_NEAR(kl_to_uniform({1, 1}), 0.0, 1e-15);
    for (int i = 0; i < 200; ++i) {
        const Pair alpha{a(gen), a(gen)};
        EXPECT_NEAR(kl_to_uniform(alpha), quadrature_kl(alpha), 1e-8);
    }
}

TEST(EdlLoss, AnnealZeroIsClosedForm) {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> raw(-5.0, 40.0);
    std::vector<Pair> alpha;
    std::vector<Pair> labels;
    double closed = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const EvidentialOutput o = edl_transform(raw(gen), raw(gen));
        const Pair y = i % 3 ? Pair{0, 1} : Pair{1, 0};
        const double s = o.strength;
        double term = 0.0;
        for (int k = 0; k < 2; ++k) {
            const double p = o.alpha[k] / s;
            term += (y[k] - p) * (y[k] - p) + p * (1 - p) / (s + 1);
        }
        closed += term;
        alpha.push_back(o.alpha);
        labels.push_back(y);
        EXPECT_GE(edl_sample_loss(o.alpha, y, 1.0), 0.0);
    }
    EXPECT_NEAR(edl_loss(alpha, labels, 0.0), closed / 10000.0, 1e-9);
}

TEST(EdlLoss, AlphaGradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> a(1.2, 20.0);
    for (int i = 0; i < 500; ++i) {
        const Pair alpha{a(gen), a(gen)};
        const Pair y = i % 2 ? Pair{0, 1} : Pair{1, 0};
        const double anneal = (i % 5) / 4.0;
        Pair g{};
        edl_sample_loss(alpha, y, anneal, &g);
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-6;
            Pair up = alpha;
            Pair down = alpha;
            up[k] += h;
            down[k] -= h;
            const double numeric =
                (edl_sample_loss(up, y, anneal) - edl_sample_loss(down, y, anneal)) / (2 * h);
            EXPECT_NEAR(g[k], numeric, 1e-7 * std::max(1.0, std::fabs(numeric)));
        }
    }
}

TEST(EdlLoss, NetworkGradientCheck) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = desk::prior_instance(seed, 5, 24, 1e-3);
        const auto loss = edl_loss_closure<double>(d.labels, 0.7);
        const auto r = nn::gradient_check(d.spec, d.state, d.batch, loss);
        EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
    }
}

TEST(PriorTraining, ConfigValidation) {
    PriorTrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.effective_anneal_epochs(), 10);
    EXPECT_DOUBLE_EQ(cfg.anneal_at(1), 0.1);
    EXPECT_DOUBLE_EQ(cfg.anneal_at(10), 1.0);
    EXPECT_DOUBLE_EQ(cfg.anneal_at(50), 1.0);
    cfg.validation_fraction = 1.0;
    EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(PriorTraining, MinibatchesAreClassBalanced) {
    std::vector<std::size_t> neg(1000);
    std::vector<std::size_t> pos(7);
    for (std::size_t i = 0; i < neg.size(); ++i) {
        neg[i] = i;
    }
    for (std::size_t i = 0; i < pos.size(); ++i) {
        pos[i] = 1000 + i;
    }
    BalancedSampler sampler(neg, pos, 3);
    for (std::size_t size : {2u, 3u, 64u, 101u, 4096u}) {
        std::vector<std::size_t> rows(size);
        std::vector<std::uint8_t> labels(size);
        sampler.fill(rows, labels);
        const auto ones = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
        EXPECT_EQ(ones, size / 2);
        for (std::size_t i = 0; i < size; ++i) {
            EXPECT_EQ(labels[i] == 1, rows[i] >= 1000);
        }
    }
}

TEST(PriorTraining, EmptyClassIsRejected) {
    VoxelSet set = gaussian_voxels(100, 2.0, true, 1);
    std::fill(set.labels.begin(), set.labels.end(), 0);
    EXPECT_THROW(train_prior(set, desk_config()), DataError);
}

TEST(PriorTraining, SeparableVoxelsAreLearned) {
    const VoxelSet set = gaussian_voxels(40000, 2.0, true, 10);
    const PriorTrainResult r = train_prior(set, desk_config());
    EXPECT_GE(accuracy(r.model, r.validation), 0.95);

    // Validation selection.
    double best = r.history.front().validation_loss;
    for (const auto& e : r.history) {
        best = std::min(best, e.validation_loss);
    }
    EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch - 1)].validation_loss, best);
    EXPECT_DOUBLE_EQ(validation_loss(r.model, r.validation), best);

    // A voxel at the tumor-class centroid.
    VoxelSet centroid;
    centroid.features = 2;
    centroid.values = {2.0f, 2.0f};
    centroid.labels = {1};
    phantom::PhantomCase c;
    c.partition.labels = Volume<std::uint8_t>({1, 1, 1}, 2);
    c.channels = {{"a", phantom::ChannelRole::Physiological, Volume<float>({1, 1, 1}, 2.0f)},
                  {"b", phantom::ChannelRole::Physiological, Volume<float>({1, 1, 1}, 2.0f)}};
    const PriorMap map = predict_prior_map(r.model, c);
    ASSERT_EQ(map.size(), 1u);
    EXPECT_GT(map.probability[0], 0.9f);

    // Uninformative labels leave more uncertainty behind.
    const VoxelSet noise = gaussian_voxels(40000, 2.0, false, 11);
    const PriorTrainResult rn = train_prior(noise, desk_config());
    EXPECT_GT(mean_uncertainty(rn.model, rn.validation), mean_uncertainty(r.model, r.validation));
}

TEST(PriorTraining, Deterministic) {
    const VoxelSet set = gaussian_voxels(2000, 1.0, true, 12);
    PriorTrainConfig cfg = desk_config();
    cfg.epochs = 5;
    const PriorTrainResult a = train_prior(set, cfg);
    const PriorTrainResult b = train_prior(set, cfg);
    EXPECT_EQ(a.model.state, b.model.state);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
        EXPECT_EQ(a.history[i].validation_loss, b.history[i].validation_loss);
    }
}

TEST(PriorMap, ZeroClassifierGivesMaximalUncertainty) {
    phantom::PhantomSpec spec;
    spec.extent = 32;
    spec.slices = 2;
    spec.case_count = 1;
    const phantom::PhantomCase c = phantom::generate_case(spec, 0);
    PriorModel zero{prior_network(spec.physiological_channels), {}};
    zero.state = nn::ModelState::zeros(zero.spec);
    const PriorMap map = predict_prior_map(zero, c);
    EXPECT_EQ(map.size(), c.partition.count(Region::Roi2));
    EXPECT_GT(map.size(), 0u);
    for (std::size_t i = 0; i < map.size(); ++i) {
        EXPECT_EQ(map.probability[i], 0.5f);
        EXPECT_EQ(map.uncertainty[i], 1.0f);
    }

    phantom::PhantomCase empty = c;
    for (auto& v : empty.partition.labels.data) {
        if (v == 2) {
            v = 3;
        }
    }
    EXPECT_EQ(predict_prior_map(zero, empty).size(), 0u);

    PriorModel narrow{prior_network(3), {}};
    narrow.state = nn::ModelState::zeros(narrow.spec);
    EXPECT_THROW(predict_prior_map(narrow, c), StructuralError);
}

TEST(PriorMap, FileRoundTrip) {
    phantom::PhantomSpec spec;
    spec.extent = 32;
    spec.slices = 2;
    spec.case_count = 1;
    const phantom::PhantomCase c = phantom::generate_case(spec, 0);
    PriorModel model{prior_network(spec.physiological_channels), {}};
    model.state = nn::ModelState::initialize(model.spec, 4);
    const PriorMap map = predict_prior_map(model, c);

    const auto dir = std::filesystem::temp_directory_path() / "emseg_prior_map_test";
    std::filesystem::remove_all(dir);
    phantom::write_case(dir, c);
    write_prior_map(dir, map);
    EXPECT_EQ(read_prior_map(dir, c.partition), map);
    EXPECT_NO_THROW(phantom::read_case(dir));

    std::filesystem::resize_file(dir / kPriorUncertaintyFile, 12);
    EXPECT_THROW(read_prior_map(dir, c.partition), IoError);
    std::filesystem::remove_all(dir);
}
