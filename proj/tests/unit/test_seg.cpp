#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "emseg/nn/gradient_check.hpp"
#include "emseg/phantom/histogram_match.hpp"
#include "emseg/seg/em.hpp"
#include "emseg/seg/segmenter.hpp"
#include "support/desk_instances.hpp"

using namespace emseg;
using namespace emseg::seg;

namespace {

prior::PriorMap make_prior(std::vector<float> p, std::vector<float> u) {
    prior::PriorMap m;
    m.extents = {static_cast<int>(p.size()), 1, 1};
    for (std::size_t i = 0; i < p.size(); ++i) {
        m.voxels.push_back(i);
    }
    m.probability = std::move(p);
    m.uncertainty = std::move(u);
    return m;
}

std::vector<phantom::PhantomCase> tiny_cases(std::size_t count) {
    phantom::PhantomSpec spec;
    spec.extent = 32;
    spec.slices = 2;
    spec.structural_channels = 2;
    spec.physiological_channels = 2;
    spec.case_count = static_cast<int>(count);
    spec.seed = 77;
    return phantom::histogram_match(phantom::generate_phantom(spec), 64).cases;
}

std::vector<prior::PriorMap> tiny_priors(const std::vector<phantom::PhantomCase>& cases) {
    prior::PriorModel model{prior::prior_network(2), {}};
    model.state = prior::initial_prior_state(model.spec, 5);
    std::vector<prior::PriorMap> maps;
    for (const auto& c : cases) {
        maps.push_back(prior::predict_prior_map(model, c));
    }
    return maps;
}

SegTrainConfig tiny_config() {
    SegTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_slices = 3;
    cfg.base_width = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 17;
    return cfg;
}

} // namespace

TEST(EStep, FirstEpochTakesThePrior) {
    const auto prior = make_prior({0.1f, 0.7f, 0.33f}, {0.2f, 1.0f, 0.5f});
    const std::vector<float> model{0.9f, 0.7f, 0.2f};
    const PseudoLabelField f = e_step(prior, model, 1);
    EXPECT_EQ(f.probability, prior.probability);
    EXPECT_EQ(f.accepted(), 0u);
}

TEST(EStep, WorkedExamples) {
    const auto accept = make_prior({0.8f}, {0.2f});
    const std::vector<float> close{0.7f};
    const PseudoLabelField a = e_step(accept, close, 2);
    EXPECT_EQ(a.gate[0], 1);
    EXPECT_EQ(a.probability[0], 0.7f);

    const auto reject = make_prior({0.9f}, {0.3f});
    const std::vector<float> far{0.2f};
    const PseudoLabelField r = e_step(reject, far, 2);
    EXPECT_EQ(r.gate[0], 0);
    EXPECT_EQ(r.probability[0], 0.9f);

    const std::vector<float> wrong_size{0.2f, 0.3f};
    EXPECT_THROW(e_step(reject, wrong_size, 2), StructuralError);
}

TEST(EStep, GateIsMonotoneInUncertainty) {
    for (int a = 0; a <= 100; ++a) {
        for (int b = 0; b <= 100; ++b) {
            bool accepted = false;
            for (int d = 0; d <= 100; ++d) {
                const bool now = gate_accepts(Dissimilarity::AbsoluteDifference, a / 100.0, b / 100.0,
                                              d / 100.0);
                ASSERT_TRUE(!accepted || now) << a << " " << b << " " << d;
                accepted = now;
            }
        }
    }
}

TEST(EStep, PseudoLabelsComeFromPriorOrPrediction) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<float> u01(0.0f, 1.0f);
    std::vector<float> p(5000);
    std::vector<float> u(5000);
    std::vector<float> model(5000);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = u01(gen);
        u[i] = std::max(1e-3f, u01(gen));
        model[i] = u01(gen);
    }
    const auto prior = make_prior(p, u);
    for (int epoch : {2, 3, 10}) {
        const PseudoLabelField f = e_step(prior, model, epoch);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_EQ(f.probability[i], f.gate[i] ? model[i] : p[i]);
            EXPECT_EQ(f.gate[i] != 0, std::fabs(double(p[i]) - double(model[i])) <= double(u[i]));
        }
    }
}

TEST(CompositeLoss, WorkedExamples) {
    // One ROI1 voxel predicted 1 - eps, one ROI2 voxel at 0.5 with pseudo-label 1.
    const std::vector<float> p{static_cast<float>(1.0 - kProbabilityClamp), 0.5f, 0.3f};
    const std::vector<std::uint8_t> region{1, 2, 0};
    const std::vector<float> target{0.0f, 1.0f, 0.0f};
    const LossReport r = composite_loss_terms<float>(p, region, target, 1.0);
    EXPECT_NEAR(r.j_total, std::log(2.0), 1e-6);
    EXPECT_NEAR(r.j_reg, std::log(2.0), 1e-12);

    const std::vector<float> other_target{0.0f, 0.25f, 0.0f};
    const LossReport a = composite_loss_terms<float>(p, region, target, 0.0);
    const LossReport b = composite_loss_terms<float>(p, region, other_target, 0.0);
    EXPECT_EQ(a.j_total, a.j_sup);
    EXPECT_EQ(a.j_total, b.j_total);
}

TEST(CompositeLoss, PerfectPredictionIsNearZero) {
    const double eps = kProbabilityClamp;
    const std::vector<double> p{1 - eps, 1 - eps, eps, eps, 1 - eps, eps};
    const std::vector<std::uint8_t> region{1, 1, 3, 3, 2, 2};
    const std::vector<float> target{0, 0, 0, 0, 1.0f, 0.0f};
    const LossReport r = composite_loss_terms<double>(p, region, target, 1.0);
    EXPECT_LE(r.j_sup, 2 * eps * std::fabs(std::log(eps)));
    EXPECT_LE(r.j_reg, 2 * eps * std::fabs(std::log(eps)));
}

TEST(CompositeLoss, DecompositionAndGradient) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u01(0.01, 0.99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 40;
        std::vector<double> p(n);
        std::vector<std::uint8_t> region(n);
        std::vector<float> target(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = u01(gen);
            region[i] = static_cast<std::uint8_t>(gen() % 4);
            target[i] = static_cast<float>(u01(gen));
        }
        region[0] = 3;
        const double lambda = (trial % 5) / 4.0;
        std::vector<double> grad(n);
        const LossReport r = composite_loss_terms<double>(p, region, target, lambda, grad);
        EXPECT_NEAR(r.j_total - (r.j_sup + lambda * r.j_reg), 0.0, 1e-9);
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 1e-6;
            auto up = p;
            auto down = p;
            up[i] += h;
            down[i] -= h;
            const double numeric = (composite_loss_terms<double>(up, region, target, lambda).j_total -
                                    composite_loss_terms<double>(down, region, target, lambda).j_total) /
                                   (2 * h);
            EXPECT_NEAR(grad[i], numeric, 1e-6);
        }
    }
}

TEST(CompositeLoss, LogitGradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> logit(0.0, 3.0);
    std::uniform_real_distribution<double> u01(0.01, 0.99);
    const auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 30;
        std::vector<double> z(n);
        std::vector<std::uint8_t> region(n);
        std::vector<float> target(n);
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = logit(gen);
            region[i] = static_cast<std::uint8_t>(gen() % 4);
            target[i] = static_cast<float>(u01(gen));
        }
        region[0] = 1;
        const double lambda = (trial % 5) / 4.0;
        const auto probabilities = [&](const std::vector<double>& v) {
            std::vector<double> p(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) p[i] = sigmoid(v[i]);
            return p;
        };
        std::vector<double> grad(n);
        composite_loss_terms<double>(probabilities(z), region, target, lambda, grad, GradientSpace::Logit);
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 1e-5;
            auto up = z;
            auto down = z;
            up[i] += h;
            down[i] -= h;
            const double numeric = (composite_loss_terms<double>(probabilities(up), region, target, lambda).j_total -
                                    composite_loss_terms<double>(probabilities(down), region, target, lambda).j_total) /
                                   (2 * h);
            EXPECT_NEAR(grad[i], numeric, 1e-7);
        }
    }
}

TEST(CompositeLoss, SaturatedWrongPredictionsKeepLogitGradient) {
    const std::vector<float> p{1e-30f, 1.0f, 0.5f};
    const std::vector<std::uint8_t> region{1, 3, 2};
    const std::vector<float> target{0.0f, 0.0f, 1.0f};
    std::vector<float> grad(3);
    composite_loss_terms<float>(p, region, target, 1.0, grad, GradientSpace::Logit);
    EXPECT_NEAR(grad[0], -0.5f, 1e-6);
    EXPECT_NEAR(grad[1], 0.5f, 1e-6);
    EXPECT_NEAR(grad[2], -0.5f, 1e-6);
}

TEST(CompositeLoss, RegionPreconditions) {
    const std::vector<float> p{0.5f, 0.5f};
    const std::vector<float> t{0.5f, 0.5f};
    const std::vector<std::uint8_t> only_roi2{2, 2};
    EXPECT_THROW(composite_loss_terms<float>(p, only_roi2, t, 1.0), ContractError);
    const std::vector<std::uint8_t> no_roi2{1, 3};
    EXPECT_EQ(composite_loss_terms<float>(p, no_roi2, t, 1.0).j_reg, 0.0);
}

TEST(CompositeLoss, UnetGradientCheck) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const std::size_t extent = seed == 4 ? 8 : 4;
        const auto d = desk::unet_instance(seed, 3, 2, extent, 1e-3);
        const nn::LossClosure<double> loss = [&](const nn::Tensor<double>& out, nn::Tensor<double>& g) {
            return composite_loss_terms<double>(out.span(), d.regions, d.targets, 0.8, g.span()).j_total;
        };
        const auto r = nn::gradient_check(d.spec, d.state, d.batch, loss);
        EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed << " parameter " << r.worst_parameter;
    }
}

TEST(Segment, ThresholdBoundaries) {
    RegionPartition part;
    part.labels = Volume<std::uint8_t>({6, 1, 1});
    part.labels.data = {0, 1, 2, 2, 3, 1};
    Volume<float> p({6, 1, 1});
    p.data = {0.9f, 1e-7f, 0.4f, 1.0f - 1e-7f, 0.8f, 0.6f};
    const auto none = segment(p, part, 1.0);
    EXPECT_EQ(std::count(none.data.begin(), none.data.end(), 1), 0);
    const auto all = segment(p, part, 0.0);
    EXPECT_EQ(all.data, (std::vector<std::uint8_t>{0, 1, 1, 1, 0, 1}));
    std::mt19937_64 gen(2);
    for (int i = 0; i < 100; ++i) {
        const double t1 = (gen() % 1000) / 1000.0;
        const double t2 = (gen() % 1000) / 1000.0;
        const auto lo = segment(p, part, std::min(t1, t2));
        const auto hi = segment(p, part, std::max(t1, t2));
        for (std::size_t v = 0; v < 6; ++v) {
            EXPECT_LE(hi.data[v], lo.data[v]);
        }
    }
    EXPECT_THROW(segment(p, part, 1.5), ContractError);
}

TEST(Training, MissingPriorsRequireBaseline) {
    const auto cases = tiny_cases(4);
    SegTrainConfig cfg = tiny_config();
    EXPECT_THROW(train_emredl(cases, {}, cfg), ConfigError);
    cfg.baseline = true;
    cfg.epochs = 1;
    EXPECT_NO_THROW(train_emredl(cases, {}, cfg));
}

TEST(Training, ZeroLambdaFollowsBaselineTrajectory) {
    const auto cases = tiny_cases(5);
    const auto priors = tiny_priors(cases);
    SegTrainConfig em = tiny_config();
    em.lambda = 0.0;
    SegTrainConfig base = tiny_config();
    base.baseline = true;
    std::vector<nn::ModelState> em_states;
    std::vector<nn::ModelState> base_states;
    const auto r1 = train_emredl(cases, priors, em,
                                 [&](const LossReport&, const nn::ModelState& s) { em_states.push_back(s); });
    const auto r2 = train_emredl(cases, {}, base,
                                 [&](const LossReport&, const nn::ModelState& s) { base_states.push_back(s); });
    ASSERT_EQ(em_states.size(), base_states.size());
    for (std::size_t i = 0; i < em_states.size(); ++i) {
        EXPECT_EQ(em_states[i], base_states[i]) << "epoch " << i + 1;
    }
    EXPECT_EQ(r1.model.state, r2.model.state);
    EXPECT_GT(r1.history.back().gate_fraction, 0.0);
}

TEST(Training, DeterministicAndSelectsBestValidation) {
    const auto cases = tiny_cases(5);
    const auto priors = tiny_priors(cases);
    const auto a = train_emredl(cases, priors, tiny_config());
    const auto b = train_emredl(cases, priors, tiny_config());
    EXPECT_EQ(a.model.state, b.model.state);
    ASSERT_EQ(a.history.size(), 4u);
    double best = a.history.front().val_j;
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].j_total, b.history[i].j_total);
        EXPECT_EQ(a.history[i].val_j, b.history[i].val_j);
        EXPECT_NEAR(a.history[i].j_total, a.history[i].j_sup + a.history[i].j_reg, 1e-9);
        best = std::min(best, a.history[i].val_j);
    }
    EXPECT_EQ(a.history[static_cast<std::size_t>(a.best_epoch - 1)].val_j, best);
    EXPECT_EQ(a.history.front().gate_fraction, 0.0);
    EXPECT_EQ(a.train_cases.size() + a.validation_cases.size(), cases.size());
}
