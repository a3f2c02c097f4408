#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dragen/embed.hpp"
#include "dragen/advgen.hpp"
#include "dragen/verify.hpp"

using namespace dragen;

namespace {

embed::EmbedConfig small_config() {
    embed::EmbedConfig c;
    c.grid = 4;
    c.latent = 3;
    c.encoder_hidden = 6;
    c.decoder_hidden = 6;
    c.predictor_hidden = 4;
    return c;
}

std::vector<env::Heightmap> shapes(std::size_t n, std::uint64_t seed) {
    return data::generate_sampled(env::default_train_distribution(), n, seed, 16).maps();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST(Encode, PureAndSeparating) {
    Rng rng = make_rng(1);
    const auto p = embed::init_embed(embed::EmbedConfig{}, rng);
    const auto maps = shapes(20, 3);
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto z = embed::encode(p, maps[i]);
        EXPECT_EQ(z, embed::encode(p, maps[i]));
        EXPECT_EQ(z.size(), 16);
        for (std::size_t j = 0; j < i; ++j)
            if (!(maps[i] == maps[j])) {
                EXPECT_GT((z - embed::encode(p, maps[j])).norm(), 0.0);
            }
    }
}

TEST(Decode, RangeStrictlyInsideUnitInterval) {
    Rng rng = make_rng(2);
    const auto p = embed::init_embed(embed::EmbedConfig{}, rng);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int i = 0; i < 20; ++i) {
        nn::Vector z(16);
        for (int k = 0; k < 16; ++k) z[k] = g(rng);
        const auto h = embed::decode(p, z, 16);
        EXPECT_TRUE(h.valid());
        for (double v : h.heights) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
        EXPECT_EQ(h, embed::decode(p, z, 16));
        const double c = embed::predict_cost(p.predictor, z);
        EXPECT_GT(c, 0.0);
        EXPECT_LT(c, 1.0);
    }
    EXPECT_THROW(embed::decode(p, nn::Vector::Zero(16), 15), ConfigError);
}

TEST(Predictor, ZeroWeightsGiveOneHalf) {
    Rng rng = make_rng(3);
    auto p = embed::init_embed(embed::EmbedConfig{}, rng);
    for (auto& w : p.predictor.weights) w.setZero();
    for (auto& b : p.predictor.biases) b.setZero();
    EXPECT_DOUBLE_EQ(embed::predict_cost(p.predictor, nn::Vector::Ones(16)), 0.5);
}

TEST(Predictor, MatchesClosedForm) {
    Rng rng = make_rng(4);
    const auto p = embed::init_embed(small_config(), rng);
    nn::Vector z(3);
    z << 0.3, -1.2, 0.7;
    const nn::Vector h = (p.psi0() * z + p.predictor.biases[0]).unaryExpr([](double v) { return nn::sigmoid(v); });
    const double expected = nn::sigmoid((p.psi1() * h)(0) + p.predictor.biases[1][0]);
    EXPECT_NEAR(embed::predict_cost(p.predictor, z), expected, 1e-15);
}

TEST(Lipschitz, UnitAndScaledNorms) {
    nn::Matrix a = nn::Matrix::Zero(3, 2), b = nn::Matrix::Zero(1, 3);
    a(1, 0) = 1.0;
    b(0, 2) = 1.0;
    EXPECT_DOUBLE_EQ(embed::lipschitz_upper_bound(a, b), 0.0625);
    a(1, 0) = 2.0;
    b(0, 2) = -4.0;
    EXPECT_DOUBLE_EQ(embed::lipschitz_upper_bound(a, b), 0.5);
}

TEST(Lipschitz, SampledQuotientsStayBelowBound) {
    Rng rng = make_rng(5);
    auto p = embed::init_embed(embed::EmbedConfig{}, rng);
    for (auto& w : p.predictor.weights) w *= 3.0;
    const double bound = embed::lipschitz_upper_bound(p);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> scale(1e-3, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        nn::Vector z1(16), d(16);
        for (int k = 0; k < 16; ++k) {
            z1[k] = g(rng);
            d[k] = g(rng);
        }
        const nn::Vector z2 = z1 + scale(rng) * d.normalized();
        const double q = std::abs(embed::predict_cost(p.predictor, z1) - embed::predict_cost(p.predictor, z2)) /
                         (z1 - z2).norm();
        worst = std::max(worst, q);
    }
    EXPECT_LE(worst, bound + 1e-9);
    EXPECT_GT(worst, 0.0);
}

TEST(Loss, DefaultWeights) {
    const embed::EmbedLossWeights w;
    EXPECT_EQ(w.alpha1, 0.1);
    EXPECT_EQ(w.alpha2, 1.0);
    EXPECT_EQ(w.alpha3, 0.1);
    EXPECT_EQ(w.gamma_target, 0.04);
    EXPECT_EQ(embed::EmbedConfig{}.latent, 16);
}

TEST(Loss, VanishesWhenEveryTermIsSatisfied) {
    Rng rng = make_rng(6);
    auto p = embed::init_embed(small_config(), rng);
    for (auto& w : p.encoder.weights) w.setZero();  // z = 0
    for (auto& b : p.encoder.biases) b.setZero();
    p.predictor.weights[0].setZero();
    p.predictor.weights[0](0, 0) = 2.0;
    p.predictor.weights[1].setZero();
    p.predictor.weights[1](0, 0) = 0.5;
    p.predictor.biases[0].setZero();
    p.predictor.biases[1][0] = -0.25;  // psi1 * sigma(0) + b1 = 0
    const nn::Matrix x = nn::forward(p.decoder, nn::Matrix(nn::Matrix::Zero(2, 3)));
    embed::EmbedLossWeights w;
    w.gamma_target = 2.0 * 0.5 / 16.0;
    const std::vector<double> costs{0.5, 0.5};
    const auto r = embed::embedding_loss(x, costs, p, w);
    EXPECT_EQ(r.terms.rec, 0.0);
    EXPECT_EQ(r.terms.pred, 0.0);
    EXPECT_EQ(r.terms.lip, 0.0);
    EXPECT_EQ(r.terms.norm, 0.0);
    EXPECT_EQ(r.terms.total, 0.0);
}

TEST(Loss, TermsMatchDefinitions) {
    Rng rng = make_rng(7);
    const auto p = embed::init_embed(small_config(), rng);
    nn::Matrix x = (nn::Matrix::Random(3, 16).array() * 0.5 + 0.5).matrix();
    const std::vector<double> costs{0.0, 0.4, 1.0};
    const embed::EmbedLossWeights w;
    const auto r = embed::embedding_loss(x, costs, p, w);
    double rec = 0.0, pred = 0.0, norm = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) {
        const nn::Vector xi = x.row(i).transpose();
        const nn::Vector z = nn::forward(p.encoder, xi);
        rec += (nn::forward(p.decoder, z) - xi).squaredNorm() / 16.0;
        const double e = embed::predict_cost(p.predictor, z) - costs[static_cast<std::size_t>(i)];
        pred += e * e;
        norm += z.squaredNorm();
    }
    const double gamma = embed::lipschitz_upper_bound(p);
    EXPECT_NEAR(r.terms.rec, rec / 3, 1e-14);
    EXPECT_NEAR(r.terms.pred, pred / 3, 1e-14);
    EXPECT_NEAR(r.terms.norm, norm / 3, 1e-14);
    EXPECT_NEAR(r.terms.lip, (gamma - 0.04) * (gamma - 0.04), 1e-12);
    EXPECT_NEAR(r.terms.total, r.terms.rec + 0.1 * r.terms.pred + r.terms.lip + 0.1 * r.terms.norm, 1e-14);
    const std::vector<double> bad{0.0, 1.5, 0.2};
    EXPECT_THROW(embed::embedding_loss(x, bad, p, w), ConfigError);
}

TEST(Loss, JointGradientMatchesFiniteDifferences) {
    Rng rng = make_rng(8);
    auto p = embed::init_embed(small_config(), rng);
    nn::Matrix x = (nn::Matrix::Random(2, 16).array() * 0.5 + 0.5).matrix();
    const std::vector<double> costs{0.2, 0.9};
    const embed::EmbedLossWeights w;
    const embed::SpectralOptions so{5000};
    const auto r = embed::embedding_loss(x, costs, p, w, so);
    const double h = 1e-6;
    auto check = [&](nn::MlpParams& net, const nn::MlpParams& grads) {
        for (std::size_t l = 0; l < net.layers(); ++l)
            for (Eigen::Index k = 0; k < net.weights[l].size(); ++k) {
                double& v = net.weights[l].data()[k];
                const double saved = v;
                v = saved + h;
                const double lp = embed::embedding_loss(x, costs, p, w, so).terms.total;
                v = saved - h;
                const double lm = embed::embedding_loss(x, costs, p, w, so).terms.total;
                v = saved;
                const double num = (lp - lm) / (2 * h), ana = grads.weights[l].data()[k];
                EXPECT_LE(std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)), 1e-4);
            }
    };
    check(p.encoder, r.grads.encoder);
    check(p.decoder, r.grads.decoder);
    check(p.predictor, r.grads.predictor);
}

TEST(Train, ZeroEpochsLeavesParameters) {
    Rng rng = make_rng(9);
    embed::EmbedModel m(embed::EmbedConfig{}, rng);
    const auto before = m.params.encoder.weights[0];
    const auto maps = shapes(4, 1);
    const std::vector<double> costs(4, 0.5);
    const auto rep = embed::train_embedding(m, maps, costs, 0, rng);
    EXPECT_TRUE(rep.epoch_loss.empty());
    EXPECT_EQ(m.params.encoder.weights[0], before);
    EXPECT_THROW(embed::train_embedding(m, maps, std::vector<double>(3, 0.5), 1, rng), ConfigError);
}

TEST(Train, NonFiniteLossAborts) {
    Rng rng = make_rng(10);
    embed::EmbedModel m(embed::EmbedConfig{}, rng);
    auto maps = shapes(8, 2);
    maps[5].at(3, 3) = std::nan("");
    const std::vector<double> costs(8, 0.5);
    EXPECT_THROW(embed::train_embedding(m, maps, costs, 2, rng), NumericError);
}

TEST(Train, LatentNormShrinksWithNormPenalty) {
    Rng rng = make_rng(11);
    embed::EmbedModel m(embed::EmbedConfig{}, rng);
    const auto maps = shapes(48, 4);
    std::vector<double> costs(maps.size());
    for (std::size_t i = 0; i < costs.size(); ++i) costs[i] = (i % 11) / 10.0;
    auto norms = [&] {
        std::vector<double> n;
        for (const auto& h : maps) n.push_back(embed::encode(m.params, h).norm());
        return median(n);
    };
    embed::train_embedding(m, maps, costs, 1, rng);
    const double first = norms();
    embed::train_embedding(m, maps, costs, 30, rng);
    EXPECT_LT(norms(), first);
}

// Two hundred training shapes labelled by a trained greedy policy, embedded with default weights.
class TrainedSet : public ::testing::Test {
protected:
    static void SetUpTestSuite() { fx_ = new verify::TrainedFixture(verify::trained_fixture(5, 200, 200, 1000)); }
    static void TearDownTestSuite() { delete fx_; }
    static verify::TrainedFixture* fx_;
};
verify::TrainedFixture* TrainedSet::fx_ = nullptr;

TEST_F(TrainedSet, LipschitzBoundSettlesNearTarget) {
    EXPECT_LE(std::abs(fx_->terms.lipschitz_bound - 0.04), 0.02);
    // The predicted range cannot exceed the bound times the latent diameter.
    const auto lat = embed::build_latent_distribution(fx_->params, fx_->maps);
    double diam = 0.0;
    for (const auto& a : lat.atoms)
        for (const auto& b : lat.atoms) diam = std::max(diam, (a - b).norm());
    EXPECT_LE(advgen::empirical_range(fx_->params.predictor, lat.atoms), fx_->terms.lipschitz_bound * diam + 1e-12);
}

TEST_F(TrainedSet, ReconstructionAndPredictionTargetsWithoutRegularizers) {
    // Capacity check: with the Lipschitz and norm terms switched off the
    // autoencoder and predictor fit the labelled set.
    auto cfg = embed::EmbedConfig{};
    cfg.weights.alpha2 = 0.0;
    cfg.weights.alpha3 = 0.0;
    Rng rng = make_rng(derive_seed(5, "fixture-embed"));
    embed::EmbedModel m(cfg, rng);
    const auto rep = embed::train_embedding(m, fx_->maps, fx_->costs, cfg.first_epochs, rng);
    EXPECT_LT(rep.epoch_loss.back(), rep.epoch_loss.front());
    EXPECT_LE(rep.final_terms.rec, 0.02);
    EXPECT_LE(rep.final_terms.pred, 0.05);
}

TEST(LatentDistribution, UniformOverSet) {
    Rng rng = make_rng(12);
    const auto p = embed::init_embed(embed::EmbedConfig{}, rng);
    const auto one = embed::build_latent_distribution(p, shapes(1, 1));
    EXPECT_EQ(one.size(), 1u);
    EXPECT_EQ(one.weights[0], 1.0);
    const auto many = embed::build_latent_distribution(p, shapes(7, 1));
    EXPECT_EQ(many.size(), 7u);
    many.validate();
    EXPECT_THROW(embed::build_latent_distribution(p, {}), ConfigError);
}
