#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dragen/nn.hpp"

using namespace dragen;
using nn::Activation;
using nn::Matrix;
using nn::Vector;

namespace {

double act(Activation a, double v) {
    switch (a) {
        case Activation::sigmoid:
            return 1.0 / (1.0 + std::exp(-v));
        case Activation::relu:
            return v > 0.0 ? v : 0.0;
        case Activation::tanh:
            return std::tanh(v);
        case Activation::identity:
            return v;
    }
    return v;
}

// Plain loops, no Eigen products.
std::vector<double> reference_forward(const nn::MlpParams& p, std::vector<double> x) {
    for (std::size_t l = 0; l < p.layers(); ++l) {
        const auto& w = p.weights[l];
        std::vector<double> y(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            double s = p.biases[l][i];
            for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = act(p.activations[l], s);
        }
        x = std::move(y);
    }
    return x;
}

nn::MlpParams random_net(Rng& rng, std::vector<std::size_t> widths, std::vector<Activation> acts) {
    auto p = nn::init_mlp({std::move(widths), std::move(acts)}, rng);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& b : p.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = g(rng);
    return p;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
    return ev;
}

}  // namespace

TEST(Forward, IdentityNetworkPassesInputThrough) {
    nn::MlpParams p;
    p.weights = {Matrix::Identity(2, 2)};
    p.biases = {Vector::Zero(2)};
    p.activations = {Activation::identity};
    Vector x(2);
    x << 1.0, 2.0;
    const Vector y = nn::forward(p, x);
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 2.0);
}

TEST(Forward, ZeroSigmoidUnitIsOneHalf) {
    nn::MlpParams p;
    p.weights = {Matrix::Zero(1, 1)};
    p.biases = {Vector::Zero(1)};
    p.activations = {Activation::sigmoid};
    Vector x(1);
    x << 5.0;
    EXPECT_DOUBLE_EQ(nn::forward(p, x)[0], 0.5);
}

TEST(Forward, MatchesLoopReference) {
    Rng rng = make_rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_net(rng, {5, 7, 4, 3}, {Activation::relu, Activation::tanh, Activation::sigmoid});
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<double> x(5);
        Vector xv(5);
        for (int i = 0; i < 5; ++i) xv[i] = x[static_cast<std::size_t>(i)] = g(rng);
        const Vector y = nn::forward(p, xv);
        const auto ref = reference_forward(p, x);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], ref[static_cast<std::size_t>(i)], 1e-12);
    }
}

TEST(Forward, BatchRowsMatchSingleCalls) {
    Rng rng = make_rng(3);
    auto p = random_net(rng, {4, 6, 2}, {Activation::tanh, Activation::identity});
    Matrix x = Matrix::Random(5, 4);
    const Matrix y = nn::forward(p, x);
    for (Eigen::Index r = 0; r < 5; ++r) {
        const Vector yr = nn::forward(p, Vector(x.row(r).transpose()));
        EXPECT_NEAR((y.row(r).transpose() - yr).norm(), 0.0, 1e-14);
    }
}

TEST(Forward, WidthMismatchThrows) {
    Rng rng = make_rng(1);
    auto p = nn::init_mlp({{3, 2}, {Activation::identity}}, rng);
    EXPECT_THROW(nn::forward(p, Vector(Vector::Zero(4))), ConfigError);
}

TEST(Backward, LinearUnitProductRule) {
    nn::MlpParams p;
    p.weights = {Matrix::Constant(1, 1, 3.0)};
    p.biases = {Vector::Zero(1)};
    p.activations = {Activation::identity};
    nn::ForwardCache cache;
    Vector x(1);
    x << 2.0;
    nn::forward(p, x, &cache);
    const auto r = nn::backward(p, cache, Vector(Vector::Ones(1)));
    EXPECT_DOUBLE_EQ(r.grads.weights[0](0, 0), 2.0);
    EXPECT_DOUBLE_EQ(r.grad_input(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(r.grads.biases[0][0], 1.0);
}

TEST(Backward, SigmoidSlopeAtZero) {
    nn::MlpParams p;
    p.weights = {Matrix::Constant(1, 1, 1.0)};
    p.biases = {Vector::Zero(1)};
    p.activations = {Activation::sigmoid};
    nn::ForwardCache cache;
    nn::forward(p, Vector(Vector::Zero(1)), &cache);
    const auto r = nn::backward(p, cache, Vector(Vector::Ones(1)));
    EXPECT_DOUBLE_EQ(r.grad_input(0, 0), 0.25);
}

TEST(Backward, FiniteDifferences) {
    Rng rng = make_rng(11);
    const double h = 1e-6;
    for (auto hidden : {Activation::sigmoid, Activation::tanh, Activation::identity}) {
        auto p = random_net(rng, {4, 5, 3, 2}, {hidden, hidden, Activation::sigmoid});
        Matrix x = Matrix::Random(3, 4);
        Matrix target = Matrix::Random(3, 2);
        auto loss = [&](const nn::MlpParams& q, const Matrix& in) {
            return 0.5 * (nn::forward(q, in) - target).squaredNorm();
        };
        nn::ForwardCache cache;
        const Matrix y = nn::forward(p, x, &cache);
        const auto r = nn::backward(p, cache, Matrix(y - target));
        for (std::size_t l = 0; l < p.layers(); ++l) {
            for (Eigen::Index k = 0; k < p.weights[l].size(); ++k) {
                auto q = p;
                q.weights[l].data()[k] += h;
                const double lp = loss(q, x);
                q.weights[l].data()[k] -= 2 * h;
                const double lm = loss(q, x);
                const double num = (lp - lm) / (2 * h), ana = r.grads.weights[l].data()[k];
                EXPECT_LE(std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)), 1e-5);
            }
            for (Eigen::Index k = 0; k < p.biases[l].size(); ++k) {
                auto q = p;
                q.biases[l][k] += h;
                const double lp = loss(q, x);
                q.biases[l][k] -= 2 * h;
                const double lm = loss(q, x);
                const double num = (lp - lm) / (2 * h), ana = r.grads.biases[l][k];
                EXPECT_LE(std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)), 1e-5);
            }
        }
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            Matrix xp = x, xm = x;
            xp.data()[k] += h;
            xm.data()[k] -= h;
            const double num = (loss(p, xp) - loss(p, xm)) / (2 * h), ana = r.grad_input.data()[k];
            EXPECT_LE(std::abs(num - ana) / std::max(1e-4, std::abs(num) + std::abs(ana)), 1e-5);
        }
    }
}

TEST(Backward, ForeignCacheIsRejected) {
    Rng rng = make_rng(2);
    auto a = nn::init_mlp({{3, 4, 1}, {Activation::tanh, Activation::identity}}, rng);
    auto b = nn::init_mlp({{3, 2, 1}, {Activation::tanh, Activation::identity}}, rng);
    nn::ForwardCache cache;
    nn::forward(a, Vector(Vector::Ones(3)), &cache);
    EXPECT_THROW(nn::backward(b, cache, Vector(Vector::Ones(1))), UsageError);
    nn::ForwardCache empty;
    EXPECT_THROW(nn::backward(a, empty, Vector(Vector::Ones(1))), UsageError);
}

TEST(Init, GlorotBoundsAndZeroBias) {
    Rng rng = make_rng(5);
    auto p = nn::init_mlp({{10, 30}, {Activation::relu}}, rng);
    const double limit = std::sqrt(6.0 / 40.0);
    EXPECT_LE(p.weights[0].cwiseAbs().maxCoeff(), limit);
    EXPECT_EQ(p.biases[0].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(nn::init_mlp({{3}, {}}, rng), ConfigError);
    EXPECT_THROW(nn::init_mlp({{3, 0}, {Activation::relu}}, rng), ConfigError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    Rng rng = make_rng(9);
    auto p = nn::init_mlp({{3, 2}, {Activation::identity}}, rng);
    const auto before = p;
    auto st = nn::make_adam(p);
    nn::adam_step(p, nn::zeros_like(p), st, 1e-2);
    EXPECT_EQ(st.step_count, 1);
    EXPECT_EQ(p.weights[0], before.weights[0]);
}

TEST(Adam, FirstStepHandComputed) {
    nn::MlpParams p;
    p.weights = {Matrix::Zero(1, 1)};
    p.biases = {Vector::Zero(1)};
    p.activations = {Activation::identity};
    auto g = nn::zeros_like(p);
    g.weights[0](0, 0) = 1.0;
    auto st = nn::make_adam(p);
    nn::adam_step(p, g, st, 1e-3);
    // m = 0.1, v = 0.001; bias-corrected ratio 1 / (1 + 1e-8).
    EXPECT_NEAR(p.weights[0](0, 0), -1e-3 / (1.0 + 1e-8), 1e-15);
    EXPECT_EQ(p.biases[0][0], 0.0);
}

TEST(Adam, NonFiniteGradientThrows) {
    Rng rng = make_rng(4);
    auto p = nn::init_mlp({{2, 2, 1}, {Activation::tanh, Activation::identity}}, rng);
    auto g = nn::zeros_like(p);
    g.biases[1][0] = std::nan("");
    auto st = nn::make_adam(p);
    try {
        nn::adam_step(p, g, st, 1e-3);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
    }
}

TEST(Adam, Deterministic) {
    auto run = [] {
        Rng rng = make_rng(21);
        auto p = nn::init_mlp({{4, 8, 1}, {Activation::tanh, Activation::sigmoid}}, rng);
        auto st = nn::make_adam(p);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Matrix x(6, 4);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
        for (int i = 0; i < 50; ++i) {
            nn::ForwardCache c;
            const Matrix y = nn::forward(p, x, &c);
            nn::adam_step(p, nn::backward(p, c, Matrix(y.array() - 0.3)).grads, st, 1e-2);
        }
        return p;
    };
    const auto a = run(), b = run();
    for (std::size_t l = 0; l < a.layers(); ++l) {
        EXPECT_EQ(a.weights[l], b.weights[l]);
        EXPECT_EQ(a.biases[l], b.biases[l]);
    }
}

TEST(SpectralNorm, SimpleCases) {
    EXPECT_NEAR(nn::spectral_norm(Matrix::Identity(2, 2), 100).sigma, 1.0, 1e-12);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    EXPECT_NEAR(nn::spectral_norm(d, 100).sigma, 3.0, 1e-12);
    const auto z = nn::spectral_norm(Matrix::Zero(3, 2), 10);
    EXPECT_TRUE(z.degenerate);
    EXPECT_EQ(z.sigma, 0.0);
    EXPECT_THROW(nn::spectral_norm(d, 0), ConfigError);
}

TEST(SpectralNorm, MatchesJacobiEigensolver) {
    Rng rng = make_rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix w(5, 7);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
        std::vector<std::vector<double>> wtw(7, std::vector<double>(7, 0.0));
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j)
                for (int k = 0; k < 5; ++k) wtw[i][j] += w(k, i) * w(k, j);
        const auto ev = jacobi_eigenvalues(wtw);
        const double ref = std::sqrt(*std::max_element(ev.begin(), ev.end()));
        const auto s = nn::spectral_norm(w, 100);
        EXPECT_LE(std::abs(s.sigma - ref) / ref, 1e-8) << "trial " << trial;
        EXPECT_NEAR(s.u.norm(), 1.0, 1e-12);
        EXPECT_NEAR(s.v.norm(), 1.0, 1e-12);
    }
}

TEST(SpectralNorm, MonotoneInIterationsAndTransposeInvariant) {
    Rng rng = make_rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix w(6, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
    double prev = 0.0;
    for (int it = 1; it <= 60; ++it) {
        const double s = nn::spectral_norm(w, it).sigma;
        EXPECT_GE(s, prev - 1e-15);
        prev = s;
    }
    EXPECT_NEAR(nn::spectral_norm(w, 500).sigma, nn::spectral_norm(Matrix(w.transpose()), 500).sigma, 1e-10);
}

TEST(SpectralNorm, GradientIsOuterProductOfSingularPair) {
    Rng rng = make_rng(29);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix w(4, 3);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
    const auto s = nn::spectral_norm(w, 2000);
    const Matrix grad = s.u * s.v.transpose();
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        Matrix wp = w, wm = w;
        wp.data()[k] += h;
        wm.data()[k] -= h;
        const double num = (nn::spectral_norm(wp, 2000).sigma - nn::spectral_norm(wm, 2000).sigma) / (2 * h);
        EXPECT_NEAR(num, grad.data()[k], 1e-6);
    }
}

TEST(Activation, StringRoundTrip) {
    for (auto a : {Activation::sigmoid, Activation::relu, Activation::tanh, Activation::identity})
        EXPECT_EQ(nn::activation_from_string(nn::to_string(a)), a);
    EXPECT_THROW(nn::activation_from_string("softplus"), ConfigError);
}
