#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <queue>

#include "dragen/env.hpp"

using namespace dragen;
using env::Heightmap;
using env::ShapeKind;
using env::ShapeParams;

namespace {

int occupied(const Heightmap& h) { return h.count_at_least(0.5); }

// Number of 4-connected components of the occupied pixels.
int components(const Heightmap& h) {
    const int g = h.size;
    std::vector<int> seen(static_cast<std::size_t>(g * g), 0);
    int n = 0;
    for (int s = 0; s < g * g; ++s) {
        if (seen[static_cast<std::size_t>(s)] || h.heights[static_cast<std::size_t>(s)] < 0.5) continue;
        ++n;
        std::queue<int> q;
        q.push(s);
        seen[static_cast<std::size_t>(s)] = 1;
        while (!q.empty()) {
            const int v = q.front();
            q.pop();
            const int r = v / g, c = v % g;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& p : nb) {
                if (!h.in_grid(p[0], p[1])) continue;
                const int w = p[0] * g + p[1];
                if (seen[static_cast<std::size_t>(w)] || h.heights[static_cast<std::size_t>(w)] < 0.5) continue;
                seen[static_cast<std::size_t>(w)] = 1;
                q.push(w);
            }
        }
    }
    return n;
}

}  // namespace

TEST(Rasterize, CenteredSquareFillsInterior) {
    const int g = 16;
    ShapeParams s{ShapeKind::rectangle, g - 2.0, g - 2.0, 0.0, 0.0, 0.0};
    const auto h = env::rasterize(s, g);
    EXPECT_EQ(occupied(h), (g - 2) * (g - 2));
    for (int i = 0; i < g; ++i) {
        EXPECT_EQ(h.at(0, i), 0.0);
        EXPECT_EQ(h.at(g - 1, i), 0.0);
        EXPECT_EQ(h.at(i, 0), 0.0);
        EXPECT_EQ(h.at(i, g - 1), 0.0);
    }
}

TEST(Rasterize, CircleAreaNearPiRSquared) {
    ShapeParams s{ShapeKind::ellipse, 4.0, 4.0, 0.0, 0.0, 0.0};
    const double n = occupied(env::rasterize(s, 16));
    EXPECT_NEAR(n, std::numbers::pi * 16.0, 0.15 * std::numbers::pi * 16.0);
}

TEST(Rasterize, BruteForcePixelCenters) {
    Rng rng = make_rng(8);
    const auto cfg = env::default_train_distribution();
    for (int i = 0; i < 50; ++i) {
        const auto s = env::sample_shape(cfg, rng, 16);
        const auto h = env::rasterize(s, 16);
        const auto [c, sn] = env::exact_cos_sin(s.rotation);
        for (int r = 0; r < 16; ++r)
            for (int col = 0; col < 16; ++col) {
                // Rotate the pixel center into the shape frame and test directly.
                const double dx = col - 7.5 - s.offset_x, dy = r - 7.5 - s.offset_y;
                const double lx = c * dx + sn * dy, ly = -sn * dx + c * dy;
                bool in = false;
                if (s.kind == ShapeKind::rectangle) in = std::abs(lx) <= s.size_a / 2 && std::abs(ly) <= s.size_b / 2;
                if (s.kind == ShapeKind::ellipse)
                    in = (lx / s.size_a) * (lx / s.size_a) + (ly / s.size_b) * (ly / s.size_b) <= 1.0;
                if (s.kind == ShapeKind::triangle) {
                    const double t = (ly + s.size_b / 2) / s.size_b;  // 0 at base, 1 at apex
                    in = t >= 0.0 && t <= 1.0 && std::abs(lx) <= (1.0 - t) * s.size_a / 2;
                }
                EXPECT_EQ(h.at(r, col), in ? 1.0 : 0.0);
            }
    }
}

TEST(Rasterize, QuarterTurnMatchesRotatedRaster) {
    Rng rng = make_rng(12);
    auto cfg = env::default_train_distribution();
    for (int i = 0; i < 60; ++i) {
        auto s = env::sample_shape(cfg, rng, 16);
        s.rotation = 0.0;
        if (!env::fits(s, 16)) continue;
        ShapeParams t = s;
        t.rotation = std::numbers::pi / 2.0;
        t.offset_x = -s.offset_y;
        t.offset_y = s.offset_x;
        if (!env::fits(t, 16)) continue;
        EXPECT_EQ(env::rasterize(t, 16), env::rotate90(env::rasterize(s, 16))) << "shape " << i;
    }
}

TEST(Rasterize, OutOfBoundsThrows) {
    ShapeParams s{ShapeKind::rectangle, 15.0, 4.0, 0.0, 0.0, 0.0};
    EXPECT_FALSE(env::fits(s, 16));
    EXPECT_THROW(env::rasterize(s, 16), ConfigError);
    ShapeParams thin{ShapeKind::ellipse, 1.0, 3.0, 0.0, 0.0, 0.0};
    EXPECT_FALSE(env::fits(thin, 16));
}

TEST(Sampling, PointDistributionGivesThatShape) {
    env::DistributionConfig d;
    d.label = "point";
    for (auto& k : d.kinds) k = {{5.0, 5.0}, {3.0, 3.0}};
    d.weights = {0.0, 1.0, 0.0};
    d.rotation = {0.25, 0.25};
    d.offset = {0.5, 0.5};
    Rng rng = make_rng(1);
    const auto s = env::sample_shape(d, rng);
    EXPECT_EQ(s, (ShapeParams{ShapeKind::ellipse, 5.0, 3.0, 0.25, 0.5, 0.5}));
}

TEST(Sampling, KindFrequenciesWithinBinomialBounds) {
    Rng rng = make_rng(99);
    const auto cfg = env::default_train_distribution();
    const int n = 10000;
    std::array<int, 3> counts{};
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(env::sample_shape(cfg, rng).kind)];
    for (std::size_t k = 0; k < 3; ++k) {
        const double p = cfg.weights[k];
        const double sd = std::sqrt(n * p * (1 - p));
        EXPECT_LE(std::abs(counts[k] - n * p), 3 * sd) << "kind " << k;
    }
}

TEST(Sampling, SameSeedSameShape) {
    Rng a = make_rng(5), b = make_rng(5);
    const auto cfg = env::default_test_distribution();
    for (int i = 0; i < 20; ++i) EXPECT_EQ(env::sample_shape(cfg, a), env::sample_shape(cfg, b));
}

TEST(Sampling, DefaultTrainAndTestAreShifted) {
    EXPECT_TRUE(env::shifted(env::default_train_distribution(), env::default_test_distribution()));
    EXPECT_FALSE(env::shifted(env::default_train_distribution(), env::default_train_distribution()));
    env::default_train_distribution().validate();
    env::default_test_distribution().validate();
}

TEST(Sampling, InvalidConfigsRejected) {
    auto d = env::default_train_distribution();
    d.weights = {0.5, 0.5, 0.5};
    EXPECT_THROW(d.validate(), ConfigError);
    d = env::default_train_distribution();
    d.kinds[0].size_a = {6.0, 5.0};
    EXPECT_THROW(d.validate(), ConfigError);
    d = env::default_train_distribution();
    d.kinds[1].size_b = {0.5, 2.0};
    EXPECT_THROW(d.validate(), ConfigError);
}

TEST(DrObject, CoincidentUnionIsIdempotent) {
    ShapeParams s{ShapeKind::rectangle, 6.0, 4.0, 0.3, 0.0, 0.0};
    EXPECT_EQ(env::rasterize_union({s, s}, 16), env::rasterize(s, 16));
}

TEST(DrObject, UnionCoversPartsAndIsMostlyConnected) {
    Rng rng = make_rng(31);
    const auto cfg = env::default_train_distribution();
    int connected = 0;
    for (int i = 0; i < 100; ++i) {
        const auto obj = env::generate_dr_object(cfg, rng);
        ASSERT_GE(obj.parts.size(), 2u);
        ASSERT_LE(obj.parts.size(), 3u);
        ASSERT_TRUE(obj.heightmap.valid());
        int largest = 0;
        for (const auto& p : obj.parts) largest = std::max(largest, occupied(env::rasterize(p, 16)));
        EXPECT_GE(occupied(obj.heightmap), largest);
        EXPECT_GT(occupied(obj.heightmap), 0);
        connected += components(obj.heightmap) == 1 ? 1 : 0;
    }
    EXPECT_GE(connected, 95);
}

TEST(Gaussian, ZeroSigmaIsIdentity) {
    Rng rng = make_rng(3);
    const auto h = env::rasterize({ShapeKind::ellipse, 3.0, 4.0, 0.0, 0.0, 0.0}, 16);
    EXPECT_EQ(env::gaussian_augment(h, 0.0, rng), h);
    EXPECT_THROW(env::gaussian_augment(h, -0.1, rng), ConfigError);
}

TEST(Gaussian, ClampedAndHalfNormalMean) {
    Rng rng = make_rng(4);
    const auto binary = env::rasterize({ShapeKind::rectangle, 6.0, 6.0, 0.0, 0.0, 0.0}, 16);
    for (int i = 0; i < 20; ++i) EXPECT_TRUE(env::gaussian_augment(binary, 0.3, rng).valid());

    const double sigma = 0.05;
    Heightmap gray(100, 0.5);
    const auto out = env::gaussian_augment(gray, sigma, rng);
    double total = 0.0;
    for (double v : out.heights) total += std::abs(v - 0.5);
    const double mean = total / static_cast<double>(out.heights.size());
    const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
    EXPECT_NEAR(mean, expected, 0.05 * expected);
}

TEST(Heightmap, RangeInvariant) {
    Heightmap h(4);
    EXPECT_TRUE(h.valid());
    h.at(1, 1) = 1.5;
    EXPECT_FALSE(h.valid());
    h.at(1, 1) = std::nan("");
    EXPECT_FALSE(h.valid());
}
