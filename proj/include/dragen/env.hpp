#pragma once
// Procedural 2D objects rendered as overhead heightmaps.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dragen/common.hpp"

namespace dragen::env {

inline constexpr int kDefaultGrid = 16;

struct Heightmap {
    int size = 0;
    std::vector<double> heights;  // row-major, size*size

    Heightmap() = default;
    explicit Heightmap(int g, double fill = 0.0) : size(g), heights(static_cast<std::size_t>(g * g), fill) {}

    double& at(int r, int c) { return heights[static_cast<std::size_t>(r * size + c)]; }
    double at(int r, int c) const { return heights[static_cast<std::size_t>(r * size + c)]; }
    bool in_grid(int r, int c) const { return r >= 0 && c >= 0 && r < size && c < size; }

    bool valid() const {
        if (size <= 0 || heights.size() != static_cast<std::size_t>(size * size)) return false;
        return std::all_of(heights.begin(), heights.end(),
                           [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
    }

    int count_at_least(double thr) const {
        return static_cast<int>(std::count_if(heights.begin(), heights.end(), [thr](double v) { return v >= thr; }));
    }

    bool operator==(const Heightmap&) const = default;
};

/// Rotates the raster by +90 degrees about the grid center: out(r, c) = in(G-1-c, r).
/// Points map as (x, y) -> (cg - (y - cg), cg + (x - cg)) with x = column, y = row.
inline Heightmap rotate90(const Heightmap& h) {
    Heightmap out(h.size);
    const int g = h.size;
    for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c) out.at(r, c) = h.at(g - 1 - c, r);
    return out;
}

enum class ShapeKind { rectangle = 0, ellipse = 1, triangle = 2 };
inline constexpr std::array<ShapeKind, 3> kAllKinds{ShapeKind::rectangle, ShapeKind::ellipse, ShapeKind::triangle};

inline std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

/// size_a/size_b: rectangle width/height, ellipse semi-axes a/b, triangle base/apex height.
/// The shape is centered on the grid center plus (offset_x, offset_y).
struct ShapeParams {
    ShapeKind kind = ShapeKind::rectangle;
    double size_a = 4.0;
    double size_b = 4.0;
    double rotation = 0.0;
    double offset_x = 0.0;
    double offset_y = 0.0;

    bool operator==(const ShapeParams&) const = default;
};

/// cos/sin that are exact at multiples of pi/2, so quarter-turn rasters agree bit for bit.
inline std::pair<double, double> exact_cos_sin(double theta) {
    constexpr double half_pi = std::numbers::pi / 2.0;
    for (int k = -4; k <= 4; ++k) {
        if (theta == k * half_pi) {
            switch (((k % 4) + 4) % 4) {
                case 0: return {1.0, 0.0};
                case 1: return {0.0, 1.0};
                case 2: return {-1.0, 0.0};
                default: return {0.0, -1.0};
            }
        }
    }
    return {std::cos(theta), std::sin(theta)};
}

inline double grid_center(int g) { return (g - 1) / 2.0; }

struct Box {
    double x0, x1, y0, y1;
};

/// Axis-aligned bounds in pixel coordinates.
inline Box bounding_box(const ShapeParams& s, int g) {
    const auto [c, sn] = exact_cos_sin(s.rotation);
    const double cx = grid_center(g) + s.offset_x;
    const double cy = grid_center(g) + s.offset_y;
    if (s.kind == ShapeKind::ellipse) {
        const double ex = std::sqrt(s.size_a * s.size_a * c * c + s.size_b * s.size_b * sn * sn);
        const double ey = std::sqrt(s.size_a * s.size_a * sn * sn + s.size_b * s.size_b * c * c);
        return {cx - ex, cx + ex, cy - ey, cy + ey};
    }
    std::vector<std::pair<double, double>> local;
    const double a = s.size_a / 2.0, b = s.size_b / 2.0;
    if (s.kind == ShapeKind::rectangle)
        local = {{-a, -b}, {a, -b}, {a, b}, {-a, b}};
    else
        local = {{-a, -b}, {a, -b}, {0.0, b}};
    Box box{1e300, -1e300, 1e300, -1e300};
    for (auto [lx, ly] : local) {
        const double x = cx + c * lx - sn * ly;
        const double y = cy + sn * lx + c * ly;
        box.x0 = std::min(box.x0, x);
        box.x1 = std::max(box.x1, x);
        box.y0 = std::min(box.y0, y);
        box.y1 = std::max(box.y1, y);
    }
    return box;
}

/// True when the shape stays at least one pixel away from the grid border.
inline bool fits(const ShapeParams& s, int g) {
    if (s.size_a <= 1.0 || s.size_b <= 1.0) return false;
    const Box b = bounding_box(s, g);
    const double lo = 0.5, hi = g - 1.5;
    return b.x0 >= lo && b.x1 <= hi && b.y0 >= lo && b.y1 <= hi;
}

/// Pixel-center inclusion test.
inline bool contains(const ShapeParams& s, int g, double x, double y) {
    const auto [c, sn] = exact_cos_sin(s.rotation);
    const double dx = x - (grid_center(g) + s.offset_x);
    const double dy = y - (grid_center(g) + s.offset_y);
    const double lx = c * dx + sn * dy;
    const double ly = -sn * dx + c * dy;
    switch (s.kind) {
        case ShapeKind::rectangle:
            return std::abs(lx) <= s.size_a / 2.0 && std::abs(ly) <= s.size_b / 2.0;
        case ShapeKind::ellipse: {
            const double u = lx / s.size_a, v = ly / s.size_b;
            return u * u + v * v <= 1.0;
        }
        case ShapeKind::triangle: {
            const double half_h = s.size_b / 2.0;
            if (ly < -half_h || ly > half_h) return false;
            const double half_w = (s.size_a / 2.0) * (half_h - ly) / s.size_b;
            return std::abs(lx) <= half_w;
        }
    }
    return false;
}

/// Binary extrusion: 1.0 where the pixel center lies inside the shape.
inline Heightmap rasterize(const ShapeParams& s, int g) {
    if (!fits(s, g)) throw ConfigError("rasterize: shape does not fit the grid");
    Heightmap h(g);
    for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c)
            if (contains(s, g, c, r)) h.at(r, c) = 1.0;
    return h;
}

/// Pixel-wise max over the rasters of several primitives.
inline Heightmap rasterize_union(const std::vector<ShapeParams>& parts, int g) {
    Heightmap out(g);
    for (const auto& p : parts) {
        const Heightmap h = rasterize(p, g);
        for (std::size_t i = 0; i < out.heights.size(); ++i) out.heights[i] = std::max(out.heights[i], h.heights[i]);
    }
    return out;
}

// --- distributions ------------------------------------------------------------

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct KindRanges {
    Range size_a;
    Range size_b;
};

struct DistributionConfig {
    std::string label = "train";
    std::array<KindRanges, 3> kinds{};
    std::array<double, 3> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
    Range rotation{0.0, std::numbers::pi};
    Range offset{-1.5, 1.5};

    const KindRanges& ranges(ShapeKind k) const { return kinds[static_cast<std::size_t>(k)]; }

    void validate() const {
        auto check = [&](const Range& r, const std::string& what) {
            if (!(r.lo <= r.hi)) throw ConfigError(label + ": range '" + what + "' has low > high");
        };
        double total = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const std::string name = to_string(kAllKinds[k]);
            check(kinds[k].size_a, name + ".size_a");
            check(kinds[k].size_b, name + ".size_b");
            if (weights[k] < 0.0) throw ConfigError(label + ": negative mixture weight");
            if (weights[k] > 0.0 && (kinds[k].size_a.lo <= 1.0 || kinds[k].size_b.lo <= 1.0))
                throw ConfigError(label + ": " + name + " sizes must exceed 1 pixel");
            total += weights[k];
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError(label + ": mixture weights must sum to 1");
        check(rotation, "rotation");
        check(offset, "offset");
    }
};

inline DistributionConfig default_train_distribution() {
    DistributionConfig d;
    d.label = "train";
    d.kinds[0] = {{4.0, 8.0}, {4.0, 8.0}};
    d.kinds[1] = {{2.5, 4.5}, {2.5, 4.5}};
    d.kinds[2] = {{5.0, 9.0}, {5.0, 9.0}};
    return d;
}

/// Thin or elongated variants of the training primitives.
inline DistributionConfig default_test_distribution() {
    DistributionConfig d;
    d.label = "test";
    d.kinds[0] = {{2.5, 4.0}, {7.0, 10.0}};
    d.kinds[1] = {{1.5, 2.5}, {4.5, 6.0}};
    d.kinds[2] = {{3.0, 5.0}, {8.0, 11.0}};
    return d;
}

/// True when for every kind some size range of `a` does not intersect the one of `b`
/// (or the ranges are shifted), i.e. the two distributions are not identical.
inline bool shifted(const DistributionConfig& a, const DistributionConfig& b) {
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& x = a.kinds[k];
        const auto& y = b.kinds[k];
        const bool same = x.size_a.lo == y.size_a.lo && x.size_a.hi == y.size_a.hi && x.size_b.lo == y.size_b.lo &&
                          x.size_b.hi == y.size_b.hi;
        if (same && a.weights[k] > 0.0 && b.weights[k] > 0.0) return false;
    }
    return true;
}

inline double draw(const Range& r, Rng& rng) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

inline ShapeKind draw_kind(const DistributionConfig& cfg, Rng& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        if (cfg.weights[k] <= 0.0) continue;
        last = k;
        acc += cfg.weights[k];
        if (u < acc) return kAllKinds[k];
    }
    return kAllKinds[last];
}

inline ShapeParams draw_shape_unchecked(const DistributionConfig& cfg, Rng& rng) {
    ShapeParams s;
    s.kind = draw_kind(cfg, rng);
    const auto& r = cfg.ranges(s.kind);
    s.size_a = draw(r.size_a, rng);
    s.size_b = draw(r.size_b, rng);
    s.rotation = draw(cfg.rotation, rng);
    s.offset_x = draw(cfg.offset, rng);
    s.offset_y = draw(cfg.offset, rng);
    return s;
}

/// Draws shapes from `cfg` until one fits the grid.
inline ShapeParams sample_shape(const DistributionConfig& cfg, Rng& rng, int g = kDefaultGrid) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        ShapeParams s = draw_shape_unchecked(cfg, rng);
        if (fits(s, g)) return s;
    }
    throw ConfigError(cfg.label + ": distribution produces shapes that never fit a " + std::to_string(g) + " grid");
}

// --- augmentation baselines -----------------------------------------------------

struct DrObject {
    std::vector<ShapeParams> parts;
    Heightmap heightmap;
};

inline bool boxes_overlap(const Box& a, const Box& b, double min_overlap) {
    const double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const double oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return ox >= min_overlap && oy >= min_overlap;
}

/// Chains 2-3 primitives drawn from `cfg` whose bounding boxes pairwise overlap
/// by at least one pixel. After 50 failed placements of a part the object is
/// restarted from scratch.
inline DrObject generate_dr_object(const DistributionConfig& cfg, Rng& rng, int g = kDefaultGrid) {
    for (int restart = 0; restart < 10000; ++restart) {
        const int n = std::uniform_int_distribution<int>(2, 3)(rng);
        std::vector<ShapeParams> parts{sample_shape(cfg, rng, g)};
        std::vector<Box> boxes{bounding_box(parts[0], g)};
        bool ok = true;
        for (int k = 1; k < n && ok; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
                ShapeParams s = draw_shape_unchecked(cfg, rng);
                s.offset_x = s.offset_y = 0.0;
                const Box rel = bounding_box(s, g);
                const double cg = grid_center(g);
                const double xlo = 0.5 - (rel.x0 - cg), xhi = g - 1.5 - (rel.x1 - cg);
                const double ylo = 0.5 - (rel.y0 - cg), yhi = g - 1.5 - (rel.y1 - cg);
                if (xlo > xhi || ylo > yhi) continue;
                s.offset_x = draw({xlo, xhi}, rng) - cg;
                s.offset_y = draw({ylo, yhi}, rng) - cg;
                if (!fits(s, g)) continue;
                const Box box = bounding_box(s, g);
                if (!std::all_of(boxes.begin(), boxes.end(), [&](const Box& b) { return boxes_overlap(box, b, 1.0); }))
                    continue;
                parts.push_back(s);
                boxes.push_back(box);
                placed = true;
            }
            ok = placed;
        }
        if (!ok) continue;
        Heightmap h = rasterize_union(parts, g);
        if (h.count_at_least(0.5) == 0) continue;
        return {std::move(parts), std::move(h)};
    }
    throw ConfigError("generate_dr_object: could not place primitives");
}

/// Adds independent N(0, sigma^2) noise to each pixel and clamps to [0, 1].
inline Heightmap gaussian_augment(const Heightmap& h, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ConfigError("gaussian_augment: sigma must be >= 0");
    if (sigma == 0.0) return h;
    std::normal_distribution<double> noise(0.0, sigma);
    Heightmap out = h;
    for (auto& v : out.heights) v = std::clamp(v + noise(rng), 0.0, 1.0);
    return out;
}

}  // namespace dragen::env
