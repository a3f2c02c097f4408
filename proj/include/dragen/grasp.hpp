#pragma once
// Deterministic parallel-jaw grasp oracle on heightmaps.
//
// Coordinates are (x, y) = (column, row); the pixel (r, c) has its center at
// (c, r). The jaw axis of orientation bin k is (cos 30k, sin 30k), taken from an
// exact table so that quarter-turn rotations of a scene reproduce outcomes bit
// for bit.

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "dragen/env.hpp"

namespace dragen::grasp {

inline constexpr int kOrientations = 6;

struct GraspAction {
    int row = 0;
    int col = 0;
    int bin = 0;  // yaw = 30 degrees * bin

    bool operator==(const GraspAction&) const = default;
};

enum class FailureReason { none, no_contact, one_sided, too_wide, friction_cone };

inline std::string to_string(FailureReason r) {
    switch (r) {
        case FailureReason::none: return "none";
        case FailureReason::no_contact: return "no-contact";
        case FailureReason::one_sided: return "one-sided";
        case FailureReason::too_wide: return "too-wide";
        case FailureReason::friction_cone: return "friction-cone";
    }
    return "?";
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

struct GraspOutcome {
    bool success = false;
    std::optional<std::array<Vec2, 2>> contacts;  // [+u side, -u side]
    std::optional<std::array<Vec2, 2>> normals;   // outward unit normals at the contacts
    FailureReason reason = FailureReason::none;
};

struct GraspConfig {
    double occupancy_threshold = 0.25;
    double opening = 10.0;      // pixels, point-contact jaws
    double angle_tol = 1e-9;    // radians
    double march_step = 0.25;   // pixels
};

/// Jaw axis for an orientation bin.
inline Vec2 jaw_axis(int bin) {
    static constexpr double c30 = 0.86602540378443864676;  // sqrt(3)/2
    static constexpr std::array<Vec2, kOrientations> table{
        {{1.0, 0.0}, {c30, 0.5}, {0.5, c30}, {0.0, 1.0}, {-0.5, c30}, {-c30, 0.5}}};
    return table[static_cast<std::size_t>(((bin % kOrientations) + kOrientations) % kOrientations)];
}

/// Nearest integer with exact .5 ties resolved toward zero; symmetric under negation.
inline int round_half_toward_zero(double v) {
    const double a = std::abs(v);
    double r = std::floor(a + 0.5);
    if (a - std::floor(a) == 0.5) r = std::floor(a);
    return static_cast<int>(v < 0 ? -r : r);
}

inline bool occupied(const env::Heightmap& h, int r, int c, double thr) {
    return h.in_grid(r, c) && h.at(r, c) >= thr;
}

/// Occupied-pixel count of the 3x3 window around (r, c); a box blur without the 1/9.
inline int blurred_occupancy(const env::Heightmap& h, int r, int c, double thr) {
    int n = 0;
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) n += occupied(h, r + dr, c + dc, thr) ? 1 : 0;
    return n;
}

/// Outward normal from the negative central-difference gradient of the blurred field.
inline std::optional<Vec2> outward_normal(const env::Heightmap& h, int r, int c, double thr) {
    const double gx = (blurred_occupancy(h, r, c + 1, thr) - blurred_occupancy(h, r, c - 1, thr)) / 2.0;
    const double gy = (blurred_occupancy(h, r + 1, c, thr) - blurred_occupancy(h, r - 1, c, thr)) / 2.0;
    const double n = std::sqrt(gx * gx + gy * gy);
    if (n == 0.0) return std::nullopt;
    return Vec2{-gx / n, -gy / n};
}

inline double angle_between(Vec2 a, Vec2 b) {
    const double dot = a.x * b.x + a.y * b.y;
    const double cross = a.x * b.y - a.y * b.x;
    return std::atan2(std::abs(cross), dot);
}

namespace detail {

enum class SideHit { none, contact, blocked };

struct Side {
    SideHit hit = SideHit::none;
    Vec2 point;
    int row = 0;
    int col = 0;
};

// March from p + (opening/2) * dir toward p; the first occupied sample is the contact.
inline Side march(const env::Heightmap& h, const GraspAction& a, Vec2 dir, const GraspConfig& cfg) {
    const double half = cfg.opening / 2.0;
    const int steps = static_cast<int>(std::floor(half / cfg.march_step + 1e-9));
    for (int j = 0; j <= steps; ++j) {
        const double t = half - j * cfg.march_step;
        const double ox = t * dir.x;
        const double oy = t * dir.y;
        const int r = a.row + round_half_toward_zero(oy);
        const int c = a.col + round_half_toward_zero(ox);
        if (occupied(h, r, c, cfg.occupancy_threshold)) {
            Side s;
            s.hit = j == 0 ? SideHit::blocked : SideHit::contact;
            s.point = {a.col + ox, a.row + oy};
            s.row = r;
            s.col = c;
            return s;
        }
    }
    return {};
}

}  // namespace detail

/// Executes a planar parallel-jaw grasp with friction coefficient mu.
/// A jaw whose fully-open position already overlaps the object counts as too-wide.
inline GraspOutcome execute_grasp(const env::Heightmap& h, const GraspAction& a, double mu,
                                  const GraspConfig& cfg = {}) {
    if (!(mu > 0.0)) throw ConfigError("execute_grasp: friction coefficient must be > 0");
    if (!h.in_grid(a.row, a.col) || a.bin < 0 || a.bin >= kOrientations)
        throw ConfigError("execute_grasp: action outside grid or orientation range");
    const Vec2 u = jaw_axis(a.bin);
    const Vec2 neg{-u.x, -u.y};
    const auto plus = detail::march(h, a, u, cfg);
    const auto minus = detail::march(h, a, neg, cfg);

    GraspOutcome out;
    using detail::SideHit;
    if (plus.hit == SideHit::blocked || minus.hit == SideHit::blocked) {
        out.reason = FailureReason::too_wide;
        return out;
    }
    if (plus.hit == SideHit::none && minus.hit == SideHit::none) {
        out.reason = FailureReason::no_contact;
        return out;
    }
    if (plus.hit == SideHit::none || minus.hit == SideHit::none) {
        out.reason = FailureReason::one_sided;
        return out;
    }
    out.contacts = std::array<Vec2, 2>{plus.point, minus.point};
    const double dx = plus.point.x - minus.point.x, dy = plus.point.y - minus.point.y;
    if (std::sqrt(dx * dx + dy * dy) > cfg.opening) {
        out.reason = FailureReason::too_wide;
        return out;
    }
    const auto n_plus = outward_normal(h, plus.row, plus.col, cfg.occupancy_threshold);
    const auto n_minus = outward_normal(h, minus.row, minus.col, cfg.occupancy_threshold);
    if (!n_plus || !n_minus) {
        out.reason = FailureReason::friction_cone;
        return out;
    }
    out.normals = std::array<Vec2, 2>{*n_plus, *n_minus};
    // Each jaw closes along -(its side's direction); the surface normal must be
    // within the friction cone of that closing force, i.e. near-parallel to the side direction.
    const double cone = std::atan(mu) + cfg.angle_tol;
    out.success = angle_between(u, *n_plus) <= cone && angle_between(neg, *n_minus) <= cone;
    out.reason = out.success ? FailureReason::none : FailureReason::friction_cone;
    return out;
}

/// Training reward: success at the fixed training friction of 0.3.
inline int reward(const env::Heightmap& h, const GraspAction& a, const GraspConfig& cfg = {}) {
    return execute_grasp(h, a, 0.3, cfg).success ? 1 : 0;
}

// --- friction-sweep cost ---------------------------------------------------------

inline constexpr int kSweepCount = 10;

/// Friction values 0.10, 0.15, ..., 0.55.
inline double sweep_mu(int i) { return 0.10 + 0.05 * i; }

struct CostLabel {
    double value = 1.0;
    std::optional<double> min_success_mu;
};

/// Maps the index of the first successful sweep value (or none) to a cost in
/// {0.0, 0.1, ..., 0.9} (or 1.0).
inline CostLabel cost_from_sweep_index(std::optional<int> first_success) {
    CostLabel c;
    if (!first_success) return c;
    c.value = *first_success / 10.0;
    c.min_success_mu = sweep_mu(*first_success);
    return c;
}

/// Executes one fixed action across the sweep, stopping at the first success.
inline CostLabel label_cost_for_action(const env::Heightmap& h, const GraspAction& a, const GraspConfig& cfg = {}) {
    for (int i = 0; i < kSweepCount; ++i)
        if (execute_grasp(h, a, sweep_mu(i), cfg).success) return cost_from_sweep_index(i);
    return cost_from_sweep_index(std::nullopt);
}

/// Image of an action under env::rotate90 of its heightmap.
inline GraspAction rotate90(const GraspAction& a, int grid) {
    // (x, y) -> (cg - (y - cg), cg + (x - cg)); the jaw axis turns by +90 degrees (3 bins).
    return {a.col, grid - 1 - a.row, (a.bin + 3) % kOrientations};
}

}  // namespace dragen::grasp
