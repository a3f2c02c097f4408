#pragma once
// Adversarial environments by gradient ascent on the predicted cost in latent
// space, penalized by the distance to the starting latent and stopped once the
// predicted cost has risen by a target amount.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dragen/common.hpp"
#include "dragen/distribution.hpp"
#include "dragen/embed.hpp"
#include "dragen/env.hpp"

namespace dragen::advgen {

struct AscentConfig {
    double step_size = 0.05;     // eta
    double penalty = 0.001;      // lambda
    int max_steps = 100;         // N
    double target_fraction = 0.1;
    double d_eps = 1e-12;

    void validate() const {
        if (!(step_size > 0.0)) throw ConfigError("ascent step size must be > 0");
        if (penalty < 0.0) throw ConfigError("ascent penalty must be >= 0");
        if (max_steps < 1) throw ConfigError("ascent needs at least one step");
        if (target_fraction < 0.0 || target_fraction > 1.0) throw ConfigError("target fraction must lie in [0, 1]");
    }
};

struct PerturbationRecord {
    std::size_t source_index = 0;
    nn::Vector z0;
    nn::Vector z;
    int steps = 0;
    double cost_before = 0.0;
    double cost_after = 0.0;
    bool target_reached = false;
    bool failed = false;  // a non-finite iterate was produced
    double displacement = 0.0;
};

/// max - min predicted cost over the atoms.
inline double empirical_range(const nn::MlpParams& predictor, const std::vector<nn::Vector>& latents) {
    if (latents.empty()) throw ConfigError("empirical_range: empty set");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& z : latents) {
        const double c = embed::predict_cost(predictor, z);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    return hi - lo;
}

/// Ascent on C(z) - lambda |z - z0|. Each iteration takes a gradient step on the
/// predicted cost and then applies the proximal map of eta*lambda*|. - z0|, which
/// shrinks the displacement from z0 by eta*lambda (to zero if it is shorter).
/// Stops as soon as C(z) - C(z0) > target.
inline PerturbationRecord ascend(const nn::Vector& z0, const nn::MlpParams& predictor, const AscentConfig& cfg,
                                 double target) {
    cfg.validate();
    if (target < 0.0) throw ConfigError("ascend: target must be >= 0");
    PerturbationRecord rec;
    rec.z0 = z0;
    rec.z = z0;
    rec.cost_before = embed::predict_cost(predictor, z0);
    rec.cost_after = rec.cost_before;
    nn::Vector z = z0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        const auto [c, g] = embed::predict_cost_grad(predictor, z);
        (void)c;
        nn::Vector next = z + cfg.step_size * g;
        if (cfg.penalty > 0.0) {
            const nn::Vector d = next - z0;
            const double n = d.norm();
            const double shrink = cfg.step_size * cfg.penalty;
            next = (n < cfg.d_eps || n <= shrink) ? z0 : nn::Vector(z0 + d * (1.0 - shrink / n));
        }
        if (!next.allFinite()) {
            rec.failed = true;
            break;
        }
        z = std::move(next);
        rec.steps = step;
        rec.z = z;
        rec.cost_after = embed::predict_cost(predictor, z);
        if (rec.cost_after - rec.cost_before > target) {
            rec.target_reached = true;
            break;
        }
    }
    rec.displacement = (rec.z - rec.z0).norm();
    return rec;
}

struct Generated {
    std::vector<env::Heightmap> maps;
    std::vector<PerturbationRecord> records;
    double range = 0.0;
    double target = 0.0;
};

/// Draws K atoms of the latent distribution uniformly with replacement, ascends
/// each, and decodes the results.
inline Generated generate_adversarial(const embed::EmbedParams& params, const DiscreteDistribution& latent, int grid,
                                      int k, const AscentConfig& cfg, Rng& rng) {
    Generated out;
    if (k <= 0) return out;
    if (latent.size() == 0) throw ConfigError("generate_adversarial: empty latent distribution");
    out.range = empirical_range(params.predictor, latent.atoms);
    out.target = cfg.target_fraction * out.range;
    std::uniform_int_distribution<std::size_t> pick(0, latent.size() - 1);
    for (int i = 0; i < k; ++i) {
        const std::size_t src = pick(rng);
        PerturbationRecord rec = ascend(latent.atoms[src], params.predictor, cfg, out.target);
        rec.source_index = src;
        out.maps.push_back(embed::decode(params, rec.z, grid));
        out.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace dragen::advgen
