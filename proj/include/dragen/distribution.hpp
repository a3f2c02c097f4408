#pragma once

#include <cmath>
#include <vector>

#include "dragen/common.hpp"
#include "dragen/nn.hpp"

namespace dragen {

/// Finite mixture of Dirac atoms in latent space.
struct DiscreteDistribution {
    std::vector<nn::Vector> atoms;
    std::vector<double> weights;

    std::size_t size() const { return atoms.size(); }
    Eigen::Index dim() const { return atoms.empty() ? 0 : atoms.front().size(); }

    static DiscreteDistribution uniform(std::vector<nn::Vector> atoms) {
        DiscreteDistribution d;
        const double w = 1.0 / static_cast<double>(atoms.size());
        d.weights.assign(atoms.size(), w);
        d.atoms = std::move(atoms);
        return d;
    }

    bool is_uniform() const {
        for (double w : weights)
            if (w != weights.front()) return false;
        return true;
    }

    void validate() const {
        if (atoms.empty()) throw ConfigError("distribution has no atoms");
        if (weights.size() != atoms.size()) throw ConfigError("distribution weight count differs from atom count");
        double total = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (atoms[i].size() != dim()) throw ConfigError("distribution atoms have unequal dimensions");
            if (!(weights[i] > 0.0)) throw ConfigError("distribution weights must be positive");
            total += weights[i];
        }
        if (std::abs(total - 1.0) > 1e-12) throw ConfigError("distribution weights must sum to 1");
    }

    /// Expectation of f over the atoms.
    template <typename F>
    double expect(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) s += weights[i] * f(atoms[i]);
        return s;
    }
};

}  // namespace dragen
