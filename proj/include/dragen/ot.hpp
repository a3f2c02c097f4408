#pragma once
// Exact discrete Wasserstein-1 distance (Euclidean ground metric) by
// successive shortest augmenting paths on the bipartite transport network, and
// the Kantorovich-Rubinstein consequences used to certify the robustness bound.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "dragen/advgen.hpp"
#include "dragen/common.hpp"
#include "dragen/distribution.hpp"
#include "dragen/embed.hpp"

namespace dragen::ot {

struct Flow {
    std::size_t source = 0;
    std::size_t target = 0;
    double mass = 0.0;
};

struct TransportPlan {
    std::vector<Flow> flows;
    double cost = 0.0;
};

namespace detail {

/// Min-cost transportation with supplies `a`, demands `b` (equal totals) and
/// nonnegative costs c[i*n + j]. Returns the flow matrix.
inline std::vector<double> min_cost_transport(const std::vector<double>& a, const std::vector<double>& b,
                                              const std::vector<double>& cost, double tol) {
    const std::size_t m = a.size(), n = b.size();
    const std::size_t nodes = m + n + 2;
    const std::size_t s = m + n, t = m + n + 1;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> flow(m * n, 0.0), supply = a, demand = b, pot(nodes, 0.0), dist(nodes);
    std::vector<std::size_t> prev(nodes);
    std::vector<char> done(nodes);
    double remaining = std::accumulate(a.begin(), a.end(), 0.0);

    while (remaining > tol) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(done.begin(), done.end(), 0);
        dist[s] = 0.0;
        prev[s] = s;
        auto relax = [&](std::size_t u, std::size_t v, double c) {
            const double nd = dist[u] + std::max(0.0, c + pot[u] - pot[v]);
            if (nd < dist[v]) {
                dist[v] = nd;
                prev[v] = u;
            }
        };
        for (;;) {
            std::size_t u = nodes;
            double best = inf;
            for (std::size_t v = 0; v < nodes; ++v)
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    u = v;
                }
            if (u == nodes) break;
            done[u] = 1;
            if (u == t) break;
            if (u == s) {
                for (std::size_t i = 0; i < m; ++i)
                    if (supply[i] > tol) relax(s, i, 0.0);
            } else if (u < m) {
                for (std::size_t j = 0; j < n; ++j) relax(u, m + j, cost[u * n + j]);
            } else if (u < m + n) {
                const std::size_t j = u - m;
                for (std::size_t i = 0; i < m; ++i)
                    if (flow[i * n + j] > tol) relax(u, i, -cost[i * n + j]);
                if (demand[j] > tol) relax(u, t, 0.0);
            }
        }
        if (!std::isfinite(dist[t])) throw NumericError("wasserstein: transport network disconnected");
        const double dmax = dist[t];
        for (std::size_t v = 0; v < nodes; ++v) pot[v] += std::min(dist[v], dmax);

        // Bottleneck along s -> i0 -> j0 -> i1 -> ... -> jk -> t.
        double push = inf;
        for (std::size_t v = t; v != s; v = prev[v]) {
            const std::size_t u = prev[v];
            if (u == s) push = std::min(push, supply[v]);
            else if (v == t) push = std::min(push, demand[u - m]);
            else if (u >= m) push = std::min(push, flow[v * n + (u - m)]);
        }
        for (std::size_t v = t; v != s; v = prev[v]) {
            const std::size_t u = prev[v];
            if (u == s) supply[v] -= push;
            else if (v == t) demand[u - m] -= push;
            else if (u < m) flow[u * n + (v - m)] += push;
            else flow[v * n + (u - m)] -= push;
        }
        remaining -= push;
    }
    return flow;
}

}  // namespace detail

struct WassersteinResult {
    double distance = 0.0;
    TransportPlan plan;
};

/// W_1(P, Q) with d(x, y) = |x - y|_2. Uniform inputs are solved in exact
/// integer units (supplies scaled by lcm(m, n)).
inline WassersteinResult wasserstein(const DiscreteDistribution& p, const DiscreteDistribution& q) {
    p.validate();
    q.validate();
    if (p.dim() != q.dim()) throw UsageError("wasserstein: atom dimensions differ");
    const std::size_t m = p.size(), n = q.size();
    std::vector<double> cost(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (p.atoms[i] - q.atoms[j]).norm();

    std::vector<double> a, b;
    double scale = 1.0, tol = 1e-15;
    if (p.is_uniform() && q.is_uniform()) {
        const auto l = std::lcm(m, n);
        scale = static_cast<double>(l);
        a.assign(m, static_cast<double>(l / m));
        b.assign(n, static_cast<double>(l / n));
        tol = 0.5;
    } else {
        a = p.weights;
        b = q.weights;
        const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
        for (auto& w : b) w *= sa / sb;
        tol = 1e-14;
    }
    const auto flow = detail::min_cost_transport(a, b, cost, tol);
    WassersteinResult r;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double f = flow[i * n + j];
            if (f > tol * 0.5 && f > 0.0) {
                r.plan.flows.push_back({i, j, f / scale});
                total += f * cost[i * n + j];
            }
        }
    r.distance = total / scale;
    r.plan.cost = r.distance;
    return r;
}

// --- Kantorovich-Rubinstein checks --------------------------------------------------

struct KrReport {
    double gap = 0.0;        // |E_P[C] - E_Q[C]|
    double distance = 0.0;   // W(P, Q)
    double lipschitz = 0.0;  // bound used
    double bound = 0.0;      // lipschitz * W
    double slack = 0.0;      // bound - gap, must stay >= -1e-9
};

inline double expected_cost(const nn::MlpParams& predictor, const DiscreteDistribution& d) {
    return d.expect([&](const nn::Vector& z) { return embed::predict_cost(predictor, z); });
}

inline KrReport kr_check(const DiscreteDistribution& p, const DiscreteDistribution& q, const nn::MlpParams& predictor,
                         double lipschitz) {
    KrReport r;
    r.gap = std::abs(expected_cost(predictor, p) - expected_cost(predictor, q));
    r.distance = wasserstein(p, q).distance;
    r.lipschitz = lipschitz;
    r.bound = lipschitz * r.distance;
    r.slack = r.bound - r.gap;
    return r;
}

inline KrReport kr_check(const DiscreteDistribution& p, const DiscreteDistribution& q, const embed::EmbedParams& params) {
    return kr_check(p, q, params.predictor, embed::lipschitz_upper_bound(params));
}

// --- robustness bound over the Wasserstein ball ------------------------------------

struct Theorem1Options {
    double rho = 1.0;
    int trials = 1000;
    int adversarial_trials = 100;
    advgen::AscentConfig ascent{};
    double tolerance = 1e-9;
};

struct Theorem1Report {
    double rho = 0.0;
    double lipschitz = 0.0;
    double base_expectation = 0.0;
    double certified_bound = 0.0;  // E_P0[C] + lipschitz * rho
    int candidates = 0;
    int members = 0;
    int excluded = 0;
    int violations = 0;
    int adversarial_members = 0;
    int adversarial_violations = 0;
    double max_expectation = 0.0;  // over members
    double min_margin = std::numeric_limits<double>::infinity();  // certified_bound - E_cand
    double max_distance = 0.0;
};

/// Certified upper bound on the expected predicted cost over the ball of radius rho.
inline double certified_bound(double base_expectation, double lipschitz, double rho) {
    return base_expectation + lipschitz * rho;
}

namespace detail {

inline nn::Vector random_direction(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    nn::Vector d(dim);
    do {
        for (Eigen::Index k = 0; k < dim; ++k) d[k] = g(rng);
    } while (d.norm() == 0.0);
    return d.normalized();
}

/// Moves atom i by displacement[i] after rescaling so the mean displacement
/// length (the identity-coupling cost) equals `mean_length`.
inline DiscreteDistribution displaced(const DiscreteDistribution& base, std::vector<nn::Vector> disp,
                                      double mean_length) {
    double mean = 0.0;
    for (std::size_t i = 0; i < disp.size(); ++i) mean += base.weights[i] * disp[i].norm();
    const double s = mean > 0.0 ? mean_length / mean : 0.0;
    DiscreteDistribution out = base;
    for (std::size_t i = 0; i < disp.size(); ++i) out.atoms[i] = base.atoms[i] + s * disp[i];
    return out;
}

}  // namespace detail

/// Samples candidate distributions near P0, keeps those whose exact distance to
/// P0 is within rho, and checks E_cand[C] <= E_P0[C] + lipschitz * rho.
inline Theorem1Report verify_theorem1(const DiscreteDistribution& p0, const embed::EmbedParams& params,
                                      const Theorem1Options& opt, Rng& rng) {
    if (opt.rho < 0.0) throw ConfigError("verify_theorem1: rho must be >= 0");
    p0.validate();
    Theorem1Report rep;
    rep.rho = opt.rho;
    rep.lipschitz = embed::lipschitz_upper_bound(params);
    rep.base_expectation = expected_cost(params.predictor, p0);
    rep.certified_bound = certified_bound(rep.base_expectation, rep.lipschitz, opt.rho);
    rep.max_expectation = rep.base_expectation;

    auto check = [&](const DiscreteDistribution& cand, bool adversarial) {
        ++rep.candidates;
        const double w = wasserstein(cand, p0).distance;
        if (w > opt.rho + 1e-12) {
            ++rep.excluded;
            return;
        }
        rep.max_distance = std::max(rep.max_distance, w);
        const double e = expected_cost(params.predictor, cand);
        rep.max_expectation = std::max(rep.max_expectation, e);
        rep.min_margin = std::min(rep.min_margin, rep.certified_bound - e);
        const bool violated = e > rep.certified_bound + opt.tolerance;
        if (adversarial) {
            ++rep.adversarial_members;
            rep.adversarial_violations += violated ? 1 : 0;
        } else {
            ++rep.members;
            rep.violations += violated ? 1 : 0;
        }
    };

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < opt.trials; ++t) {
        std::vector<nn::Vector> disp;
        disp.reserve(p0.size());
        for (std::size_t i = 0; i < p0.size(); ++i)
            disp.push_back(detail::random_direction(p0.dim(), rng) * (opt.rho * unit(rng)));
        const double mean_length = opt.rho * (0.5 + 0.5 * unit(rng));
        check(detail::displaced(p0, std::move(disp), mean_length), false);
    }

    if (opt.adversarial_trials > 0) {
        // Unpenalized ascent directions, scaled back into the ball.
        advgen::AscentConfig asc = opt.ascent;
        asc.penalty = 0.0;
        std::vector<nn::Vector> ascended;
        for (const auto& z : p0.atoms)
            ascended.push_back(advgen::ascend(z, params.predictor, asc, std::numeric_limits<double>::infinity()).z - z);
        for (int t = 0; t < opt.adversarial_trials; ++t) {
            const double mean_length = opt.rho * (0.5 + 0.5 * unit(rng));
            check(detail::displaced(p0, ascended, mean_length), true);
        }
    }
    if (rep.min_margin == std::numeric_limits<double>::infinity()) rep.min_margin = 0.0;
    return rep;
}

}  // namespace dragen::ot
