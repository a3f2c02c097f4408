#pragma once
// Self-contained verification suites. Each suite builds its own fixtures from a
// seed, runs its checks and reports counts, worst margins and the first failing
// case.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dragen/advgen.hpp"
#include "dragen/common.hpp"
#include "dragen/config.hpp"
#include "dragen/dataset.hpp"
#include "dragen/distribution.hpp"
#include "dragen/embed.hpp"
#include "dragen/env.hpp"
#include "dragen/grasp.hpp"
#include "dragen/loop.hpp"
#include "dragen/nn.hpp"
#include "dragen/ot.hpp"
#include "dragen/policy.hpp"

namespace dragen::verify {

using json = nlohmann::json;

struct Check {
    std::string name;
    std::int64_t count = 0;
    std::int64_t failures = 0;
    double worst = 0.0;      // largest observed error, or smallest margin for margin checks
    double threshold = 0.0;
    json first_failure;      // null when none

    bool passed() const { return failures == 0; }

    void fail(json details) {
        if (failures++ == 0) first_failure = std::move(details);
    }
};

struct SuiteReport {
    std::string suite;
    std::uint64_t seed = 0;
    std::vector<Check> checks;
    json info = json::object();
    double seconds = 0.0;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed(); });
    }

    json to_json() const {
        json j;
        j["schema"] = "dragen-verify/" + std::to_string(kSchemaVersion);
        j["tool_version"] = std::string(kToolVersion);
        j["suite"] = suite;
        j["seed"] = seed;
        j["passed"] = passed();
        j["seconds"] = seconds;
        j["info"] = info;
        json cs = json::array();
        for (const auto& c : checks) {
            json cj{{"name", c.name},
                    {"count", c.count},
                    {"failures", c.failures},
                    {"worst", c.worst},
                    {"threshold", c.threshold},
                    {"passed", c.passed()}};
            if (!c.passed()) cj["first_failure"] = c.first_failure;
            cs.push_back(std::move(cj));
        }
        j["checks"] = std::move(cs);
        return j;
    }
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"gradcheck", "lipschitz", "ot", "theorem1", "oracle"};
    return names;
}

// --- shared fixtures -----------------------------------------------------------------

/// Relative error with a floor on the denominator, so gradients near zero are
/// compared in absolute terms.
inline double rel_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<double*> parameter_pointers(nn::MlpParams& p) {
    std::vector<double*> out;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        for (Eigen::Index k = 0; k < p.weights[l].size(); ++k) out.push_back(p.weights[l].data() + k);
        for (Eigen::Index k = 0; k < p.biases[l].size(); ++k) out.push_back(p.biases[l].data() + k);
    }
    return out;
}

inline std::vector<double> flat_grads(const nn::MlpParams& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.layers(); ++l) {
        out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
        out.insert(out.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
    }
    return out;
}

/// A trained embedding on a small sampled set, labelled by a briefly trained policy.
struct TrainedFixture {
    embed::EmbedParams params;
    std::vector<env::Heightmap> maps;
    std::vector<double> costs;
    embed::LossTerms terms;
};

inline TrainedFixture trained_fixture(std::uint64_t seed, int envs = 64, int epochs = 200, std::int64_t policy_steps = 500) {
    const config::RunConfig cfg = config::desk_preset();
    TrainedFixture f;
    const auto ds = data::generate_sampled(cfg.train_distribution, static_cast<std::size_t>(envs),
                                           derive_seed(seed, "fixture-set"), cfg.grid);
    f.maps = ds.maps();
    Rng prng = make_rng(derive_seed(seed, "fixture-policy"));
    policy::PolicyTrainer trainer(policy::init_policy(cfg.policy, prng), cfg.policy);
    policy::train_policy(f.maps, trainer, policy_steps, {cfg.policy.eps_start, cfg.policy.eps_end, policy_steps}, prng);
    f.costs = loop::label_costs(f.maps, trainer.policy, cfg.policy.grasp, 1);
    Rng erng = make_rng(derive_seed(seed, "fixture-embed"));
    embed::EmbedModel model(cfg.embed, erng);
    const auto rep = embed::train_embedding(model, f.maps, f.costs, epochs, erng);
    f.params = model.params;
    f.terms = rep.final_terms;
    return f;
}

// --- gradcheck -----------------------------------------------------------------------

inline SuiteReport suite_gradcheck(std::uint64_t seed, int fixtures = 24) {
    SuiteReport rep;
    rep.suite = "gradcheck";
    rep.seed = seed;
    constexpr double h = 1e-6;
    Check mlp{"mlp_loss_gradients", 0, 0, 0.0, 1e-5, nullptr};
    Check bce{"policy_bce_gradients", 0, 0, 0.0, 1e-5, nullptr};
    Check joint{"embedding_joint_loss_gradients", 0, 0, 0.0, 1e-4, nullptr};

    for (int f = 0; f < fixtures; ++f) {
        Rng rng = make_rng(derive_seed(seed, "gradcheck-mlp", static_cast<std::uint64_t>(f)));
        std::uniform_int_distribution<int> width(1, 6), depth(1, 3), batch(1, 4), act(0, 2);
        const nn::Activation acts[] = {nn::Activation::sigmoid, nn::Activation::tanh, nn::Activation::identity};
        nn::MlpSpec spec;
        spec.widths.push_back(static_cast<std::size_t>(width(rng)));
        const int L = depth(rng);
        for (int l = 0; l < L; ++l) {
            spec.widths.push_back(static_cast<std::size_t>(width(rng)));
            spec.activations.push_back(acts[act(rng)]);
        }
        nn::MlpParams p = nn::init_mlp(spec, rng);
        std::normal_distribution<double> g(0.0, 0.5);
        for (auto* v : parameter_pointers(p)) *v += 0.1 * g(rng);  // nonzero biases
        const int B = batch(rng);
        nn::Matrix x(B, static_cast<Eigen::Index>(spec.widths.front()));
        nn::Matrix t(B, static_cast<Eigen::Index>(spec.widths.back()));
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = g(rng) * 2.0;
        for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = g(rng);
        auto loss = [&](const nn::MlpParams& q) {
            const nn::Matrix y = nn::forward(q, x);
            return 0.5 * (y - t).squaredNorm() / B;
        };
        nn::ForwardCache cache;
        const nn::Matrix y = nn::forward(p, x, &cache);
        const nn::Matrix dy = (y - t) / static_cast<double>(B);
        const auto br = nn::backward(p, cache, dy);
        const auto analytic = flat_grads(br.grads);
        auto ptrs = parameter_pointers(p);
        for (std::size_t k = 0; k < ptrs.size(); ++k) {
            const double saved = *ptrs[k];
            *ptrs[k] = saved + h;
            const double lp = loss(p);
            *ptrs[k] = saved - h;
            const double lm = loss(p);
            *ptrs[k] = saved;
            const double num = (lp - lm) / (2 * h);
            const double e = rel_error(analytic[k], num);
            ++mlp.count;
            mlp.worst = std::max(mlp.worst, e);
            if (e > mlp.threshold)
                mlp.fail(json{{"fixture", f}, {"parameter", k}, {"analytic", analytic[k]}, {"numeric", num}, {"rel_error", e}});
        }
        // Input gradient.
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            const double saved = x.data()[k];
            x.data()[k] = saved + h;
            const double lp = loss(p);
            x.data()[k] = saved - h;
            const double lm = loss(p);
            x.data()[k] = saved;
            const double num = (lp - lm) / (2 * h);
            const double e = rel_error(br.grad_input.data()[k], num);
            ++mlp.count;
            mlp.worst = std::max(mlp.worst, e);
            if (e > mlp.threshold)
                mlp.fail(json{{"fixture", f}, {"input", k}, {"analytic", br.grad_input.data()[k]}, {"numeric", num}, {"rel_error", e}});
        }
    }

    for (int f = 0; f < fixtures; ++f) {
        Rng rng = make_rng(derive_seed(seed, "gradcheck-bce", static_cast<std::uint64_t>(f)));
        policy::PolicyConfig pc;
        pc.patch = 3;
        pc.hidden = 5;
        pc.hidden_activation = f % 2 ? nn::Activation::tanh : nn::Activation::sigmoid;
        policy::Policy pol = policy::init_policy(pc, rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int B = 1 + f % 5;
        nn::Matrix patches(B, 9);
        for (Eigen::Index k = 0; k < patches.size(); ++k) patches.data()[k] = u(rng);
        std::vector<int> outcomes(static_cast<std::size_t>(B));
        for (auto& o : outcomes) o = u(rng) < 0.5 ? 1 : 0;
        const auto lg = policy::bce_loss(pol.scorer, patches, outcomes);
        const auto analytic = flat_grads(lg.grads);
        auto ptrs = parameter_pointers(pol.scorer);
        for (std::size_t k = 0; k < ptrs.size(); ++k) {
            const double saved = *ptrs[k];
            *ptrs[k] = saved + h;
            const double lp = policy::bce_loss(pol.scorer, patches, outcomes).loss;
            *ptrs[k] = saved - h;
            const double lm = policy::bce_loss(pol.scorer, patches, outcomes).loss;
            *ptrs[k] = saved;
            const double num = (lp - lm) / (2 * h);
            const double e = rel_error(analytic[k], num);
            ++bce.count;
            bce.worst = std::max(bce.worst, e);
            if (e > bce.threshold)
                bce.fail(json{{"fixture", f}, {"parameter", k}, {"analytic", analytic[k]}, {"numeric", num}, {"rel_error", e}});
        }
    }

    for (int f = 0; f < fixtures; ++f) {
        Rng rng = make_rng(derive_seed(seed, "gradcheck-joint", static_cast<std::uint64_t>(f)));
        embed::EmbedConfig ec;
        ec.grid = 4;
        ec.latent = 3;
        ec.encoder_hidden = 5;
        ec.decoder_hidden = 5;
        ec.predictor_hidden = 4;
        embed::EmbedParams p = embed::init_embed(ec, rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int B = 3;
        nn::Matrix x(B, 16);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
        std::vector<double> costs(B);
        for (auto& c : costs) c = std::floor(u(rng) * 11.0) / 10.0;
        const embed::EmbedLossWeights w;
        const embed::SpectralOptions so{5000};
        const auto res = embed::embedding_loss(x, costs, p, w, so);
        std::vector<double> analytic;
        for (const auto* g : {&res.grads.encoder, &res.grads.decoder, &res.grads.predictor}) {
            const auto v = flat_grads(*g);
            analytic.insert(analytic.end(), v.begin(), v.end());
        }
        std::vector<double*> ptrs;
        for (auto* net : {&p.encoder, &p.decoder, &p.predictor}) {
            const auto v = parameter_pointers(*net);
            ptrs.insert(ptrs.end(), v.begin(), v.end());
        }
        for (std::size_t k = 0; k < ptrs.size(); ++k) {
            const double saved = *ptrs[k];
            *ptrs[k] = saved + h;
            const double lp = embed::embedding_loss(x, costs, p, w, so).terms.total;
            *ptrs[k] = saved - h;
            const double lm = embed::embedding_loss(x, costs, p, w, so).terms.total;
            *ptrs[k] = saved;
            const double num = (lp - lm) / (2 * h);
            const double e = rel_error(analytic[k], num);
            ++joint.count;
            joint.worst = std::max(joint.worst, e);
            if (e > joint.threshold)
                joint.fail(json{{"fixture", f}, {"parameter", k}, {"analytic", analytic[k]}, {"numeric", num}, {"rel_error", e}});
        }
    }
    rep.info["fixtures_per_check"] = fixtures;
    rep.info["step"] = h;
    rep.info["relative_error_floor"] = 1e-4;
    rep.checks = {mlp, bce, joint};
    return rep;
}

// --- lipschitz -----------------------------------------------------------------------

/// Largest |h(x) - h(y)| / |x - y| over sampled pairs, as a fraction of `bound`.
inline void sample_difference_quotients(const nn::MlpParams& pred, double bound, int pairs, Rng& rng, Check& chk,
                                        const json& label) {
    const auto dim = static_cast<Eigen::Index>(pred.input_width());
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Worst input direction of the first layer.
    Eigen::JacobiSVD<nn::Matrix> svd(pred.weights[0], Eigen::ComputeFullV);
    const nn::Vector top = svd.matrixV().col(0);
    const double scales[] = {0.05, 0.5, 2.0, 8.0};
    double best = 0.0;
    for (int k = 0; k < pairs; ++k) {
        nn::Vector x(dim), d(dim);
        const double s = scales[k % 4];
        for (Eigen::Index i = 0; i < dim; ++i) x[i] = s * g(rng);
        if (k % 3 == 0) {
            d = top;
        } else {
            for (Eigen::Index i = 0; i < dim; ++i) d[i] = g(rng);
            d.normalize();
        }
        const double len = std::pow(10.0, -4.0 + 5.0 * u(rng));
        const nn::Vector y = x + len * d;
        const double dist = (x - y).norm();
        if (dist == 0.0) continue;
        const double q = std::abs(embed::predict_cost(pred, x) - embed::predict_cost(pred, y)) / dist;
        ++chk.count;
        best = std::max(best, q);
        if (q > bound + 1e-9) {
            json fj = label;
            fj["pair"] = k;
            fj["quotient"] = q;
            fj["bound"] = bound;
            chk.fail(fj);
        }
    }
    chk.worst = std::max(chk.worst, best / bound);
}

inline SuiteReport suite_lipschitz(std::uint64_t seed, int pairs = 100000, int random_predictors = 10,
                                   int trained_predictors = 3) {
    SuiteReport rep;
    rep.suite = "lipschitz";
    rep.seed = seed;
    Check random_chk{"random_predictor_quotients", 0, 0, 0.0, 1.0, nullptr};
    Check trained_chk{"trained_predictor_quotients", 0, 0, 0.0, 1.0, nullptr};
    Check gamma_chk{"trained_lipschitz_near_target", 0, 0, 0.0, 0.02, nullptr};
    const embed::EmbedConfig ec;
    for (int i = 0; i < random_predictors; ++i) {
        Rng rng = make_rng(derive_seed(seed, "lipschitz-random", static_cast<std::uint64_t>(i)));
        auto pred = nn::init_mlp({{16, 16, 1}, {nn::Activation::sigmoid, nn::Activation::sigmoid}}, rng);
        const double scale = 0.5 + 2.5 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        pred.weights[0] *= scale;
        pred.weights[1] *= scale;
        const double bound = embed::lipschitz_upper_bound(pred.weights[0], pred.weights[1]);
        sample_difference_quotients(pred, bound, pairs, rng, random_chk, {{"predictor", "random"}, {"index", i}});
    }
    json gammas = json::array();
    for (int i = 0; i < trained_predictors; ++i) {
        const auto fx = trained_fixture(derive_seed(seed, "lipschitz-trained", static_cast<std::uint64_t>(i)));
        const double bound = embed::lipschitz_upper_bound(fx.params);
        Rng rng = make_rng(derive_seed(seed, "lipschitz-pairs", static_cast<std::uint64_t>(i)));
        sample_difference_quotients(fx.params.predictor, bound, pairs, rng, trained_chk,
                                    {{"predictor", "trained"}, {"index", i}});
        const double dev = std::abs(bound - ec.weights.gamma_target);
        ++gamma_chk.count;
        gamma_chk.worst = std::max(gamma_chk.worst, dev);
        gammas.push_back(bound);
        if (dev > gamma_chk.threshold) gamma_chk.fail(json{{"index", i}, {"lipschitz_bound", bound}, {"target", ec.weights.gamma_target}});
    }
    rep.info["pairs_per_predictor"] = pairs;
    rep.info["trained_lipschitz_bounds"] = gammas;
    rep.info["worst_is"] = "max quotient / bound for quotient checks; |bound - target| for the target check";
    rep.checks = {random_chk, trained_chk, gamma_chk};
    return rep;
}

// --- ot ------------------------------------------------------------------------------

inline DiscreteDistribution random_uniform(std::size_t n, Eigen::Index dim, Rng& rng, double spread = 1.0) {
    std::normal_distribution<double> g(0.0, spread);
    std::vector<nn::Vector> atoms;
    for (std::size_t i = 0; i < n; ++i) {
        nn::Vector a(dim);
        for (Eigen::Index k = 0; k < dim; ++k) a[k] = g(rng);
        atoms.push_back(std::move(a));
    }
    return DiscreteDistribution::uniform(std::move(atoms));
}

/// Minimum over all permutations of the mean matched distance (equal sizes).
inline double brute_force_w1(const DiscreteDistribution& p, const DiscreteDistribution& q) {
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) s += (p.atoms[i] - q.atoms[perm[i]]).norm();
        best = std::min(best, s / static_cast<double>(perm.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline DiscreteDistribution line_atoms(std::initializer_list<double> xs) {
    std::vector<nn::Vector> atoms;
    for (double x : xs) atoms.push_back(nn::Vector::Constant(1, x));
    return DiscreteDistribution::uniform(std::move(atoms));
}

inline SuiteReport suite_ot(std::uint64_t seed, int pairs = 200, int triples = 200) {
    SuiteReport rep;
    rep.suite = "ot";
    rep.seed = seed;
    Check brute{"matches_permutation_brute_force", 0, 0, 0.0, 1e-9, nullptr};
    Check marg{"plan_marginals", 0, 0, 0.0, 1e-9, nullptr};
    Check sym{"symmetry", 0, 0, 0.0, 1e-9, nullptr};
    Check tri{"triangle_inequality", 0, 0, 0.0, 1e-9, nullptr};
    Check intervals{"three_interval_ordering", 0, 0, 0.0, 0.0, nullptr};

    auto check_marginals = [&](const DiscreteDistribution& p, const DiscreteDistribution& q,
                               const ot::WassersteinResult& r, int idx) {
        std::vector<double> rows(p.size(), 0.0), cols(q.size(), 0.0);
        for (const auto& fl : r.plan.flows) {
            rows[fl.source] += fl.mass;
            cols[fl.target] += fl.mass;
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(rows[i] - p.weights[i]));
        for (std::size_t j = 0; j < q.size(); ++j) worst = std::max(worst, std::abs(cols[j] - q.weights[j]));
        ++marg.count;
        marg.worst = std::max(marg.worst, worst);
        if (worst > marg.threshold) marg.fail(json{{"case", idx}, {"marginal_error", worst}});
    };

    for (int k = 0; k < pairs; ++k) {
        Rng rng = make_rng(derive_seed(seed, "ot-pair", static_cast<std::uint64_t>(k)));
        const auto n = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 6)(rng));
        const auto dim = static_cast<Eigen::Index>(std::uniform_int_distribution<int>(1, 4)(rng));
        const auto p = random_uniform(n, dim, rng), q = random_uniform(n, dim, rng);
        const auto r = ot::wasserstein(p, q);
        const double bf = brute_force_w1(p, q);
        const double err = std::abs(r.distance - bf);
        ++brute.count;
        brute.worst = std::max(brute.worst, err);
        if (err > brute.threshold) brute.fail(json{{"case", k}, {"atoms", n}, {"dim", dim}, {"solver", r.distance}, {"brute_force", bf}});
        check_marginals(p, q, r, k);
    }
    for (int k = 0; k < triples; ++k) {
        Rng rng = make_rng(derive_seed(seed, "ot-triple", static_cast<std::uint64_t>(k)));
        std::uniform_int_distribution<int> sz(1, 8);
        const auto dim = static_cast<Eigen::Index>(std::uniform_int_distribution<int>(1, 4)(rng));
        const auto a = random_uniform(static_cast<std::size_t>(sz(rng)), dim, rng);
        const auto b = random_uniform(static_cast<std::size_t>(sz(rng)), dim, rng);
        const auto c = random_uniform(static_cast<std::size_t>(sz(rng)), dim, rng);
        const auto ab = ot::wasserstein(a, b), ba = ot::wasserstein(b, a);
        const double bc = ot::wasserstein(b, c).distance, ac = ot::wasserstein(a, c).distance;
        check_marginals(a, b, ab, k);
        const double asym = std::abs(ab.distance - ba.distance);
        ++sym.count;
        sym.worst = std::max(sym.worst, asym);
        if (asym > sym.threshold) sym.fail(json{{"case", k}, {"w_ab", ab.distance}, {"w_ba", ba.distance}});
        const double excess = ac - (ab.distance + bc);
        ++tri.count;
        tri.worst = std::max(tri.worst, excess);
        if (excess > tri.threshold) tri.fail(json{{"case", k}, {"w_ac", ac}, {"w_ab", ab.distance}, {"w_bc", bc}});
    }
    {
        const auto p1 = line_atoms({0.0, 1.0}), p2 = line_atoms({1.0, 2.0}), p3 = line_atoms({2.0, 3.0});
        const double w12 = ot::wasserstein(p1, p2).distance, w23 = ot::wasserstein(p2, p3).distance,
                     w13 = ot::wasserstein(p1, p3).distance;
        intervals.count = 3;
        const bool ok = w12 == w23 && w12 < w13 && w12 == 1.0 && w13 == 2.0;
        if (!ok) intervals.fail(json{{"w12", w12}, {"w23", w23}, {"w13", w13}});
        rep.info["three_interval"] = {{"w12", w12}, {"w23", w23}, {"w13", w13}};
    }
    rep.checks = {brute, marg, sym, tri, intervals};
    return rep;
}

// --- theorem1 ------------------------------------------------------------------------

inline SuiteReport suite_theorem1(std::uint64_t seed, int fixtures = 2, int trials = 1000, int adversarial = 100,
                                  int kr_pairs = 500) {
    SuiteReport rep;
    rep.suite = "theorem1";
    rep.seed = seed;
    Check random_chk{"random_in_ball_candidates", 0, 0, std::numeric_limits<double>::infinity(), 1e-9, nullptr};
    Check adv_chk{"ascended_in_ball_candidates", 0, 0, std::numeric_limits<double>::infinity(), 1e-9, nullptr};
    Check kr_chk{"kantorovich_rubinstein_slack", 0, 0, std::numeric_limits<double>::infinity(), 1e-9, nullptr};
    Check zero_chk{"zero_radius_slack", 0, 0, 0.0, 1e-12, nullptr};
    json per = json::array();
    for (int f = 0; f < fixtures; ++f) {
        const auto fx = trained_fixture(derive_seed(seed, "theorem1-fixture", static_cast<std::uint64_t>(f)));
        const auto p0 = embed::build_latent_distribution(fx.params, fx.maps);
        for (double rho : {0.0, 0.5, 1.0, 2.0}) {
            Rng rng = make_rng(derive_seed(seed, "theorem1-candidates",
                                           static_cast<std::uint64_t>(f * 16 + static_cast<int>(rho * 4))));
            ot::Theorem1Options opt;
            opt.rho = rho;
            opt.trials = trials;
            opt.adversarial_trials = adversarial;
            const auto r = ot::verify_theorem1(p0, fx.params, opt, rng);
            per.push_back({{"fixture", f},
                           {"rho", rho},
                           {"lipschitz", r.lipschitz},
                           {"base_expectation", r.base_expectation},
                           {"certified_bound", r.certified_bound},
                           {"members", r.members},
                           {"adversarial_members", r.adversarial_members},
                           {"excluded", r.excluded},
                           {"max_expectation", r.max_expectation},
                           {"min_margin", r.min_margin},
                           {"max_distance", r.max_distance}});
            random_chk.count += r.members;
            adv_chk.count += r.adversarial_members;
            random_chk.worst = std::min(random_chk.worst, r.min_margin);
            adv_chk.worst = std::min(adv_chk.worst, r.min_margin);
            if (r.violations > 0) {
                random_chk.failures += r.violations - 1;
                random_chk.fail(json{{"fixture", f}, {"rho", rho}, {"violations", r.violations}, {"min_margin", r.min_margin}});
            }
            if (r.adversarial_violations > 0) {
                adv_chk.failures += r.adversarial_violations - 1;
                adv_chk.fail(json{{"fixture", f}, {"rho", rho}, {"violations", r.adversarial_violations}, {"min_margin", r.min_margin}});
            }
            if (r.members < trials) {
                random_chk.fail(json{{"fixture", f}, {"rho", rho}, {"reason", "too few in-ball candidates"}, {"members", r.members}});
            }
            if (rho == 0.0) {
                ++zero_chk.count;
                const double slack = std::abs(r.max_expectation - r.base_expectation);
                zero_chk.worst = std::max(zero_chk.worst, slack);
                if (slack > zero_chk.threshold || r.max_distance != 0.0)
                    zero_chk.fail(json{{"fixture", f}, {"slack", slack}, {"max_distance", r.max_distance}});
            }
        }
        // Duality corollary on random (non-uniform) pairs drawn around the embedding.
        const double lip = embed::lipschitz_upper_bound(fx.params);
        for (int k = 0; k < kr_pairs; ++k) {
            Rng rng = make_rng(derive_seed(seed, "theorem1-kr", static_cast<std::uint64_t>(f * kr_pairs + k)));
            std::uniform_int_distribution<std::size_t> sz(1, 12), pick(0, p0.size() - 1);
            std::normal_distribution<double> g(0.0, 0.1);
            std::uniform_real_distribution<double> u(0.1, 1.0);
            auto make = [&] {
                DiscreteDistribution d;
                const auto n = sz(rng);
                double total = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    nn::Vector a = p0.atoms[pick(rng)];
                    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += g(rng);
                    d.atoms.push_back(std::move(a));
                    d.weights.push_back(u(rng));
                    total += d.weights.back();
                }
                for (auto& w : d.weights) w /= total;
                double s = 0.0;
                for (std::size_t i = 0; i + 1 < n; ++i) s += d.weights[i];
                d.weights.back() = 1.0 - s;
                return d;
            };
            const auto p = make(), q = make();
            const auto r = ot::kr_check(p, q, fx.params.predictor, lip);
            ++kr_chk.count;
            kr_chk.worst = std::min(kr_chk.worst, r.slack);
            if (r.slack < -kr_chk.threshold) kr_chk.fail(json{{"fixture", f}, {"pair", k}, {"gap", r.gap}, {"bound", r.bound}});
        }
    }
    rep.info["runs"] = per;
    rep.info["worst_is"] = "smallest margin (bound minus value) for margin checks";
    rep.checks = {random_chk, adv_chk, kr_chk, zero_chk};
    return rep;
}

// --- oracle --------------------------------------------------------------------------

inline SuiteReport suite_oracle(std::uint64_t seed, int pairs = 10000, int shapes = 100) {
    SuiteReport rep;
    rep.suite = "oracle";
    rep.seed = seed;
    Check mono{"friction_monotonicity", 0, 0, 0.0, 0.0, nullptr};
    Check cost{"cost_mapping", 0, 0, 0.0, 1e-12, nullptr};
    Check equi{"rotation_equivariance", 0, 0, 0.0, 0.0, nullptr};

    const auto train = env::default_train_distribution(), test = env::default_test_distribution();
    auto make_env = [&](Rng& rng, int which) {
        switch (which % 3) {
            case 0: return env::rasterize(env::sample_shape(train, rng), env::kDefaultGrid);
            case 1: return env::rasterize(env::sample_shape(test, rng), env::kDefaultGrid);
            default: return env::generate_dr_object(train, rng, env::kDefaultGrid).heightmap;
        }
    };

    int seen_first = 0, seen_fifth = 0;
    for (int k = 0; k < pairs; ++k) {
        Rng rng = make_rng(derive_seed(seed, "oracle-pair", static_cast<std::uint64_t>(k)));
        env::Heightmap h = make_env(rng, k);
        if (k % 4 == 3) h = env::gaussian_augment(h, 0.2, rng);
        const int g = h.size;
        grasp::GraspAction a{};
        a.bin = std::uniform_int_distribution<int>(0, grasp::kOrientations - 1)(rng);
        std::vector<std::pair<int, int>> occ;
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c)
                if (h.at(r, c) >= 0.25) occ.emplace_back(r, c);
        if (k % 2 == 0 && !occ.empty()) {
            const auto [r, c] = occ[std::uniform_int_distribution<std::size_t>(0, occ.size() - 1)(rng)];
            a.row = r;
            a.col = c;
        } else {
            a.row = std::uniform_int_distribution<int>(0, g - 1)(rng);
            a.col = std::uniform_int_distribution<int>(0, g - 1)(rng);
        }
        bool succeeded = false;
        std::optional<int> first;
        for (int i = 0; i < grasp::kSweepCount; ++i) {
            const bool s = grasp::execute_grasp(h, a, grasp::sweep_mu(i)).success;
            ++mono.count;
            if (succeeded && !s)
                mono.fail(json{{"case", k}, {"row", a.row}, {"col", a.col}, {"bin", a.bin}, {"mu", grasp::sweep_mu(i)}});
            if (s && !first) first = i;
            succeeded = succeeded || s;
        }
        // End-to-end label against the sweep.
        const auto label = grasp::label_cost_for_action(h, a);
        const double expected = first ? *first / 10.0 : 1.0;
        ++cost.count;
        cost.worst = std::max(cost.worst, std::abs(label.value - expected));
        if (std::abs(label.value - expected) > cost.threshold)
            cost.fail(json{{"case", k}, {"label", label.value}, {"expected", expected}});
        if (first && *first == 0) ++seen_first;
        if (first && *first == 4) ++seen_fifth;
    }
    // Fixed spot checks of the friction-to-cost table.
    const std::vector<std::pair<std::optional<int>, double>> spots{{0, 0.0}, {4, 0.4}, {std::nullopt, 1.0}};
    for (const auto& [idx, want] : spots) {
        const double got = grasp::cost_from_sweep_index(idx).value;
        ++cost.count;
        if (std::abs(got - want) > cost.threshold) cost.fail(json{{"sweep_index", idx ? *idx : -1}, {"cost", got}, {"expected", want}});
    }
    ++cost.count;
    if (std::abs(grasp::sweep_mu(0) - 0.10) > 1e-12 || std::abs(grasp::sweep_mu(4) - 0.30) > 1e-12 ||
        std::abs(grasp::sweep_mu(9) - 0.55) > 1e-12)
        cost.fail(json{{"sweep", "friction values differ from 0.10 + 0.05 i"}});
    rep.info["pairs_with_first_success_at_0.10"] = seen_first;
    rep.info["pairs_with_first_success_at_0.30"] = seen_fifth;

    for (int k = 0; k < shapes; ++k) {
        Rng rng = make_rng(derive_seed(seed, "oracle-shape", static_cast<std::uint64_t>(k)));
        const env::Heightmap h = make_env(rng, k);
        const env::Heightmap hr = env::rotate90(h);
        const int g = h.size;
        for (int b = 0; b < grasp::kOrientations; ++b)
            for (int r = 0; r < g; ++r)
                for (int c = 0; c < g; ++c) {
                    const grasp::GraspAction a{r, c, b};
                    const auto ar = grasp::rotate90(a, g);
                    const auto o = grasp::execute_grasp(h, a, 0.3);
                    const auto orot = grasp::execute_grasp(hr, ar, 0.3);
                    const auto l = grasp::label_cost_for_action(h, a), lr = grasp::label_cost_for_action(hr, ar);
                    ++equi.count;
                    if (o.success != orot.success || o.reason != orot.reason || l.value != lr.value)
                        equi.fail(json{{"shape", k},
                                   {"action", {r, c, b}},
                                   {"reason", grasp::to_string(o.reason)},
                                   {"rotated_reason", grasp::to_string(orot.reason)},
                                   {"cost", l.value},
                                   {"rotated_cost", lr.value}});
                }
    }
    rep.checks = {mono, cost, equi};
    return rep;
}

inline SuiteReport run_suite(const std::string& name, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteReport r;
    if (name == "gradcheck") r = suite_gradcheck(seed);
    else if (name == "lipschitz") r = suite_lipschitz(seed);
    else if (name == "ot") r = suite_ot(seed);
    else if (name == "theorem1") r = suite_theorem1(seed);
    else if (name == "oracle") r = suite_oracle(seed);
    else throw UsageError("unknown suite '" + name + "'");
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace dragen::verify
