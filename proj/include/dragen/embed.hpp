#pragma once
// Autoencoder over heightmaps with a Lipschitz-regularized cost predictor.
//
// Joint loss: L = L_rec + a1 L_pred + a2 L_lip + a3 L_norm with
//   L_rec  mean squared pixel error of decode(encode(E)),
//   L_pred mean squared error of predicted vs. labelled cost,
//   L_lip  (|psi0|_2 |psi1|_2 / 16 - target)^2,
//   L_norm mean squared latent norm.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dragen/common.hpp"
#include "dragen/distribution.hpp"
#include "dragen/env.hpp"
#include "dragen/nn.hpp"

namespace dragen::embed {

struct EmbedLossWeights {
    double alpha1 = 0.1;  // cost prediction
    double alpha2 = 1.0;  // Lipschitz target
    double alpha3 = 0.1;  // latent norm
    double gamma_target = 0.04;

    void validate() const {
        if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0) throw ConfigError("embedding loss weights must be >= 0");
        if (!(gamma_target > 0)) throw ConfigError("Lipschitz target must be > 0");
    }
};

struct EmbedConfig {
    int grid = env::kDefaultGrid;
    int latent = 16;
    int encoder_hidden = 64;
    int decoder_hidden = 64;
    int predictor_hidden = 16;
    EmbedLossWeights weights{};
    double lr = 1e-3;
    int batch_size = 4;
    int first_epochs = 200;
    int later_epochs = 50;
    int train_power_iters = 5;
    int report_power_iters = 100;
};

struct EmbedParams {
    nn::MlpParams encoder;    // G^2 -> hidden (sigmoid) -> n_z (identity)
    nn::MlpParams decoder;    // n_z -> hidden (sigmoid) -> G^2 (sigmoid)
    nn::MlpParams predictor;  // n_z -> n_h (sigmoid) -> 1 (sigmoid); exactly two weight matrices

    const nn::Matrix& psi0() const { return predictor.weights[0]; }
    const nn::Matrix& psi1() const { return predictor.weights[1]; }
};

inline EmbedParams init_embed(const EmbedConfig& cfg, Rng& rng) {
    const auto pix = static_cast<std::size_t>(cfg.grid * cfg.grid);
    const auto nz = static_cast<std::size_t>(cfg.latent);
    using A = nn::Activation;
    EmbedParams p;
    p.encoder = nn::init_mlp({{pix, static_cast<std::size_t>(cfg.encoder_hidden), nz}, {A::sigmoid, A::identity}}, rng);
    p.decoder = nn::init_mlp({{nz, static_cast<std::size_t>(cfg.decoder_hidden), pix}, {A::sigmoid, A::sigmoid}}, rng);
    p.predictor =
        nn::init_mlp({{nz, static_cast<std::size_t>(cfg.predictor_hidden), 1}, {A::sigmoid, A::sigmoid}}, rng);
    return p;
}

inline nn::Vector flatten(const env::Heightmap& h) {
    return Eigen::Map<const nn::Vector>(h.heights.data(), static_cast<Eigen::Index>(h.heights.size()));
}

inline nn::Vector encode(const EmbedParams& p, const env::Heightmap& h) { return nn::forward(p.encoder, flatten(h)); }

inline env::Heightmap decode(const EmbedParams& p, const nn::Vector& z, int grid) {
    const nn::Vector out = nn::forward(p.decoder, z);
    if (out.size() != grid * grid) throw ConfigError("decode: decoder width does not match grid");
    env::Heightmap h(grid);
    std::copy(out.data(), out.data() + out.size(), h.heights.begin());
    return h;
}

/// Predicted cost sigma(psi1 sigma(psi0 z + b0) + b1), in (0, 1).
inline double predict_cost(const nn::MlpParams& predictor, const nn::Vector& z) {
    return nn::forward(predictor, z)[0];
}

/// Predicted cost and its gradient with respect to z.
inline std::pair<double, nn::Vector> predict_cost_grad(const nn::MlpParams& predictor, const nn::Vector& z) {
    nn::ForwardCache cache;
    const double c = nn::forward(predictor, z, &cache)[0];
    nn::Vector one = nn::Vector::Ones(1);
    const auto back = nn::backward(predictor, cache, one);
    return {c, back.grad_input.row(0).transpose()};
}

/// Lipschitz bound of the two-layer sigmoid predictor: |psi0|_2 |psi1|_2 / 16.
inline double lipschitz_upper_bound(const nn::Matrix& psi0, const nn::Matrix& psi1, int iters = 100) {
    if (psi0.size() == 0 || psi1.size() == 0) throw ConfigError("lipschitz_upper_bound: empty weight matrix");
    return nn::spectral_norm(psi0, iters).sigma * nn::spectral_norm(psi1, iters).sigma / 16.0;
}

inline double lipschitz_upper_bound(const EmbedParams& p, int iters = 100) {
    if (p.predictor.layers() != 2) throw ConfigError("cost predictor must have exactly two weight layers");
    return lipschitz_upper_bound(p.psi0(), p.psi1(), iters);
}

struct LossTerms {
    double rec = 0.0;
    double pred = 0.0;
    double lip = 0.0;
    double norm = 0.0;
    double total = 0.0;
    double lipschitz_bound = 0.0;
};

struct EmbedGrads {
    nn::MlpParams encoder;
    nn::MlpParams decoder;
    nn::MlpParams predictor;
};

/// Power-iteration settings for the spectral norms inside L_lip. With warm
/// vectors the iteration resumes from (and updates) them.
struct SpectralOptions {
    int iters = 100;
    nn::Vector* warm_v0 = nullptr;
    nn::Vector* warm_v1 = nullptr;
};

struct LossResult {
    LossTerms terms;
    EmbedGrads grads;
};

/// Joint loss over a batch: one flattened heightmap per row of `x`, labelled costs in `costs`.
inline LossResult embedding_loss(const nn::Matrix& x, std::span<const double> costs, const EmbedParams& p,
                                 const EmbedLossWeights& w, const SpectralOptions& spec = {}) {
    const auto b = x.rows();
    if (b == 0 || static_cast<std::size_t>(b) != costs.size())
        throw ConfigError("embedding_loss: batch and cost counts differ");
    for (double c : costs)
        if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("embedding_loss: costs must lie in [0, 1]");
    const double nb = static_cast<double>(b);
    const double npix = static_cast<double>(x.cols());

    nn::ForwardCache enc_cache, dec_cache, pred_cache;
    const nn::Matrix z = nn::forward(p.encoder, x, &enc_cache);
    const nn::Matrix recon = nn::forward(p.decoder, z, &dec_cache);
    const nn::Matrix pred = nn::forward(p.predictor, z, &pred_cache);

    LossResult r;
    const nn::Matrix diff = recon - x;
    r.terms.rec = diff.squaredNorm() / (npix * nb);
    nn::Matrix dpred(b, 1);
    double pred_sq = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const double e = pred(i, 0) - costs[static_cast<std::size_t>(i)];
        pred_sq += e * e;
        dpred(i, 0) = w.alpha1 * 2.0 * e / nb;
    }
    r.terms.pred = pred_sq / nb;
    r.terms.norm = z.squaredNorm() / nb;

    const auto s0 = nn::spectral_norm(p.psi0(), spec.iters, spec.warm_v0);
    const auto s1 = nn::spectral_norm(p.psi1(), spec.iters, spec.warm_v1);
    if (spec.warm_v0) *spec.warm_v0 = s0.v;
    if (spec.warm_v1) *spec.warm_v1 = s1.v;
    const double gamma = s0.sigma * s1.sigma / 16.0;
    r.terms.lipschitz_bound = gamma;
    r.terms.lip = (gamma - w.gamma_target) * (gamma - w.gamma_target);
    r.terms.total = r.terms.rec + w.alpha1 * r.terms.pred + w.alpha2 * r.terms.lip + w.alpha3 * r.terms.norm;

    const nn::Matrix drecon = (2.0 / (npix * nb)) * diff;
    auto dec_back = nn::backward(p.decoder, dec_cache, drecon);
    auto pred_back = nn::backward(p.predictor, pred_cache, dpred);
    nn::Matrix dz = dec_back.grad_input + pred_back.grad_input + (w.alpha3 * 2.0 / nb) * z;
    auto enc_back = nn::backward(p.encoder, enc_cache, dz);

    // d gamma / d psi0 = |psi1| u0 v0^T / 16, and symmetrically for psi1.
    const double dlip = w.alpha2 * 2.0 * (gamma - w.gamma_target);
    if (!s0.degenerate && !s1.degenerate) {
        pred_back.grads.weights[0] += dlip * (s1.sigma / 16.0) * (s0.u * s0.v.transpose());
        pred_back.grads.weights[1] += dlip * (s0.sigma / 16.0) * (s1.u * s1.v.transpose());
    }
    r.grads.encoder = std::move(enc_back.grads);
    r.grads.decoder = std::move(dec_back.grads);
    r.grads.predictor = std::move(pred_back.grads);
    return r;
}

inline nn::Matrix stack(const std::vector<env::Heightmap>& maps, std::span<const std::size_t> idx) {
    const auto pix = static_cast<Eigen::Index>(maps.at(idx[0]).heights.size());
    nn::Matrix x(static_cast<Eigen::Index>(idx.size()), pix);
    for (std::size_t i = 0; i < idx.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = flatten(maps.at(idx[i])).transpose();
    return x;
}

/// Parameters plus optimizer and power-iteration state; persists across outer iterations.
struct EmbedModel {
    EmbedConfig cfg;
    EmbedParams params;
    nn::AdamState enc_opt, dec_opt, pred_opt;
    nn::Vector warm_v0, warm_v1;

    EmbedModel(const EmbedConfig& c, Rng& rng) : cfg(c), params(init_embed(c, rng)) {
        enc_opt = nn::make_adam(params.encoder);
        dec_opt = nn::make_adam(params.decoder);
        pred_opt = nn::make_adam(params.predictor);
    }
};

struct EmbedTrainReport {
    std::vector<double> epoch_loss;
    LossTerms final_terms;
};

/// Evaluates the loss terms over a whole set without touching parameters.
inline LossTerms evaluate_terms(const EmbedParams& p, const std::vector<env::Heightmap>& maps,
                                std::span<const double> costs, const EmbedLossWeights& w, int power_iters = 100) {
    std::vector<std::size_t> idx(maps.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return embedding_loss(stack(maps, idx), costs, p, w, {power_iters}).terms;
}

/// Mini-batch Adam on the joint loss.
inline EmbedTrainReport train_embedding(EmbedModel& m, const std::vector<env::Heightmap>& maps,
                                        std::span<const double> costs, int epochs, Rng& rng) {
    EmbedTrainReport rep;
    if (maps.size() != costs.size()) throw ConfigError("train_embedding: every environment needs a cost label");
    if (maps.empty()) throw ConfigError("train_embedding: empty environment set");
    m.cfg.weights.validate();
    std::vector<std::size_t> order(maps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(std::max(1, m.cfg.batch_size));
    std::vector<double> batch_costs;
    int diverged = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const auto n = std::min(bs, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, n);
            batch_costs.clear();
            for (auto i : idx) batch_costs.push_back(costs[i]);
            const auto res = embedding_loss(stack(maps, idx), batch_costs, m.params, m.cfg.weights,
                                            {m.cfg.train_power_iters, &m.warm_v0, &m.warm_v1});
            if (!std::isfinite(res.terms.total))
                throw NumericError("train_embedding: non-finite loss at epoch " + std::to_string(epoch) +
                                   " (rec=" + std::to_string(res.terms.rec) + ", pred=" + std::to_string(res.terms.pred) +
                                   ", lip=" + std::to_string(res.terms.lip) + ", norm=" + std::to_string(res.terms.norm) + ")");
            nn::adam_step(m.params.encoder, res.grads.encoder, m.enc_opt, m.cfg.lr);
            nn::adam_step(m.params.decoder, res.grads.decoder, m.dec_opt, m.cfg.lr);
            nn::adam_step(m.params.predictor, res.grads.predictor, m.pred_opt, m.cfg.lr);
            sum += res.terms.total;
            ++batches;
        }
        const double loss = sum / static_cast<double>(batches);
        rep.epoch_loss.push_back(loss);
        if (loss > 10.0 * rep.epoch_loss.front()) {
            if (++diverged >= 3)
                throw NumericError("train_embedding: diverged (loss " + std::to_string(loss) + " vs initial " +
                                   std::to_string(rep.epoch_loss.front()) + ")");
        } else {
            diverged = 0;
        }
    }
    rep.final_terms = evaluate_terms(m.params, maps, costs, m.cfg.weights, m.cfg.report_power_iters);
    return rep;
}

/// Uniform mixture of the embeddings of `maps`.
inline DiscreteDistribution build_latent_distribution(const EmbedParams& p, const std::vector<env::Heightmap>& maps) {
    if (maps.empty()) throw ConfigError("build_latent_distribution: empty environment set");
    std::vector<nn::Vector> atoms;
    atoms.reserve(maps.size());
    for (const auto& h : maps) atoms.push_back(encode(p, h));
    return DiscreteDistribution::uniform(std::move(atoms));
}

}  // namespace dragen::embed
