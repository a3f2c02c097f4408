#pragma once
// Dense network kernels: batched forward/backward, Adam, spectral norm.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dragen/common.hpp"

namespace dragen::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { sigmoid, relu, tanh, identity };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct MlpSpec {
    std::vector<std::size_t> widths;       // input width first
    std::vector<Activation> activations;   // one per weight layer

    std::size_t layers() const { return activations.size(); }

    void validate() const {
        if (widths.size() < 2) throw ConfigError("MlpSpec needs at least two widths");
        if (activations.size() != widths.size() - 1)
            throw ConfigError("MlpSpec needs one activation per layer");
        for (auto w : widths)
            if (w == 0) throw ConfigError("MlpSpec widths must be >= 1");
    }
};

/// weights[l] is (out x in); biases[l] has length out.
struct MlpParams {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    std::vector<Activation> activations;

    std::size_t layers() const { return weights.size(); }
    std::size_t input_width() const { return static_cast<std::size_t>(weights.front().cols()); }
    std::size_t output_width() const { return static_cast<std::size_t>(weights.back().rows()); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layers(); ++l)
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    bool all_finite() const {
        for (std::size_t l = 0; l < layers(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }
};

/// Same shapes as `like`, all zero.
inline MlpParams zeros_like(const MlpParams& like) {
    MlpParams out;
    out.activations = like.activations;
    for (std::size_t l = 0; l < like.layers(); ++l) {
        out.weights.push_back(Matrix::Zero(like.weights[l].rows(), like.weights[l].cols()));
        out.biases.push_back(Vector::Zero(like.biases[l].size()));
    }
    return out;
}

/// Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    MlpParams p;
    p.activations = spec.activations;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const auto in = spec.widths[l];
        const auto out = spec.widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(out)));
    }
    return p;
}

/// Layer outputs of a forward pass; activations[0] is the input batch.
struct ForwardCache {
    std::vector<Matrix> activations;
};

inline void apply_activation(Activation a, Matrix& z) {
    switch (a) {
        case Activation::sigmoid:
            z = z.unaryExpr([](double v) { return sigmoid(v); });
            break;
        case Activation::relu:
            z = z.cwiseMax(0.0);
            break;
        case Activation::tanh:
            z = z.array().tanh().matrix();
            break;
        case Activation::identity:
            break;
    }
}

/// Multiplies `grad` in place by the activation derivative, expressed through the
/// post-activation values `out`.
inline void apply_activation_grad(Activation a, const Matrix& out, Matrix& grad) {
    switch (a) {
        case Activation::sigmoid:
            grad.array() *= out.array() * (1.0 - out.array());
            break;
        case Activation::relu:
            grad.array() *= (out.array() > 0.0).cast<double>();
            break;
        case Activation::tanh:
            grad.array() *= 1.0 - out.array().square();
            break;
        case Activation::identity:
            break;
    }
}

/// Batched forward pass: one sample per row of `x`.
inline Matrix forward(const MlpParams& p, const Matrix& x, ForwardCache* cache = nullptr) {
    if (static_cast<std::size_t>(x.cols()) != p.input_width())
        throw ConfigError("forward: input width " + std::to_string(x.cols()) + " does not match layer width " +
                          std::to_string(p.input_width()));
    if (cache) {
        cache->activations.clear();
        cache->activations.reserve(p.layers() + 1);
        cache->activations.push_back(x);
    }
    Matrix a = x;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        Matrix z = a * p.weights[l].transpose();
        z.rowwise() += p.biases[l].transpose();
        apply_activation(p.activations[l], z);
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

inline Vector forward(const MlpParams& p, const Vector& x, ForwardCache* cache = nullptr) {
    Matrix row = x.transpose();
    Matrix out = forward(p, row, cache);
    return out.row(0).transpose();
}

struct BackwardResult {
    MlpParams grads;
    Matrix grad_input;
};

/// Gradients of sum(grad_output .* output) with respect to parameters and inputs.
inline BackwardResult backward(const MlpParams& p, const ForwardCache& cache, const Matrix& grad_output) {
    if (cache.activations.size() != p.layers() + 1)
        throw UsageError("backward: cache does not come from a forward pass of this network");
    for (std::size_t l = 0; l < p.layers(); ++l) {
        if (cache.activations[l + 1].cols() != p.weights[l].rows() ||
            cache.activations[l].cols() != p.weights[l].cols())
            throw UsageError("backward: cache shapes do not match network layer " + std::to_string(l));
    }
    const auto& last = cache.activations.back();
    if (grad_output.rows() != last.rows() || grad_output.cols() != last.cols())
        throw UsageError("backward: grad_output shape does not match cached output");

    BackwardResult r;
    r.grads = zeros_like(p);
    Matrix delta = grad_output;
    for (std::size_t l = p.layers(); l-- > 0;) {
        apply_activation_grad(p.activations[l], cache.activations[l + 1], delta);
        r.grads.weights[l].noalias() = delta.transpose() * cache.activations[l];
        r.grads.biases[l] = delta.colwise().sum().transpose();
        Matrix prev = delta * p.weights[l];
        delta = std::move(prev);
    }
    r.grad_input = std::move(delta);
    return r;
}

inline BackwardResult backward(const MlpParams& p, const ForwardCache& cache, const Vector& grad_output) {
    Matrix row = grad_output.transpose();
    return backward(p, cache, row);
}

inline void add_scaled(MlpParams& into, const MlpParams& g, double scale = 1.0) {
    for (std::size_t l = 0; l < into.layers(); ++l) {
        into.weights[l] += scale * g.weights[l];
        into.biases[l] += scale * g.biases[l];
    }
}

// --- Adam -------------------------------------------------------------------

struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(const MlpParams& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.first_moment = zeros_like(like);
    s.second_moment = zeros_like(like);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr) {
    if (grads.layers() != params.layers() || state.first_moment.layers() != params.layers())
        throw ConfigError("adam_step: layer count mismatch");
    for (std::size_t l = 0; l < params.layers(); ++l) {
        if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
            grads.biases[l].size() != params.biases[l].size())
            throw ConfigError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
        if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite())
            throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(l));
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1, b2 = state.beta2, eps = state.eps;
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < params.layers(); ++l) {
        update(params.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
        update(params.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
    }
}

// --- spectral norm ----------------------------------------------------------

/// Largest singular value with its singular pair; d sigma / dW = u v^T.
struct SpectralNorm {
    double sigma = 0.0;
    Vector u;
    Vector v;
    bool degenerate = false;  // W == 0
};

/// Power iteration on W^T W. Starts from `warm_v` when given (and nonzero), else
/// from the normalized all-ones vector. sigma is non-decreasing in `iters`.
inline SpectralNorm spectral_norm(const Matrix& w, int iters, const Vector* warm_v = nullptr) {
    if (iters < 1) throw ConfigError("spectral_norm: iters must be >= 1");
    SpectralNorm r;
    const auto m = w.rows(), n = w.cols();
    if (m == 0 || n == 0) throw ConfigError("spectral_norm: empty matrix");
    if (w.cwiseAbs().maxCoeff() == 0.0) {
        r.degenerate = true;
        r.u = Vector::Unit(m, 0);
        r.v = Vector::Unit(n, 0);
        return r;
    }
    Vector v = (warm_v && warm_v->size() == n && warm_v->norm() > 0.0) ? Vector(warm_v->normalized())
                                                                        : Vector(Vector::Ones(n).normalized());
    Vector wv = w * v;
    if (wv.norm() == 0.0) {
        // Start vector in the null space; fall back to the row with the largest norm.
        Eigen::Index best = 0;
        w.rowwise().norm().maxCoeff(&best);
        v = w.row(best).transpose().normalized();
        wv = w * v;
    }
    for (int i = 0; i < iters; ++i) {
        Vector wtu = w.transpose() * wv;
        const double nrm = wtu.norm();
        if (nrm == 0.0) break;
        v = wtu / nrm;
        wv = w * v;
    }
    r.sigma = wv.norm();
    r.u = wv / r.sigma;
    r.v = v;
    return r;
}

}  // namespace dragen::nn
