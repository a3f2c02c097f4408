#pragma once
// Pixel-scoring grasp policy. The heightmap is resampled into one frame per
// orientation bin (jaw axis horizontal), and a shared MLP scores the 9x9 patch
// around every pixel of every frame.

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dragen/common.hpp"
#include "dragen/env.hpp"
#include "dragen/grasp.hpp"
#include "dragen/nn.hpp"

namespace dragen::policy {

using grasp::GraspAction;
using grasp::kOrientations;

struct PolicyConfig {
    int patch = 9;
    int hidden = 32;
    nn::Activation hidden_activation = nn::Activation::tanh;
    double lr = 3e-3;
    int batch_size = 128;
    int replay_ratio = 4;
    std::size_t buffer_capacity = 1000;
    double eps_start = 1.0;
    double eps_end = 0.2;
    double train_mu = 0.3;
    int success_window = 100;
    grasp::GraspConfig grasp{};
};

struct Policy {
    nn::MlpParams scorer;
    int patch = 9;
};

inline Policy init_policy(const PolicyConfig& cfg, Rng& rng) {
    if (cfg.patch < 1 || cfg.patch % 2 == 0) throw ConfigError("policy patch size must be odd and positive");
    nn::MlpSpec spec{{static_cast<std::size_t>(cfg.patch * cfg.patch), static_cast<std::size_t>(cfg.hidden), 1},
                     {cfg.hidden_activation, nn::Activation::sigmoid}};
    return {nn::init_mlp(spec, rng), cfg.patch};
}

/// Original-frame pixel shown at rotated-frame pixel (qr, qc) of orientation `bin`:
/// round(center + R(30 * bin) (q - center)).
inline std::pair<int, int> source_pixel(int grid, int bin, int qr, int qc) {
    const grasp::Vec2 u = grasp::jaw_axis(bin);
    const double cg = env::grid_center(grid);
    const double dx = qc - cg, dy = qr - cg;
    const double x = cg + u.x * dx - u.y * dy;
    const double y = cg + u.y * dx + u.x * dy;
    return {static_cast<int>(std::lround(y)), static_cast<int>(std::lround(x))};
}

/// Heightmap resampled (nearest neighbour, zero fill) so that the jaw axis of
/// `bin` is horizontal.
inline env::Heightmap rotated_view(const env::Heightmap& h, int bin) {
    env::Heightmap out(h.size);
    for (int r = 0; r < h.size; ++r)
        for (int c = 0; c < h.size; ++c) {
            auto [sr, sc] = source_pixel(h.size, bin, r, c);
            out.at(r, c) = h.in_grid(sr, sc) ? h.at(sr, sc) : 0.0;
        }
    return out;
}

/// Zero-padded patch of `view` centered at (r, c), written row-major into `out`.
inline void extract_patch(const env::Heightmap& view, int r, int c, int patch, std::span<double> out) {
    const int half = patch / 2;
    std::size_t k = 0;
    for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
            const int rr = r + dr, cc = c + dc;
            out[k++] = view.in_grid(rr, cc) ? view.at(rr, cc) : 0.0;
        }
}

/// Scores indexed [bin][row][col] in the rotated frames.
struct ScoreTensor {
    int grid = 0;
    std::vector<double> values;

    double at(int bin, int r, int c) const {
        return values[static_cast<std::size_t>((bin * grid + r) * grid + c)];
    }
    std::size_t cells() const { return values.size(); }
};

inline ScoreTensor score_maps(const env::Heightmap& h, const Policy& p) {
    const int g = h.size;
    const int pp = p.patch * p.patch;
    nn::Matrix patches(kOrientations * g * g, pp);
    for (int b = 0; b < kOrientations; ++b) {
        const env::Heightmap view = rotated_view(h, b);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) {
                const auto row = (b * g + r) * g + c;
                extract_patch(view, r, c, p.patch, std::span<double>(patches.row(row).data(), static_cast<std::size_t>(pp)));
            }
    }
    const nn::Matrix out = nn::forward(p.scorer, patches);
    ScoreTensor s;
    s.grid = g;
    s.values.assign(out.data(), out.data() + out.size());
    return s;
}

/// A chosen score cell and the grasp it executes in the original frame.
struct ActionChoice {
    int bin = 0;
    int frame_row = 0;
    int frame_col = 0;
    GraspAction action;
};

/// Maps a rotated-frame cell back to an original-frame grasp, clamped to the grid.
inline ActionChoice choice_for_cell(int grid, std::size_t cell) {
    ActionChoice a;
    const auto per_bin = static_cast<std::size_t>(grid * grid);
    a.bin = static_cast<int>(cell / per_bin);
    const auto rem = cell % per_bin;
    a.frame_row = static_cast<int>(rem / static_cast<std::size_t>(grid));
    a.frame_col = static_cast<int>(rem % static_cast<std::size_t>(grid));
    auto [r, c] = source_pixel(grid, a.bin, a.frame_row, a.frame_col);
    a.action = {std::clamp(r, 0, grid - 1), std::clamp(c, 0, grid - 1), a.bin};
    return a;
}

/// Greedy cell: first maximum in (bin, row, col) order.
inline std::size_t argmax_cell(const ScoreTensor& s) {
    return static_cast<std::size_t>(std::max_element(s.values.begin(), s.values.end()) - s.values.begin());
}

/// epsilon-greedy over all bins x pixels.
inline ActionChoice select_action(const ScoreTensor& s, double eps, Rng& rng) {
    if (eps < 0.0 || eps > 1.0) throw ConfigError("select_action: epsilon must be in [0, 1]");
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < eps) {
        const auto cell = std::uniform_int_distribution<std::size_t>(0, s.cells() - 1)(rng);
        return choice_for_cell(s.grid, cell);
    }
    return choice_for_cell(s.grid, argmax_cell(s));
}

inline ActionChoice greedy_action(const env::Heightmap& h, const Policy& p) {
    const ScoreTensor s = score_maps(h, p);
    return choice_for_cell(s.grid, argmax_cell(s));
}

/// Cost of an environment under the current greedy policy.
inline grasp::CostLabel label_cost(const env::Heightmap& h, const Policy& p, const grasp::GraspConfig& cfg = {}) {
    return grasp::label_cost_for_action(h, greedy_action(h, p).action, cfg);
}

// --- replay training ------------------------------------------------------------

struct Transition {
    std::size_t env_index = 0;
    ActionChoice choice;
    int outcome = 0;
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 1000) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    }

    void push(const Transition& t) {
        if (items_.size() == capacity_) items_.pop_front();
        items_.push_back(t);
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    /// Oldest first.
    const Transition& at(std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

struct ExplorationSchedule {
    double start = 1.0;
    double end = 0.2;
    std::int64_t anneal_steps = 1;

    double epsilon(std::int64_t step) const {
        if (anneal_steps <= 0) return end;
        const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
        return start + (end - start) * f;
    }
};

struct LossAndGrads {
    double loss = 0.0;
    nn::MlpParams grads;
};

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy of the scores of `patches` (one per row) against 0/1 outcomes.
inline LossAndGrads bce_loss(const nn::MlpParams& scorer, const nn::Matrix& patches, std::span<const int> outcomes) {
    nn::ForwardCache cache;
    const nn::Matrix p = nn::forward(scorer, patches, &cache);
    const auto n = static_cast<double>(patches.rows());
    nn::Matrix dp(p.rows(), 1);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double q = std::clamp(p(i, 0), kProbClamp, 1.0 - kProbClamp);
        const int y = outcomes[static_cast<std::size_t>(i)];
        loss -= y ? std::log(q) : std::log(1.0 - q);
        dp(i, 0) = (y ? -1.0 / q : 1.0 / (1.0 - q)) / n;
    }
    LossAndGrads r;
    r.loss = loss / n;
    r.grads = nn::backward(scorer, cache, dp).grads;
    return r;
}

inline void transition_patch(const env::Heightmap& h, const ActionChoice& a, int patch, std::span<double> out) {
    const int half = patch / 2;
    std::size_t k = 0;
    for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
            const int r = a.frame_row + dr, c = a.frame_col + dc;
            double v = 0.0;
            if (h.in_grid(r, c)) {
                auto [sr, sc] = source_pixel(h.size, a.bin, r, c);
                if (h.in_grid(sr, sc)) v = h.at(sr, sc);
            }
            out[k++] = v;
        }
}

/// One Adam step on the BCE of the executed cells only. Returns the loss, or
/// nullopt when the batch was skipped because of a non-finite loss.
inline std::optional<double> policy_update(std::span<const Transition> batch, const std::vector<env::Heightmap>& envs,
                                           Policy& p, nn::AdamState& opt, double lr) {
    if (batch.empty()) throw ConfigError("policy_update: empty batch");
    const int pp = p.patch * p.patch;
    nn::Matrix patches(static_cast<Eigen::Index>(batch.size()), pp);
    std::vector<int> outcomes(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        transition_patch(envs.at(batch[i].env_index), batch[i].choice, p.patch,
                         std::span<double>(patches.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(pp)));
        outcomes[i] = batch[i].outcome;
    }
    LossAndGrads lg = bce_loss(p.scorer, patches, outcomes);
    if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) return std::nullopt;
    nn::adam_step(p.scorer, lg.grads, opt, lr);
    return lg.loss;
}

/// Mutable training state that survives between outer iterations.
struct PolicyTrainer {
    Policy policy;
    nn::AdamState opt;
    ReplayBuffer buffer;
    PolicyConfig cfg;

    PolicyTrainer(Policy p, const PolicyConfig& c)
        : policy(std::move(p)), opt(nn::make_adam(policy.scorer)), buffer(c.buffer_capacity), cfg(c) {}
};

struct TrainReport {
    std::int64_t steps = 0;
    double best_trailing_success = 0.0;
    std::int64_t best_step = 0;
    double mean_reward = 0.0;
    std::int64_t skipped_batches = 0;
    std::vector<int> rewards;  // per step
};

/// epsilon-greedy replay training on environments `envs`. At the end the policy
/// is restored to the step with the highest trailing success rate.
inline TrainReport train_policy(const std::vector<env::Heightmap>& envs, PolicyTrainer& t, std::int64_t steps,
                                const ExplorationSchedule& schedule, Rng& rng) {
    TrainReport rep;
    if (steps <= 0) return rep;
    if (envs.empty()) throw ConfigError("train_policy: empty environment set");
    const auto& cfg = t.cfg;
    std::deque<int> window;
    int window_sum = 0;
    double total = 0.0;
    std::optional<nn::MlpParams> best;
    double best_rate = -1.0;
    std::vector<Transition> batch;
    std::uniform_int_distribution<std::size_t> pick_env(0, envs.size() - 1);
    const auto window_len = static_cast<std::size_t>(std::min<std::int64_t>(cfg.success_window, steps));
    for (std::int64_t step = 0; step < steps; ++step) {
        const std::size_t e = pick_env(rng);
        const double eps = schedule.epsilon(step);
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        ActionChoice choice;
        const auto cells = static_cast<std::size_t>(kOrientations * envs[e].size * envs[e].size);
        if (u < eps) {
            choice = choice_for_cell(envs[e].size, std::uniform_int_distribution<std::size_t>(0, cells - 1)(rng));
        } else {
            const ScoreTensor s = score_maps(envs[e], t.policy);
            choice = choice_for_cell(s.grid, argmax_cell(s));
        }
        const int r = grasp::execute_grasp(envs[e], choice.action, cfg.train_mu, cfg.grasp).success ? 1 : 0;
        t.buffer.push({e, choice, r});
        rep.rewards.push_back(r);
        total += r;

        const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), t.buffer.size());
        std::uniform_int_distribution<std::size_t> pick(0, t.buffer.size() - 1);
        for (int k = 0; k < cfg.replay_ratio; ++k) {
            batch.clear();
            for (std::size_t i = 0; i < bs; ++i) batch.push_back(t.buffer.at(pick(rng)));
            if (!policy_update(batch, envs, t.policy, t.opt, cfg.lr)) ++rep.skipped_batches;
        }

        window.push_back(r);
        window_sum += r;
        if (window.size() > window_len) {
            window_sum -= window.front();
            window.pop_front();
        }
        if (window.size() == window_len) {
            const double rate = static_cast<double>(window_sum) / static_cast<double>(window_len);
            if (rate > best_rate) {
                best_rate = rate;
                best = t.policy.scorer;
                rep.best_step = step + 1;
            }
        }
    }
    rep.steps = steps;
    rep.best_trailing_success = best_rate;
    rep.mean_reward = total / static_cast<double>(steps);
    if (best) t.policy.scorer = std::move(*best);
    return rep;
}

}  // namespace dragen::policy
