#pragma once
// Run configuration: presets, JSON round trip with strict key checking, and the
// config hash stamped on every artifact.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dragen/advgen.hpp"
#include "dragen/common.hpp"
#include "dragen/embed.hpp"
#include "dragen/env.hpp"
#include "dragen/grasp.hpp"
#include "dragen/policy.hpp"

namespace dragen::config {

using json = nlohmann::json;

enum class Method { dragen, dr, gaussian, none };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::dragen: return "dragen";
        case Method::dr: return "dr";
        case Method::gaussian: return "gaussian";
        case Method::none: return "none";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "dragen") return Method::dragen;
    if (s == "dr") return Method::dr;
    if (s == "gaussian") return Method::gaussian;
    if (s == "none") return Method::none;
    throw ConfigError("unknown method '" + s + "' (expected dragen, dr, gaussian or none)");
}

struct RunConfig {
    std::string preset = "desk";
    Method method = Method::dragen;
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 0;  // test set; shared by runs that are compared
    int grid = env::kDefaultGrid;
    int iterations = 10;
    int initial_size = 200;
    int test_size = 200;
    int k_per_iteration = 96;
    std::int64_t pretrain_steps = 1000;
    std::int64_t retrain_steps = 1000;
    double gaussian_sigma = 0.05;
    std::vector<double> eval_frictions{0.3, 0.4, 0.5};
    bool save_checkpoints = true;
    embed::EmbedConfig embed{};
    policy::PolicyConfig policy{};
    advgen::AscentConfig ascent{};
    env::DistributionConfig train_distribution = env::default_train_distribution();
    env::DistributionConfig test_distribution = env::default_test_distribution();

    void validate() const {
        if (preset != "desk" && preset != "paper") throw ConfigError("preset must be 'desk' or 'paper'");
        if (grid < 4) throw ConfigError("grid must be >= 4");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (k_per_iteration < 0) throw ConfigError("k_per_iteration must be >= 0");
        if (initial_size < 1) throw ConfigError("initial_size must be >= 1");
        if (test_size < 1) throw ConfigError("test_size must be >= 1");
        if (pretrain_steps < 0 || retrain_steps < 0) throw ConfigError("policy step counts must be >= 0");
        if (gaussian_sigma < 0.0) throw ConfigError("gaussian_sigma must be >= 0");
        if (eval_frictions.empty()) throw ConfigError("eval_frictions must not be empty");
        for (double mu : eval_frictions)
            if (!(mu > 0.0)) throw ConfigError("eval_frictions must be > 0");
        if (embed.grid != grid) throw ConfigError("embed.grid must equal grid");
        if (embed.latent < 1 || embed.encoder_hidden < 1 || embed.decoder_hidden < 1 || embed.predictor_hidden < 1)
            throw ConfigError("embedding widths must be >= 1");
        if (!(embed.lr > 0.0) || embed.batch_size < 1 || embed.first_epochs < 0 || embed.later_epochs < 0)
            throw ConfigError("invalid embedding training settings");
        embed.weights.validate();
        if (policy.patch < 1 || policy.patch % 2 == 0) throw ConfigError("policy.patch must be odd and positive");
        if (policy.hidden < 1 || !(policy.lr > 0.0) || policy.batch_size < 1 || policy.replay_ratio < 0 ||
            policy.buffer_capacity < 1 || policy.success_window < 1)
            throw ConfigError("invalid policy training settings");
        if (!(policy.train_mu > 0.0)) throw ConfigError("policy.train_mu must be > 0");
        if (policy.eps_start < 0 || policy.eps_start > 1 || policy.eps_end < 0 || policy.eps_end > 1)
            throw ConfigError("exploration rates must lie in [0, 1]");
        if (!(policy.grasp.opening > 0.0) || !(policy.grasp.march_step > 0.0))
            throw ConfigError("invalid grasp geometry");
        ascent.validate();
        train_distribution.validate();
        test_distribution.validate();
    }
};

/// Desk scale: 10 outer iterations of 1000 policy steps each.
inline RunConfig desk_preset() { return RunConfig{}; }

/// Published scale for the 2D task: 30 iterations of 5000 policy steps.
inline RunConfig paper_preset() {
    RunConfig c;
    c.preset = "paper";
    c.iterations = 30;
    c.pretrain_steps = 5000;
    c.retrain_steps = 5000;
    return c;
}

inline RunConfig preset(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "paper") return paper_preset();
    throw ConfigError("unknown preset '" + name + "'");
}

// --- JSON --------------------------------------------------------------------------

inline json range_json(const env::Range& r) { return json::array({r.lo, r.hi}); }

inline env::Range range_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(what + ": expected [low, high]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline json distribution_json(const env::DistributionConfig& d) {
    json j;
    j["label"] = d.label;
    j["weights"] = d.weights;
    j["rotation"] = range_json(d.rotation);
    j["offset"] = range_json(d.offset);
    for (std::size_t k = 0; k < 3; ++k)
        j[env::to_string(env::kAllKinds[k])] = {{"size_a", range_json(d.kinds[k].size_a)},
                                                {"size_b", range_json(d.kinds[k].size_b)}};
    return j;
}

inline env::DistributionConfig distribution_from(const json& j) {
    env::DistributionConfig d;
    d.label = j.at("label").get<std::string>();
    d.weights = j.at("weights").get<std::array<double, 3>>();
    d.rotation = range_from(j.at("rotation"), d.label + ".rotation");
    d.offset = range_from(j.at("offset"), d.label + ".offset");
    for (std::size_t k = 0; k < 3; ++k) {
        const std::string name = env::to_string(env::kAllKinds[k]);
        const auto& kj = j.at(name);
        d.kinds[k].size_a = range_from(kj.at("size_a"), d.label + "." + name + ".size_a");
        d.kinds[k].size_b = range_from(kj.at("size_b"), d.label + "." + name + ".size_b");
    }
    return d;
}

/// Full resolved configuration. Everything that can change results is included;
/// the worker count is not part of the config.
inline json to_json(const RunConfig& c) {
    json j;
    j["schema"] = "dragen-config/" + std::to_string(kSchemaVersion);
    j["preset"] = c.preset;
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    j["data_seed"] = c.data_seed;
    j["grid"] = c.grid;
    j["loop"] = {{"iterations", c.iterations},
                 {"initial_size", c.initial_size},
                 {"test_size", c.test_size},
                 {"k_per_iteration", c.k_per_iteration},
                 {"pretrain_steps", c.pretrain_steps},
                 {"retrain_steps", c.retrain_steps},
                 {"gaussian_sigma", c.gaussian_sigma},
                 {"eval_frictions", c.eval_frictions},
                 {"save_checkpoints", c.save_checkpoints}};
    const auto& e = c.embed;
    j["embed"] = {{"latent", e.latent},
                  {"encoder_hidden", e.encoder_hidden},
                  {"decoder_hidden", e.decoder_hidden},
                  {"predictor_hidden", e.predictor_hidden},
                  {"alpha1", e.weights.alpha1},
                  {"alpha2", e.weights.alpha2},
                  {"alpha3", e.weights.alpha3},
                  {"gamma_target", e.weights.gamma_target},
                  {"lr", e.lr},
                  {"batch_size", e.batch_size},
                  {"first_epochs", e.first_epochs},
                  {"later_epochs", e.later_epochs},
                  {"train_power_iters", e.train_power_iters},
                  {"report_power_iters", e.report_power_iters}};
    const auto& p = c.policy;
    j["policy"] = {{"patch", p.patch},
                   {"hidden", p.hidden},
                   {"hidden_activation", nn::to_string(p.hidden_activation)},
                   {"lr", p.lr},
                   {"batch_size", p.batch_size},
                   {"replay_ratio", p.replay_ratio},
                   {"buffer_capacity", p.buffer_capacity},
                   {"eps_start", p.eps_start},
                   {"eps_end", p.eps_end},
                   {"train_mu", p.train_mu},
                   {"success_window", p.success_window}};
    j["grasp"] = {{"occupancy_threshold", p.grasp.occupancy_threshold},
                  {"opening", p.grasp.opening},
                  {"angle_tol", p.grasp.angle_tol},
                  {"march_step", p.grasp.march_step}};
    const auto& a = c.ascent;
    j["ascent"] = {{"step_size", a.step_size},
                   {"penalty", a.penalty},
                   {"max_steps", a.max_steps},
                   {"target_fraction", a.target_fraction},
                   {"d_eps", a.d_eps}};
    j["train_distribution"] = distribution_json(c.train_distribution);
    j["test_distribution"] = distribution_json(c.test_distribution);
    return j;
}

namespace detail {

/// Overlays `patch` onto `base`, rejecting keys that `base` does not define and
/// values whose JSON kind differs. Keys starting with '_' are free-form notes.
inline void overlay(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw ConfigError(path + ": expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string& key = it.key();
        if (!key.empty() && key.front() == '_') continue;
        const std::string where = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'");
        json& dst = base[key];
        const json& src = it.value();
        if (dst.is_object()) {
            overlay(dst, src, where);
        } else if (dst.is_number() != src.is_number() || dst.is_string() != src.is_string() ||
                   dst.is_array() != src.is_array() || dst.is_boolean() != src.is_boolean()) {
            throw ConfigError("config key '" + where + "' has the wrong type");
        } else if (dst.is_number_unsigned() && src.is_number_integer() && src.get<std::int64_t>() < 0) {
            throw ConfigError("config key '" + where + "' must be >= 0");
        } else {
            dst = src;
        }
    }
}

}  // namespace detail

inline RunConfig from_full_json(const json& j) {
    try {
        RunConfig c;
        c.preset = j.at("preset").get<std::string>();
        c.method = method_from_string(j.at("method").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
        c.data_seed = j.at("data_seed").get<std::uint64_t>();
        c.grid = j.at("grid").get<int>();
        const auto& l = j.at("loop");
        c.iterations = l.at("iterations").get<int>();
        c.initial_size = l.at("initial_size").get<int>();
        c.test_size = l.at("test_size").get<int>();
        c.k_per_iteration = l.at("k_per_iteration").get<int>();
        c.pretrain_steps = l.at("pretrain_steps").get<std::int64_t>();
        c.retrain_steps = l.at("retrain_steps").get<std::int64_t>();
        c.gaussian_sigma = l.at("gaussian_sigma").get<double>();
        c.eval_frictions = l.at("eval_frictions").get<std::vector<double>>();
        c.save_checkpoints = l.at("save_checkpoints").get<bool>();
        const auto& e = j.at("embed");
        c.embed.grid = c.grid;
        c.embed.latent = e.at("latent").get<int>();
        c.embed.encoder_hidden = e.at("encoder_hidden").get<int>();
        c.embed.decoder_hidden = e.at("decoder_hidden").get<int>();
        c.embed.predictor_hidden = e.at("predictor_hidden").get<int>();
        c.embed.weights.alpha1 = e.at("alpha1").get<double>();
        c.embed.weights.alpha2 = e.at("alpha2").get<double>();
        c.embed.weights.alpha3 = e.at("alpha3").get<double>();
        c.embed.weights.gamma_target = e.at("gamma_target").get<double>();
        c.embed.lr = e.at("lr").get<double>();
        c.embed.batch_size = e.at("batch_size").get<int>();
        c.embed.first_epochs = e.at("first_epochs").get<int>();
        c.embed.later_epochs = e.at("later_epochs").get<int>();
        c.embed.train_power_iters = e.at("train_power_iters").get<int>();
        c.embed.report_power_iters = e.at("report_power_iters").get<int>();
        const auto& p = j.at("policy");
        c.policy.patch = p.at("patch").get<int>();
        c.policy.hidden = p.at("hidden").get<int>();
        c.policy.hidden_activation = nn::activation_from_string(p.at("hidden_activation").get<std::string>());
        c.policy.lr = p.at("lr").get<double>();
        c.policy.batch_size = p.at("batch_size").get<int>();
        c.policy.replay_ratio = p.at("replay_ratio").get<int>();
        c.policy.buffer_capacity = p.at("buffer_capacity").get<std::size_t>();
        c.policy.eps_start = p.at("eps_start").get<double>();
        c.policy.eps_end = p.at("eps_end").get<double>();
        c.policy.train_mu = p.at("train_mu").get<double>();
        c.policy.success_window = p.at("success_window").get<int>();
        const auto& g = j.at("grasp");
        c.policy.grasp.occupancy_threshold = g.at("occupancy_threshold").get<double>();
        c.policy.grasp.opening = g.at("opening").get<double>();
        c.policy.grasp.angle_tol = g.at("angle_tol").get<double>();
        c.policy.grasp.march_step = g.at("march_step").get<double>();
        const auto& a = j.at("ascent");
        c.ascent.step_size = a.at("step_size").get<double>();
        c.ascent.penalty = a.at("penalty").get<double>();
        c.ascent.max_steps = a.at("max_steps").get<int>();
        c.ascent.target_fraction = a.at("target_fraction").get<double>();
        c.ascent.d_eps = a.at("d_eps").get<double>();
        c.train_distribution = distribution_from(j.at("train_distribution"));
        c.test_distribution = distribution_from(j.at("test_distribution"));
        c.validate();
        return c;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
}

/// Parses a user config: the preset named in it (default desk) supplies every
/// value not given explicitly.
inline RunConfig from_json(const json& user) {
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    if (user.contains("schema")) {
        const auto s = user.at("schema");
        if (!s.is_string() || s.get<std::string>() != "dragen-config/" + std::to_string(kSchemaVersion))
            throw ConfigError("unsupported config schema");
    }
    const std::string name = user.contains("preset") && user.at("preset").is_string()
                                 ? user.at("preset").get<std::string>()
                                 : std::string("desk");
    json full = to_json(preset(name));
    detail::overlay(full, user, "");
    return from_full_json(full);
}

inline RunConfig parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    return from_json(j);
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

/// Hash of the settings that determine the test set.
inline std::string test_set_key(const RunConfig& c) {
    json j{{"data_seed", c.data_seed},
           {"grid", c.grid},
           {"test_size", c.test_size},
           {"test_distribution", distribution_json(c.test_distribution)}};
    return hex64(fnv1a64(j.dump()));
}

}  // namespace dragen::config
