#pragma once
// Outer minimax loop and the augmentation baselines, policy evaluation, and the
// cross-run comparison table.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dragen/advgen.hpp"
#include "dragen/checkpoint.hpp"
#include "dragen/common.hpp"
#include "dragen/config.hpp"
#include "dragen/dataset.hpp"
#include "dragen/embed.hpp"
#include "dragen/env.hpp"
#include "dragen/grasp.hpp"
#include "dragen/policy.hpp"

namespace dragen::loop {

namespace fs = std::filesystem;
using json = nlohmann::json;
using config::Method;
using config::RunConfig;

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string mu_label(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", mu);
    return buf;
}

// --- datasets ------------------------------------------------------------------------

inline data::Dataset initial_set(const RunConfig& c) {
    auto ds = data::generate_sampled(c.train_distribution, static_cast<std::size_t>(c.initial_size),
                                     derive_seed(c.seed, "initial-set"), c.grid);
    ds.config_hash = config::config_hash(c);
    return ds;
}

inline data::Dataset test_set(const RunConfig& c) {
    auto ds = data::generate_sampled(c.test_distribution, static_cast<std::size_t>(c.test_size),
                                     derive_seed(c.data_seed, "test-set"), c.grid);
    ds.config_hash = config::test_set_key(c);
    return ds;
}

// --- evaluation ----------------------------------------------------------------------

/// Greedy success fraction on `maps` at each friction coefficient.
inline std::vector<double> evaluate(const policy::Policy& p, const std::vector<env::Heightmap>& maps,
                                    const std::vector<double>& frictions, const grasp::GraspConfig& gcfg = {},
                                    int workers = 1) {
    if (maps.empty()) throw ConfigError("evaluate: empty test set");
    if (frictions.empty()) throw ConfigError("evaluate: no friction values");
    std::vector<std::vector<char>> ok(maps.size(), std::vector<char>(frictions.size(), 0));
    parallel_for(maps.size(), workers, [&](std::size_t i) {
        const auto a = policy::greedy_action(maps[i], p);
        for (std::size_t k = 0; k < frictions.size(); ++k)
            ok[i][k] = grasp::execute_grasp(maps[i], a.action, frictions[k], gcfg).success ? 1 : 0;
    });
    std::vector<double> rates(frictions.size(), 0.0);
    for (const auto& row : ok)
        for (std::size_t k = 0; k < frictions.size(); ++k) rates[k] += row[k];
    for (auto& r : rates) r /= static_cast<double>(maps.size());
    return rates;
}

/// Cost label of every environment under the greedy policy.
inline std::vector<double> label_costs(const std::vector<env::Heightmap>& maps, const policy::Policy& p,
                                       const grasp::GraspConfig& gcfg, int workers) {
    std::vector<double> costs(maps.size());
    parallel_for(maps.size(), workers, [&](std::size_t i) { costs[i] = policy::label_cost(maps[i], p, gcfg).value; });
    return costs;
}

// --- metrics -------------------------------------------------------------------------

struct IterationMetrics {
    int iteration = 0;
    std::size_t dataset_size = 0;
    double mean_cost = 0.0;
    double max_cost = 0.0;
    std::optional<double> mean_predicted_cost;
    std::optional<double> reconstruction_mse;
    std::optional<double> lipschitz_bound;
    std::optional<double> target_reached_fraction;
    double train_success = 0.0;
    std::vector<double> test_success;  // per friction
};

inline std::string metrics_header(const std::vector<double>& frictions) {
    std::string h =
        "iteration,dataset_size,mean_cost,max_cost,mean_predicted_cost,reconstruction_mse,lipschitz_bound,"
        "target_reached_fraction,train_success";
    for (double mu : frictions) h += ",test_success_mu" + mu_label(mu);
    h += ",config_hash,tool_version\n";
    return h;
}

inline std::string metrics_row(const IterationMetrics& m, const std::string& config_hash) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
    std::string r = std::to_string(m.iteration) + "," + std::to_string(m.dataset_size) + "," + fmt(m.mean_cost) + "," +
                    fmt(m.max_cost) + "," + opt(m.mean_predicted_cost) + "," + opt(m.reconstruction_mse) + "," +
                    opt(m.lipschitz_bound) + "," + opt(m.target_reached_fraction) + "," + fmt(m.train_success);
    for (double s : m.test_success) r += "," + fmt(s);
    r += "," + config_hash + "," + std::string(kToolVersion) + "\n";
    return r;
}

// --- run -----------------------------------------------------------------------------

struct RunResult {
    fs::path dir;
    std::string config_hash;
    std::vector<IterationMetrics> metrics;
    std::vector<double> final_test_success;
    int selected_iteration = 0;  // highest train_success, earliest on ties
    std::vector<double> selected_test_success;
    std::size_t final_dataset_size = 0;
    std::size_t ascents = 0;
    std::size_t ascents_reached = 0;
};

struct RunOptions {
    int workers = 1;
    const data::Dataset* initial = nullptr;  // defaults to initial_set(config)
    const data::Dataset* test = nullptr;     // defaults to test_set(config)
    bool quiet = true;
};

namespace detail {

inline json record_json(const advgen::PerturbationRecord& r, const std::string& id, const std::string& source_id,
                        int iteration, double target) {
    return json{{"id", id},
                {"iteration", iteration},
                {"source_id", source_id},
                {"steps", r.steps},
                {"cost_before", r.cost_before},
                {"cost_after", r.cost_after},
                {"target", target},
                {"target_reached", r.target_reached},
                {"failed", r.failed},
                {"displacement", r.displacement},
                {"z0", std::vector<double>(r.z0.data(), r.z0.data() + r.z0.size())},
                {"z", std::vector<double>(r.z.data(), r.z.data() + r.z.size())}};
}

inline std::string iter_dir(int t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter-%02d", t);
    return buf;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline void prepare_dir(const fs::path& dir) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw UsageError("output path exists and is not a directory: " + dir.string());
        if (!fs::is_empty(dir)) throw UsageError("output directory is not empty: " + dir.string());
    }
    fs::create_directories(dir);
}

}  // namespace detail

/// Executes the outer loop and writes the run directory:
///   config.json, metrics.csv, train_log.csv, summary.json, perturbations.json,
///   datasets/{initial,test,final}.{json,bin}, checkpoints/iter-XX/{policy,embed}.{json,bin}.
/// On failure a failure.json is written next to the partial artifacts and the
/// exception is rethrown.
inline RunResult run(const RunConfig& cfg, const fs::path& dir, const RunOptions& opt = {}) {
    cfg.validate();
    detail::prepare_dir(dir);
    const std::string hash = config::config_hash(cfg);
    const auto stamp = [&](json j) {
        j["config_hash"] = hash;
        j["tool_version"] = std::string(kToolVersion);
        return j;
    };
    io::write_file_atomic(dir / "config.json", stamp(config::to_json(cfg)).dump(2) + "\n");

    RunResult res;
    res.dir = dir;
    res.config_hash = hash;
    int current_iteration = 0;
    try {
        data::Dataset S = opt.initial ? *opt.initial : initial_set(cfg);
        const data::Dataset test = opt.test ? *opt.test : test_set(cfg);
        if (S.grid() != cfg.grid || test.grid() != cfg.grid) throw ConfigError("dataset grid differs from config grid");
        if (S.empty() || test.empty()) throw ConfigError("run: empty dataset");
        S.config_hash = hash;
        fs::create_directories(dir / "datasets");
        data::save_dataset(dir / "datasets" / "initial", S);
        data::save_dataset(dir / "datasets" / "test", test);

        const auto& gcfg = cfg.policy.grasp;
        Rng init_rng = make_rng(derive_seed(cfg.seed, "policy-init"));
        policy::PolicyTrainer trainer(policy::init_policy(cfg.policy, init_rng), cfg.policy);
        std::optional<embed::EmbedModel> model;
        if (cfg.method == Method::dragen) {
            Rng erng = make_rng(derive_seed(cfg.seed, "embed-init"));
            model.emplace(cfg.embed, erng);
        }

        std::string metrics = metrics_header(cfg.eval_frictions);
        std::string train_log = "iteration,step,epsilon,reward\n";
        json records = json::array();

        auto retrain = [&](int t, std::int64_t steps) {
            const policy::ExplorationSchedule sched{cfg.policy.eps_start, cfg.policy.eps_end, steps};
            Rng prng = make_rng(derive_seed(cfg.seed, "policy-train", static_cast<std::uint64_t>(t)));
            auto rep = policy::train_policy(S.maps(), trainer, steps, sched, prng);
            for (std::size_t k = 0; k < rep.rewards.size(); ++k)
                train_log += std::to_string(t) + "," + std::to_string(k) + "," +
                             fmt(sched.epsilon(static_cast<std::int64_t>(k))) + "," + std::to_string(rep.rewards[k]) +
                             "\n";
            return rep;
        };
        auto checkpoint = [&](int t) {
            if (!cfg.save_checkpoints) return;
            const fs::path cdir = dir / "checkpoints" / detail::iter_dir(t);
            fs::create_directories(cdir);
            io::save_checkpoint(cdir / "policy", {{"scorer", &trainer.policy.scorer}}, hash);
            if (model)
                io::save_checkpoint(cdir / "embed",
                                    {{"encoder", &model->params.encoder},
                                     {"decoder", &model->params.decoder},
                                     {"predictor", &model->params.predictor}},
                                    hash);
        };

        // Pre-train on S0.
        {
            const auto rep = retrain(0, cfg.pretrain_steps);
            IterationMetrics m;
            m.iteration = 0;
            m.dataset_size = S.size();
            const auto costs = label_costs(S.maps(), trainer.policy, gcfg, opt.workers);
            m.mean_cost = detail::mean(costs);
            m.max_cost = *std::max_element(costs.begin(), costs.end());
            m.train_success = std::max(0.0, rep.best_trailing_success);
            m.test_success = evaluate(trainer.policy, test.maps(), cfg.eval_frictions, gcfg, opt.workers);
            metrics += metrics_row(m, hash);
            res.metrics.push_back(m);
            checkpoint(0);
        }

        for (int t = 1; t <= cfg.iterations; ++t) {
            current_iteration = t;
            IterationMetrics m;
            m.iteration = t;
            // Costs of every environment in S under the current policy.
            const auto costs = label_costs(S.maps(), trainer.policy, gcfg, opt.workers);
            m.mean_cost = detail::mean(costs);
            m.max_cost = *std::max_element(costs.begin(), costs.end());

            Rng grng = make_rng(derive_seed(cfg.seed, "generate", static_cast<std::uint64_t>(t)));
            const auto K = static_cast<std::size_t>(cfg.k_per_iteration);
            switch (cfg.method) {
                case Method::dragen: {
                    Rng trng = make_rng(derive_seed(cfg.seed, "embed-train", static_cast<std::uint64_t>(t)));
                    const int epochs = t == 1 ? cfg.embed.first_epochs : cfg.embed.later_epochs;
                    const auto erep = embed::train_embedding(*model, S.maps(), costs, epochs, trng);
                    m.reconstruction_mse = erep.final_terms.rec;
                    m.lipschitz_bound = erep.final_terms.lipschitz_bound;
                    const auto latent = embed::build_latent_distribution(model->params, S.maps());
                    m.mean_predicted_cost =
                        latent.expect([&](const nn::Vector& z) { return embed::predict_cost(model->params.predictor, z); });
                    auto gen = advgen::generate_adversarial(model->params, latent, cfg.grid, cfg.k_per_iteration,
                                                            cfg.ascent, grng);
                    std::size_t reached = 0;
                    for (std::size_t k = 0; k < gen.maps.size(); ++k) {
                        const auto& rec = gen.records[k];
                        reached += rec.target_reached ? 1 : 0;
                        data::ManifestEntry e;
                        e.id = "dragen-" + std::to_string(t) + "-" + std::to_string(k);
                        e.provenance = "dragen-iter-" + std::to_string(t);
                        e.seed = derive_seed(cfg.seed, "generate", static_cast<std::uint64_t>(t));
                        e.iteration = t;
                        e.source_id = S.entry(rec.source_index).id;
                        e.below_threshold = gen.maps[k].count_at_least(gcfg.occupancy_threshold) == 0;
                        records.push_back(detail::record_json(rec, e.id, e.source_id, t, gen.target));
                        S.add(std::move(e), std::move(gen.maps[k]));
                    }
                    res.ascents += gen.records.size();
                    res.ascents_reached += reached;
                    m.target_reached_fraction =
                        gen.records.empty() ? 0.0 : static_cast<double>(reached) / static_cast<double>(gen.records.size());
                    break;
                }
                case Method::dr:
                    for (std::size_t k = 0; k < K; ++k) {
                        auto obj = env::generate_dr_object(cfg.train_distribution, grng, cfg.grid);
                        data::ManifestEntry e;
                        e.id = "dr-" + std::to_string(t) + "-" + std::to_string(k);
                        e.provenance = "dr";
                        e.seed = derive_seed(cfg.seed, "generate", static_cast<std::uint64_t>(t));
                        e.iteration = t;
                        S.add(std::move(e), std::move(obj.heightmap));
                    }
                    break;
                case Method::gaussian: {
                    const std::size_t n = S.size();
                    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::size_t src = pick(grng);
                        auto h = env::gaussian_augment(S.map(src), cfg.gaussian_sigma, grng);
                        data::ManifestEntry e;
                        e.id = "gaussian-" + std::to_string(t) + "-" + std::to_string(k);
                        e.provenance = "gaussian";
                        e.seed = derive_seed(cfg.seed, "generate", static_cast<std::uint64_t>(t));
                        e.iteration = t;
                        e.source_id = S.entry(src).id;
                        S.add(std::move(e), std::move(h));
                    }
                    break;
                }
                case Method::none: break;
            }
            m.dataset_size = S.size();

            const auto rep = retrain(t, cfg.retrain_steps);
            m.train_success = std::max(0.0, rep.best_trailing_success);
            m.test_success = evaluate(trainer.policy, test.maps(), cfg.eval_frictions, gcfg, opt.workers);
            metrics += metrics_row(m, hash);
            res.metrics.push_back(m);
            checkpoint(t);
            if (!opt.quiet) {
                std::fprintf(stderr, "[%s seed %llu] iteration %d/%d |S|=%zu test@%s=%.3f\n",
                             config::to_string(cfg.method).c_str(), static_cast<unsigned long long>(cfg.seed), t,
                             cfg.iterations, S.size(), mu_label(cfg.eval_frictions.front()).c_str(),
                             m.test_success.front());
            }
        }

        io::write_file_atomic(dir / "metrics.csv", metrics);
        io::write_file_atomic(dir / "train_log.csv", train_log);
        S.config_hash = hash;
        data::save_dataset(dir / "datasets" / "final", S);
        io::write_file_atomic(dir / "perturbations.json",
                              stamp(json{{"schema", "dragen-perturbations/" + std::to_string(kSchemaVersion)},
                                         {"records", records}})
                                      .dump(1) +
                                  "\n");

        res.final_test_success = res.metrics.back().test_success;
        for (const auto& m : res.metrics)
            if (m.train_success > res.metrics[static_cast<std::size_t>(res.selected_iteration)].train_success)
                res.selected_iteration = m.iteration;
        res.selected_test_success = res.metrics[static_cast<std::size_t>(res.selected_iteration)].test_success;
        res.final_dataset_size = S.size();
        json summary{{"schema", "dragen-summary/" + std::to_string(kSchemaVersion)},
                     {"status", "complete"},
                     {"method", config::to_string(cfg.method)},
                     {"preset", cfg.preset},
                     {"seed", cfg.seed},
                     {"iterations", cfg.iterations},
                     {"dataset_size", S.size()},
                     {"test_content_hash", test.content_hash()},
                     {"test_size", test.size()},
                     {"eval_frictions", cfg.eval_frictions},
                     {"final_test_success", res.final_test_success},
                     {"selected_iteration", res.selected_iteration},
                     {"selected_test_success", res.selected_test_success},
                     {"ascents", res.ascents},
                     {"ascents_reached", res.ascents_reached}};
        io::write_file_atomic(dir / "summary.json", stamp(summary).dump(2) + "\n");
    } catch (const std::exception& ex) {
        json fail{{"status", "failed"}, {"iteration", current_iteration}, {"error", ex.what()}};
        try {
            io::write_file_atomic(dir / "failure.json", stamp(fail).dump(2) + "\n");
        } catch (...) {
        }
        throw;
    }
    return res;
}

// --- comparison ----------------------------------------------------------------------

struct RunSummary {
    fs::path dir;
    std::string method;
    std::uint64_t seed = 0;
    std::string test_hash;
    std::vector<double> frictions;
    std::vector<double> success;  // at the selected iteration
    std::vector<double> final_success;
    int selected_iteration = 0;
};

inline RunSummary read_summary(const fs::path& dir) {
    const fs::path p = dir / "summary.json";
    if (!fs::exists(p)) throw UsageError("not a completed run directory (no summary.json): " + dir.string());
    const json j = json::parse(io::read_file(p));
    if (j.value("status", "") != "complete") throw UsageError("run did not complete: " + dir.string());
    RunSummary s;
    s.dir = dir;
    s.method = j.at("method").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.test_hash = j.at("test_content_hash").get<std::string>();
    s.frictions = j.at("eval_frictions").get<std::vector<double>>();
    s.success = j.at("selected_test_success").get<std::vector<double>>();
    s.final_success = j.at("final_test_success").get<std::vector<double>>();
    s.selected_iteration = j.at("selected_iteration").get<int>();
    return s;
}

struct ComparisonRow {
    std::string method;
    std::string kind;  // measured | published
    std::vector<std::uint64_t> seeds;
    std::vector<double> mean;
    std::vector<double> stdev;
};

struct Comparison {
    std::vector<double> frictions;
    std::vector<ComparisonRow> rows;
    std::string test_hash;

    std::string csv() const {
        std::string out = "method,kind,n_seeds,seeds";
        for (double mu : frictions) out += ",mean_mu" + mu_label(mu) + ",std_mu" + mu_label(mu);
        out += "\n";
        for (const auto& r : rows) {
            std::string seeds;
            for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
            out += r.method + "," + r.kind + "," + std::to_string(r.seeds.size()) + "," + seeds;
            for (std::size_t k = 0; k < frictions.size(); ++k)
                out += "," + fmt(r.mean[k]) + "," + (r.kind == "published" ? std::string() : fmt(r.stdev[k]));
            out += "\n";
        }
        return out;
    }

    std::string text() const {
        std::ostringstream os;
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-10s %-10s %-6s", "method", "kind", "seeds");
        os << buf;
        for (double mu : frictions) {
            std::snprintf(buf, sizeof buf, "  %-15s", ("mu=" + mu_label(mu)).c_str());
            os << buf;
        }
        os << "\n";
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%-10s %-10s %-6zu", r.method.c_str(), r.kind.c_str(), r.seeds.size());
            os << buf;
            for (std::size_t k = 0; k < frictions.size(); ++k) {
                if (r.kind == "published") std::snprintf(buf, sizeof buf, "  %-15.3f", r.mean[k]);
                else std::snprintf(buf, sizeof buf, "  %.3f +- %.3f   ", r.mean[k], r.stdev[k]);
                os << buf;
            }
            os << "\n";
        }
        return os.str();
    }
};

/// Published 2D-primitive test success at mu = 0.3, 0.4, 0.5.
inline const std::map<std::string, std::vector<double>>& published_reference() {
    static const std::map<std::string, std::vector<double>> ref{
        {"dragen", {0.655, 0.684, 0.716}}, {"dr", {0.606, 0.632, 0.672}}, {"none", {0.577, 0.627, 0.686}}};
    return ref;
}

/// Mean and sample standard deviation per method and friction.
inline Comparison compare(const std::vector<fs::path>& dirs) {
    if (dirs.size() < 2) throw UsageError("compare needs at least two run directories");
    std::vector<RunSummary> runs;
    for (const auto& d : dirs) runs.push_back(read_summary(d));
    std::set<std::string> hashes;
    for (const auto& r : runs) hashes.insert(r.test_hash);
    if (hashes.size() > 1) {
        std::string diff = "runs do not share a test set:";
        for (const auto& r : runs) diff += "\n  " + r.dir.string() + ": test_content_hash=" + r.test_hash;
        throw UsageError(diff);
    }
    for (const auto& r : runs)
        if (r.frictions != runs.front().frictions)
            throw UsageError("runs use different friction values: " + r.dir.string());

    Comparison c;
    c.frictions = runs.front().frictions;
    c.test_hash = runs.front().test_hash;
    const std::vector<std::string> order{"dragen", "dr", "gaussian", "none"};
    std::map<std::string, std::vector<const RunSummary*>> by_method;
    for (const auto& r : runs) by_method[r.method].push_back(&r);
    for (const auto& name : order) {
        auto it = by_method.find(name);
        if (it == by_method.end()) continue;
        ComparisonRow row;
        row.method = name;
        row.kind = "measured";
        const auto n = it->second.size();
        for (const auto* r : it->second) row.seeds.push_back(r->seed);
        for (std::size_t k = 0; k < c.frictions.size(); ++k) {
            double s = 0.0;
            for (const auto* r : it->second) s += r->success[k];
            const double mean = s / static_cast<double>(n);
            double ss = 0.0;
            for (const auto* r : it->second) ss += (r->success[k] - mean) * (r->success[k] - mean);
            row.mean.push_back(mean);
            row.stdev.push_back(n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0);
        }
        c.rows.push_back(std::move(row));
    }
    if (c.frictions == std::vector<double>{0.3, 0.4, 0.5}) {
        for (const auto& name : order) {
            auto it = published_reference().find(name);
            if (it == published_reference().end()) continue;
            c.rows.push_back({name, "published", {}, it->second, std::vector<double>(3, 0.0)});
        }
    }
    return c;
}

}  // namespace dragen::loop
