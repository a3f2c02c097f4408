#pragma once
// Command-line driver. Exit codes: 0 success, 1 verification or runtime failure,
// 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dragen/advgen.hpp"
#include "dragen/checkpoint.hpp"
#include "dragen/common.hpp"
#include "dragen/config.hpp"
#include "dragen/dataset.hpp"
#include "dragen/embed.hpp"
#include "dragen/loop.hpp"
#include "dragen/policy.hpp"
#include "dragen/verify.hpp"

namespace dragen::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline std::string version_string() {
    return "dragen " + std::string(kToolVersion) + " (schema " + std::to_string(kSchemaVersion) + ")";
}

/// Resolved config stored in a run directory, minus the artifact stamps.
inline config::RunConfig load_run_config(const fs::path& run_dir) {
    const fs::path p = run_dir / "config.json";
    if (!fs::exists(p)) throw UsageError("not a run directory (no config.json): " + run_dir.string());
    json j = json::parse(io::read_file(p));
    j.erase("config_hash");
    j.erase("tool_version");
    return config::from_json(j);
}

inline config::RunConfig load_config(const std::string& path) {
    if (path.empty()) return config::desk_preset();
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    return config::parse(io::read_file(path));
}

/// Writes into a sibling staging directory and renames it into place, so a
/// failure leaves no partial output.
template <typename Fn>
void write_dir_atomic(const fs::path& out, Fn&& fill) {
    if (fs::exists(out) && (!fs::is_directory(out) || !fs::is_empty(out)))
        throw UsageError("output directory must not exist or be empty: " + out.string());
    fs::path stage = out;
    stage += ".partial";
    fs::remove_all(stage);
    fs::create_directories(stage);
    try {
        fill(stage);
    } catch (...) {
        fs::remove_all(stage);
        throw;
    }
    if (fs::exists(out)) fs::remove(out);
    fs::rename(stage, out);
}

inline policy::Policy load_policy(const fs::path& run_dir, int iteration, const config::RunConfig& cfg) {
    fs::path base;
    if (iteration < 0) {
        // Latest checkpoint.
        for (int t = cfg.iterations; t >= 0; --t) {
            const fs::path cand = run_dir / "checkpoints" / loop::detail::iter_dir(t) / "policy";
            fs::path j = cand;
            j += ".json";
            if (fs::exists(j)) {
                base = cand;
                break;
            }
        }
        if (base.empty()) throw UsageError("no policy checkpoint in " + run_dir.string());
    } else {
        base = run_dir / "checkpoints" / loop::detail::iter_dir(iteration) / "policy";
    }
    auto nets = io::load_checkpoint(base);
    if (nets.size() != 1 || nets.front().first != "scorer") throw ConfigError("unexpected policy checkpoint layout");
    return {std::move(nets.front().second), cfg.policy.patch};
}

inline embed::EmbedParams load_embed(const fs::path& base) {
    embed::EmbedParams p;
    for (auto& [name, net] : io::load_checkpoint(base)) {
        if (name == "encoder") p.encoder = std::move(net);
        else if (name == "decoder") p.decoder = std::move(net);
        else if (name == "predictor") p.predictor = std::move(net);
    }
    if (p.encoder.layers() == 0 || p.decoder.layers() == 0 || p.predictor.layers() != 2)
        throw ConfigError("incomplete embedding checkpoint: " + base.string());
    return p;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Distributionally robust grasp policy learning with adversarial environment generation"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    int workers = 1;
    app.add_flag("--version", show_version, "Print tool and schema versions");
    app.add_option("--workers", workers, "Worker threads for labelling and evaluation")->check(CLI::Range(1, 256));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the initial training set and the test set");
    std::string gen_config, gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "Config JSON (default: desk preset)");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Data seed");

    // train
    auto* train = app.add_subcommand("train", "Run the outer loop and write a run directory");
    std::string tr_config, tr_method, tr_out, tr_data;
    std::optional<std::uint64_t> tr_seed;
    bool tr_verbose = false;
    train->add_option("--config", tr_config, "Config JSON (default: desk preset)");
    train->add_option("--method", tr_method, "dragen | dr | gaussian | none (overrides the config)");
    train->add_option("--seed", tr_seed, "Master seed (overrides the config)");
    train->add_option("--out", tr_out, "Run directory")->required();
    train->add_option("--data", tr_data, "Directory written by gen-data (default: generate from the config)");
    train->add_flag("--verbose", tr_verbose, "Progress on stderr");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a trained policy");
    std::string ev_run, ev_test, ev_out;
    std::vector<double> ev_mu;
    int ev_iter = -1;
    ev->add_option("--run", ev_run, "Run directory")->required();
    ev->add_option("--test", ev_test, "Dataset base path (default: the run's test set)");
    ev->add_option("--frictions", ev_mu, "Friction values (default: from the run config)")->delimiter(',');
    ev->add_option("--iteration", ev_iter, "Checkpoint iteration (default: latest)");
    ev->add_option("--out", ev_out, "Write the JSON result here as well");

    // compare
    auto* cmp = app.add_subcommand("compare", "Tabulate runs that share a test set");
    std::vector<std::string> cmp_runs;
    std::string cmp_csv;
    cmp->add_option("runs", cmp_runs, "Run directories")->required();
    cmp->add_option("--csv", cmp_csv, "Write the CSV table here");

    // advgen
    auto* adv = app.add_subcommand("advgen", "Generate adversarial environments from a trained run");
    std::string adv_run, adv_out;
    int adv_k = 96;
    std::uint64_t adv_seed = 0;
    std::optional<double> adv_penalty, adv_step;
    adv->add_option("--run", adv_run, "DRAGEN run directory")->required();
    adv->add_option("--out", adv_out, "Output directory")->required();
    adv->add_option("--k", adv_k, "Number of environments")->check(CLI::NonNegativeNumber);
    adv->add_option("--seed", adv_seed, "Sampling seed");
    adv->add_option("--penalty", adv_penalty, "Distance penalty lambda");
    adv->add_option("--step-size", adv_step, "Ascent step size eta");

    // verify
    auto* ver = app.add_subcommand("verify", "Run a verification suite");
    std::string ver_suite, ver_out;
    std::uint64_t ver_seed = 0;
    ver->add_option("--suite", ver_suite, "Suite name")->required()->check(CLI::IsMember(verify::suite_names()));
    ver->add_option("--seed", ver_seed, "Fixture seed");
    ver->add_option("--out", ver_out, "Write the JSON report here as well");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (show_version) {
            out << version_string() << "\n";
            return kExitOk;
        }
        if (*gen) {
            auto cfg = load_config(gen_config);
            cfg.seed = gen_seed;
            cfg.data_seed = gen_seed;
            cfg.validate();
            write_dir_atomic(gen_out, [&](const fs::path& dir) {
                io::write_file_atomic(dir / "config.json", config::to_json(cfg).dump(2) + "\n");
                data::save_dataset(dir / "train", loop::initial_set(cfg));
                data::save_dataset(dir / "test", loop::test_set(cfg));
            });
            out << "wrote " << cfg.initial_size << " train and " << cfg.test_size << " test environments to " << gen_out
                << "\n";
            return kExitOk;
        }
        if (*train) {
            auto cfg = load_config(tr_config);
            if (!tr_method.empty()) cfg.method = config::method_from_string(tr_method);
            if (tr_seed) cfg.seed = *tr_seed;
            cfg.validate();
            loop::RunOptions opt;
            opt.workers = workers;
            opt.quiet = !tr_verbose;
            std::optional<data::Dataset> initial, test;
            if (!tr_data.empty()) {
                initial = data::load_dataset(fs::path(tr_data) / "train");
                test = data::load_dataset(fs::path(tr_data) / "test");
                opt.initial = &*initial;
                opt.test = &*test;
            }
            const auto res = loop::run(cfg, tr_out, opt);
            out << "run complete: " << tr_out << " |S|=" << res.final_dataset_size;
            out << " selected_iteration=" << res.selected_iteration;
            for (std::size_t k = 0; k < cfg.eval_frictions.size(); ++k)
                out << " test@" << loop::mu_label(cfg.eval_frictions[k]) << "=" << loop::fmt(res.selected_test_success[k]);
            out << "\n";
            return kExitOk;
        }
        if (*ev) {
            const fs::path run_dir = ev_run;
            const auto cfg = load_run_config(run_dir);
            const auto pol = load_policy(run_dir, ev_iter, cfg);
            const auto test = data::load_dataset(ev_test.empty() ? run_dir / "datasets" / "test" : fs::path(ev_test));
            const auto mus = ev_mu.empty() ? cfg.eval_frictions : ev_mu;
            const auto rates = loop::evaluate(pol, test.maps(), mus, cfg.policy.grasp, workers);
            json r{{"run", run_dir.string()},
                   {"test_content_hash", test.content_hash()},
                   {"test_size", test.size()},
                   {"frictions", mus},
                   {"success", rates},
                   {"config_hash", config::config_hash(cfg)},
                   {"tool_version", std::string(kToolVersion)}};
            out << r.dump(2) << "\n";
            if (!ev_out.empty()) io::write_file_atomic(ev_out, r.dump(2) + "\n");
            return kExitOk;
        }
        if (*cmp) {
            std::vector<fs::path> dirs(cmp_runs.begin(), cmp_runs.end());
            const auto table = loop::compare(dirs);
            out << table.text();
            if (!cmp_csv.empty()) io::write_file_atomic(cmp_csv, table.csv());
            return kExitOk;
        }
        if (*adv) {
            const fs::path run_dir = adv_run;
            auto cfg = load_run_config(run_dir);
            if (adv_penalty) cfg.ascent.penalty = *adv_penalty;
            if (adv_step) cfg.ascent.step_size = *adv_step;
            cfg.ascent.validate();
            const auto params =
                load_embed(run_dir / "checkpoints" / loop::detail::iter_dir(cfg.iterations) / "embed");
            const auto S = data::load_dataset(run_dir / "datasets" / "final");
            const auto latent = embed::build_latent_distribution(params, S.maps());
            Rng rng = make_rng(derive_seed(adv_seed, "advgen-cli"));
            auto gen = advgen::generate_adversarial(params, latent, cfg.grid, adv_k, cfg.ascent, rng);
            const std::string hash = config::config_hash(cfg);
            write_dir_atomic(adv_out, [&](const fs::path& dir) {
                data::Dataset ds(cfg.grid);
                ds.config_hash = hash;
                json records = json::array();
                for (std::size_t k = 0; k < gen.maps.size(); ++k) {
                    data::ManifestEntry e;
                    e.id = "advgen-" + std::to_string(k);
                    e.provenance = "advgen";
                    e.seed = adv_seed;
                    e.source_id = S.entry(gen.records[k].source_index).id;
                    e.below_threshold = gen.maps[k].count_at_least(cfg.policy.grasp.occupancy_threshold) == 0;
                    records.push_back(loop::detail::record_json(gen.records[k], e.id, e.source_id, 0, gen.target));
                    ds.add(std::move(e), std::move(gen.maps[k]));
                }
                data::save_dataset(dir / "generated", ds);
                json j{{"schema", "dragen-perturbations/" + std::to_string(kSchemaVersion)},
                       {"config_hash", hash},
                       {"tool_version", std::string(kToolVersion)},
                       {"range", gen.range},
                       {"target", gen.target},
                       {"records", records}};
                io::write_file_atomic(dir / "perturbations.json", j.dump(1) + "\n");
            });
            std::size_t reached = 0;
            for (const auto& r : gen.records) reached += r.target_reached ? 1 : 0;
            out << "generated " << gen.records.size() << " environments, " << reached << " reached the target\n";
            return kExitOk;
        }
        if (*ver) {
            const auto rep = verify::run_suite(ver_suite, ver_seed);
            const std::string text = rep.to_json().dump(2) + "\n";
            out << text;
            if (!ver_out.empty()) io::write_file_atomic(ver_out, text);
            return rep.passed() ? kExitOk : kExitFailure;
        }
        out << app.help();
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace dragen::cli
