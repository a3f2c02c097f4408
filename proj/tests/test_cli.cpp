#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "dragen/cli.hpp"

using namespace dragen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dragen_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "dragen");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

int shell(const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

fs::path small_config(const fs::path& dir) {
    fs::create_directories(dir);
    const auto p = dir / "small.json";
    io::write_file_atomic(p, R"({"_note": "tiny smoke run",
        "loop": {"iterations": 1, "initial_size": 8, "test_size": 6, "k_per_iteration": 3,
                 "pretrain_steps": 10, "retrain_steps": 10},
        "embed": {"first_epochs": 2, "later_epochs": 1},
        "policy": {"batch_size": 8, "replay_ratio": 1}})");
    return p;
}

}  // namespace

TEST(Cli, VersionFromBinary) {
    EXPECT_EQ(shell(std::string(DRAGEN_CLI_PATH) + " --version"), 0);
    const auto r = invoke({"--version"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("schema 1"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(invoke({"frobnicate"}).code, 2);
    EXPECT_EQ(invoke({"train", "--bogus"}).code, 2);
    EXPECT_EQ(invoke({"verify", "--suite", "nonsense"}).code, 2);
    const auto dir = scratch("usage");
    const auto r = invoke({"train", "--method", "mixup", "--out", (dir / "run").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown method"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "run"));
    EXPECT_EQ(shell(std::string(DRAGEN_CLI_PATH) + " train --method mixup --out " + (dir / "bin").string()), 2);
    EXPECT_EQ(invoke({"compare", (dir / "nothing").string(), (dir / "else").string()}).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, GenDataIsAtomicAndReproducible) {
    const auto dir = scratch("gen");
    const auto cfg = small_config(dir);
    ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (dir / "a").string(), "--seed", "4"}).code, 0);
    ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (dir / "b").string(), "--seed", "4"}).code, 0);
    for (const char* f : {"train.json", "train.bin", "test.json", "test.bin", "config.json"})
        EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
    EXPECT_EQ(data::load_dataset(dir / "a" / "train").size(), 8u);

    io::write_file_atomic(dir / "bad.json", R"({"loop": {"initial_size": 0}})");
    const auto r = invoke({"gen-data", "--config", (dir / "bad.json").string(), "--out", (dir / "c").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(dir / "c"));
    EXPECT_FALSE(fs::exists(dir / "c.partial"));
    io::write_file_atomic(dir / "broken.json", "{ not json");
    EXPECT_EQ(invoke({"gen-data", "--config", (dir / "broken.json").string(), "--out", (dir / "d").string()}).code, 2);
    EXPECT_FALSE(fs::exists(dir / "d"));
    fs::remove_all(dir);
}

TEST(Cli, TrainEvalCompareAdvgen) {
    const auto dir = scratch("pipeline");
    const auto cfg = small_config(dir);
    ASSERT_EQ(invoke({"gen-data", "--config", cfg.string(), "--out", (dir / "data").string(), "--seed", "2"}).code, 0);
    for (const char* m : {"dragen", "none"}) {
        const auto r = invoke({"train", "--config", cfg.string(), "--method", m, "--seed", "1", "--data",
                            (dir / "data").string(), "--out", (dir / m).string()});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_NE(r.out.find("|S|="), std::string::npos);
    }
    EXPECT_EQ(data::load_dataset(dir / "dragen" / "datasets" / "final").size(), 11u);
    EXPECT_EQ(io::read_file(dir / "dragen" / "datasets" / "test.bin"), io::read_file(dir / "data" / "test.bin"));

    const auto ev = invoke({"eval", "--run", (dir / "none").string(), "--frictions", "0.3,0.5"});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto j = nlohmann::json::parse(ev.out);
    EXPECT_EQ(j.at("success").size(), 2u);

    const auto cmp = invoke({"compare", (dir / "dragen").string(), (dir / "none").string(), "--csv",
                          (dir / "table.csv").string()});
    ASSERT_EQ(cmp.code, 0) << cmp.err;
    EXPECT_NE(cmp.out.find("dragen"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "table.csv"));

    const auto adv = invoke({"advgen", "--run", (dir / "dragen").string(), "--out", (dir / "adv").string(), "--k", "4"});
    ASSERT_EQ(adv.code, 0) << adv.err;
    EXPECT_EQ(data::load_dataset(dir / "adv" / "generated").size(), 4u);
    EXPECT_EQ(invoke({"advgen", "--run", (dir / "none").string(), "--out", (dir / "adv2").string()}).code, 2);
    // Existing non-empty output is refused.
    EXPECT_EQ(invoke({"train", "--config", cfg.string(), "--out", (dir / "none").string()}).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, VerifyExitCode) {
    const auto r = invoke({"verify", "--suite", "ot", "--seed", "3"});
    EXPECT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("suite"), "ot");
}
