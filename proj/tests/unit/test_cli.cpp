#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commands.hpp"

using namespace corelation;
using namespace corelation::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "corelation");
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

class CliDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("corelation_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Result gen_data(const std::string& sub) {
        return run_cli({"gen-data", "--output_dir", path(sub), "--num_notes", "40", "--num_codes", "12",
                        "--num_majors", "4", "--majors_per_chapter", "2", "--noise_vocab", "30"});
    }

    fs::path dir_;
};

}  // namespace

TEST(RunConfig, DefaultsOverridesAndUnknownKeys) {
    RunConfig c;
    EXPECT_EQ(c.get_size("top_k"), 50u);
    c.merge_text("# comment\n\ntop_k = 7\nlambda=0.5\n");
    EXPECT_EQ(c.model_config().top_k, 7u);
    EXPECT_EQ(c.train_config().lambda, 0.5);
    c.set("top_k", "9");
    EXPECT_EQ(c.get_size("top_k"), 9u);
    EXPECT_THROW(c.set("nope", "1"), CommandError);
    EXPECT_THROW(c.merge_text("top_k 3\n"), CommandError);
    c.set("top_k", "-3");
    EXPECT_THROW(c.get_size("top_k"), CommandError);
    EXPECT_EQ(c.get_size_list("eval_k"), (std::vector<std::size_t>{5, 8, 15}));
    EXPECT_NE(c.to_text().find("top_k = -3\n"), std::string::npos);
}

TEST(RunConfig, SyntheticRulesParse) {
    RunConfig c;
    c.set("implications", "0>5:0.9, 3>9:1");
    c.set("exclusions", "1-2");
    const SyntheticSpec s = c.synthetic_spec();
    ASSERT_EQ(s.implications.size(), 2u);
    EXPECT_EQ(s.implications[1].implied, 9u);
    EXPECT_EQ(s.implications[0].probability, 0.9);
    ASSERT_EQ(s.exclusions.size(), 1u);
    c.set("implications", "0>5");
    EXPECT_EQ(c.synthetic_spec().implications[0].probability, 1.0);
    c.set("implications", "0-5");
    EXPECT_THROW(c.synthetic_spec(), CommandError);
    c.set("implications", "0>x:0.5");
    EXPECT_THROW(c.synthetic_spec(), CommandError);
}

TEST(GraphSize, EdgeCountAndMemoryProxy) {
    EXPECT_EQ(edge_count(1158, 300), 347400u);
    const double ratio = static_cast<double>(edge_memory_proxy(1158, 50, 64)) /
                         static_cast<double>(edge_memory_proxy(1158, 300, 64));
    EXPECT_DOUBLE_EQ(ratio, 50.0 / 300.0);
}

TEST_F(CliDir, GenDataIsDeterministic) {
    ASSERT_EQ(gen_data("a").code, 0);
    ASSERT_EQ(gen_data("b").code, 0);
    for (const char* f : {"codes.txt", "ontology.tsv", "descriptions.tsv", "train.jsonl", "valid.jsonl", "test.jsonl"})
        EXPECT_EQ(slurp(path("a/") + f), slurp(path("b/") + f)) << f;
    EXPECT_FALSE(slurp(path("a/train.jsonl")).empty());
}

TEST_F(CliDir, EvaluatingGoldAsPredictionsGivesPerfectF1) {
    ASSERT_EQ(gen_data("d").code, 0);
    std::ifstream in(path("d/train.jsonl"));
    std::ofstream pred(path("pred.jsonl"));
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        nlohmann::json p;
        p["id"] = j["id"];
        p["codes"] = nlohmann::json::array();
        for (const auto& c : j["codes"]) p["codes"].push_back({{"code", c}, {"p", 1.0}});
        pred << p.dump() << "\n";
    }
    pred.close();
    const Result r = run_cli({"evaluate", "--predictions", path("pred.jsonl"), "--dataset", path("d/train.jsonl"),
                              "--output_dir", path("eval")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = nlohmann::json::parse(slurp(path("eval/report.json")));
    EXPECT_EQ(report["micro_f1"].get<double>(), 1.0);
    EXPECT_EQ(report["macro_f1"].get<double>(), 1.0);
}

TEST_F(CliDir, TrainPredictAndGraphStats) {
    ASSERT_EQ(gen_data("d").code, 0);
    const std::vector<std::string> model_flags{"--embed_dim", "8", "--hidden_dim", "8", "--output_dim", "8",
                                               "--attention_dim", "4", "--edge_dim", "4", "--ffn_dim", "8",
                                               "--top_k", "4"};
    std::vector<std::string> train{"train", "--codes", path("d/codes.txt"), "--ontology", path("d/ontology.tsv"),
                                   "--descriptions", path("d/descriptions.tsv"), "--train", path("d/train.jsonl"),
                                   "--valid", path("d/valid.jsonl"), "--epochs", "1", "--output_dir", path("run")};
    train.insert(train.end(), model_flags.begin(), model_flags.end());
    const Result t = run_cli(train);
    ASSERT_EQ(t.code, 0) << t.err;
    for (const char* f : {"model.ckpt", "loss_log.csv", "history.json", "config.txt"})
        EXPECT_TRUE(fs::exists(path("run/") + f)) << f;

    const Result p = run_cli({"predict", "--checkpoint", path("run/model.ckpt"), "--dataset", path("d/test.jsonl"),
                              "--output_dir", path("pred"), "--top", "3"});
    ASSERT_EQ(p.code, 0) << p.err;
    std::ifstream in(path("pred/predictions.jsonl"));
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    const auto j = nlohmann::json::parse(line);
    ASSERT_EQ(j["codes"].size(), 3u);
    EXPECT_GE(j["codes"][0]["p"].get<double>(), j["codes"][1]["p"].get<double>());
    EXPECT_GE(j["codes"][1]["p"].get<double>(), j["codes"][2]["p"].get<double>());

    const Result g = run_cli({"graph-stats", "--checkpoint", path("run/model.ckpt"), "--dataset",
                              path("d/test.jsonl")});
    ASSERT_EQ(g.code, 0) << g.err;
    EXPECT_NE(g.out.find("edges"), std::string::npos);
}

TEST(Cli, GradCheckLinearPasses) {
    const Result r = run_cli({"grad-check", "--check", "linear"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, MissingFileIsAnIoError) {
    const Result r = run_cli({"evaluate", "--predictions", "/nonexistent/p.jsonl", "--dataset", "/nonexistent/d.jsonl"});
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(r.err.rfind("error[io]", 0), 0u) << r.err;
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"train", "--bogus", "1"}).code, 2);
    const Result r = run_cli({"grad-check", "--set", "fd_step"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error[config]", 0), 0u) << r.err;
}
