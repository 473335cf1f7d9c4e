#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dialogsim/cli.hpp"
#include "support.hpp"

using namespace dialogsim;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dialogsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string demo(const char* file) { return (testing_support::data_dir() / "demo" / file).string(); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dialogsim_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& content) {
    const auto p = dir_ / name;
    std::ofstream(p) << content;
    return p.string();
  }

  fs::path dir_;
};

std::string read(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_F(CliTest, ValidateDemo) {
  const auto r = run_cli({"validate", "--schema", demo("schema.json"), "--seeds", demo("seeds.txt")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "ok\n");
  EXPECT_EQ(r.err.find("error"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateRejectsDanglingType) {
  auto doc = nlohmann::json::parse(read(demo("schema.json")));
  doc["domains"][0]["apis"][0]["args"][0]["type"] = "Town";
  const auto r = run_cli({"validate", "--schema", write("schema.json", doc.dump())});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Town"), std::string::npos) << r.err;
}

TEST_F(CliTest, ValidateReportsJsonSyntaxErrors) {
  const auto r = run_cli({"validate", "--schema", write("schema.json", "{\n  \"domains\": [\n    oops\n")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, ValidateWarnsAboutUncoveredSignatures) {
  auto doc = nlohmann::json::parse(read(demo("schema.json")));
  auto& templates = doc["domains"][0]["utterance_templates"];
  for (auto it = templates.begin(); it != templates.end();)
    it = (*it)["template"] == "for {date}" ? templates.erase(it) : it + 1;
  const auto r = run_cli({"validate", "--schema", write("schema.json", doc.dump()), "--seeds", demo("seeds.txt")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("no user template for act signature inform(entity:date)"), std::string::npos) << r.err;
}

TEST_F(CliTest, FitWritesALoadableModel) {
  const auto path = (dir_ / "model.json").string();
  const auto r = run_cli({"fit", "--schema", demo("schema.json"), "--seeds", demo("seeds.txt"), "--out", path});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(markov_from_json(nlohmann::json::parse(read(path))), testing_support::demo_context().model);
}

TEST_F(CliTest, GenerateMetricsAndExport) {
  const auto corpus = (dir_ / "corpus.txt").string();
  auto r = run_cli({"generate", "--schema", demo("schema.json"), "--seeds", demo("seeds.txt"), "--seed", "7", "--n",
                    "50", "--mix", "golden=0.5,markov=0.5", "--out", corpus});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(parse_corpus(read(corpus), &testing_support::demo_bundle()).size(), 50u);

  r = run_cli({"metrics", corpus});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["n_dialogs"], 50);

  const auto out_dir = (dir_ / "export").string();
  r = run_cli({"export-training", "--schema", demo("schema.json"), "--out", out_dir, corpus});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"ner.jsonl", "action_prediction.jsonl", "argument_filling.jsonl"})
    EXPECT_FALSE(read((fs::path(out_dir) / f).string()).empty()) << f;
}

TEST_F(CliTest, ConfigFileAndFlagsCombine) {
  const auto cfg = write("config.json", R"({"n_dialogs": 5, "sampler_mix": {"base": 1, "golden": 0, "markov": 0}})");
  const auto r = run_cli(
      {"generate", "--schema", demo("schema.json"), "--seeds", demo("seeds.txt"), "--config", cfg, "--n", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dialogs = parse_corpus(r.out, &testing_support::demo_bundle());
  ASSERT_EQ(dialogs.size(), 3u);
  for (const auto& d : dialogs) EXPECT_EQ(d.metadata.at("sampler"), "base");
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"generate", "--n", "many"}).code, 2);
  EXPECT_EQ(run_cli({"metrics"}).code, 2);
}

TEST_F(CliTest, UnknownConfigKeyFails) {
  const auto cfg = write("config.json", R"({"n_dialog": 5})");
  const auto r = run_cli({"generate", "--schema", demo("schema.json"), "--seeds", demo("seeds.txt"), "--config", cfg});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("n_dialog"), std::string::npos) << r.err;
}
