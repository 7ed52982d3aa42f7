#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("disagg_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + DISAGG_CLI_PATH + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // Synthesizes the bundled multi-model demo log; returns "--predictions X --schema Y".
  std::string demo_inputs() {
    const auto spec = disagg::testing::data_dir() + "/table2_demo.json";
    const auto log = path("demo.csv");
    const auto schema = path("schema.json");
    const auto r = run("synth --spec " + spec + " --seed 7 --out " + log + " --schema-out " + schema);
    EXPECT_EQ(r.code, 0) << r.err;
    return "--predictions " + log + " --schema " + schema;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("evaluate --metric nonsense --predictions x --schema y").code, 2);
}

TEST_F(Cli, EvaluateCityTable) {
  const auto inputs = demo_inputs();
  const auto r = run("evaluate " + inputs + " --factor city --bold-best row");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| city | FFNN | TDNN | CNN6 | CNN10 | CNN14 |"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("| σ |"), std::string::npos);
  EXPECT_NE(r.out.find("**"), std::string::npos);

  const auto csv = run("evaluate " + inputs + " --factor device --factor city --format csv --out " +
                       path("t.csv"));
  ASSERT_EQ(csv.code, 0) << csv.err;
  EXPECT_TRUE(csv.out.empty());
  EXPECT_EQ(slurp(path("t.csv")).rfind("device,city,", 0), 0u);
}

TEST_F(Cli, MissingInputsExitTwoWithoutOutput) {
  const auto r = run("evaluate --predictions " + path("nope.csv") + " --schema " +
                     disagg::testing::data_dir() + "/dcase_schema.json --factor city --out " + path("o.md"));
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(path("o.md")));
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);

  const auto inputs = demo_inputs();
  EXPECT_EQ(run("evaluate " + inputs + " --factor colour").code, 2);
}

TEST_F(Cli, MalformedLogExitsOne) {
  std::ofstream(path("bad.csv")) << "sample_id,model_id,seed,true_label,predicted_label,city,location,device\n"
                                 << "s1,m,0,park,zoo,paris,0,a\n";
  const auto r = run("evaluate --predictions " + path("bad.csv") + " --schema " + disagg::testing::data_dir() +
                     "/dcase_schema.json --factor city");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("row 1"), std::string::npos) << r.err;
}

TEST_F(Cli, KwtestNeedsTwoLevels) {
  // The FFNN spec logs device a only.
  const auto spec = disagg::testing::data_dir() + "/table1_ffnn_mobile.json";
  ASSERT_EQ(run("synth --spec " + spec + " --seed 1 --out " + path("f.csv") + " --schema-out " + path("s.json")).code, 0);
  const std::string inputs = "--predictions " + path("f.csv") + " --schema " + path("s.json");
  const auto one = run("kwtest " + inputs + " --factor device --obs correctness");
  EXPECT_EQ(one.code, 1);
  EXPECT_NE(one.err.find("fewer than 2 levels"), std::string::npos) << one.err;

  const auto ok = run("kwtest " + inputs + " --factor city --obs correctness --format json");
  ASSERT_EQ(ok.code, 0) << ok.err;
  const auto doc = nlohmann::json::parse(ok.out);
  EXPECT_EQ(doc["results"].size(), 1u);
  EXPECT_EQ(doc["results"][0]["df"], 5);
}

TEST_F(Cli, SynthRejectsImpossibleAccuracy) {
  auto doc = nlohmann::json::parse(slurp(disagg::testing::data_dir() + "/table1_ffnn_mobile.json"));
  doc["schema_file"] = disagg::testing::data_dir() + "/dcase_schema.json";
  doc["cells"][0]["accuracy"] = 1.37;
  std::ofstream(path("bad_spec.json")) << doc.dump();
  const auto r = run("synth --spec " + path("bad_spec.json") + " --seed 1 --out " + path("x.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(path("x.csv")));
}

TEST_F(Cli, LocationsAndValidate) {
  const auto inputs = demo_inputs();
  const auto loc = run("locations " + inputs + " --baseline within-city");
  ASSERT_EQ(loc.code, 0) << loc.err;
  const auto boxes = nlohmann::json::parse(loc.out);
  EXPECT_EQ(boxes.size(), 5u * 6u);
  EXPECT_TRUE(boxes[0]["group"].contains("city"));

  const auto val = run("validate " + inputs);
  ASSERT_EQ(val.code, 0) << val.err;
  EXPECT_NE(val.out.find("models: 5"), std::string::npos);
  EXPECT_NE(val.out.find("inconsistent locations: 0"), std::string::npos);
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  const auto inputs = demo_inputs();
  std::ofstream(path("run.toml")) << "[evaluate]\nfactor = [\"device\"]\nformat = \"csv\"\n";
  const auto r = run("--config " + path("run.toml") + " evaluate " + inputs);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("device,FFNN", 0), 0u) << r.out;
}

TEST_F(Cli, RepeatedRunsAreIdentical) {
  const auto inputs = demo_inputs();
  for (const std::string cmd : {"evaluate " + inputs + " --factor city --factor device --format json",
                                "kwtest " + inputs + " --factor city --obs location-f1",
                                "locations " + inputs}) {
    const auto a = run(cmd);
    const auto b = run(cmd);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
  }
}
