#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2fe/cli.hpp"

namespace fs = std::filesystem;
using namespace t2fe;

namespace {

const fs::path kDemo = T2FE_DEMO_DIR;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "t2fe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, MissingMeshIsAConfigError) {
  const fs::path dir = fresh_dir("t2fe_cli_missing_mesh");
  fs::create_directories(dir);
  nlohmann::json cfg = nlohmann::json::parse(slurp(kDemo / "config.json"));
  for (auto& e : cfg["echoes"]) e = (kDemo / e.get<std::string>()).string();
  cfg["mesh"] = (dir / "no_such_mesh.json").string();
  cfg["model"] = (kDemo / "model.json").string();
  cfg["transform"] = (kDemo / "pose.json").string();
  std::ofstream(dir / "config.json") << cfg.dump();
  const CliRun r = run({"assign", "--config", (dir / "config.json").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_mesh.json"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("assign"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"explode", "--config", "x.json"}).code, 2);
  EXPECT_EQ(run({"assign"}).code, 2);
  EXPECT_EQ(run({"assign", "--config", (kDemo / "config.json").string(), "--method", "cubic"}).code, 2);
  EXPECT_EQ(run({"assign", "--config", (fs::temp_directory_path() / "absent.json").string()}).code, 2);
  EXPECT_THROW(cli::parse_fraction_list("0.1,abc"), InputError);
  EXPECT_EQ(cli::parse_fraction_list("-0.1, 0 ,0.5"), (std::vector<double>{-0.1, 0.0, 0.5}));
}

TEST(Cli, ValidateWritesNothing) {
  const fs::path out = fresh_dir("t2fe_cli_validate");
  for (const char* stage : {"fit-t2", "smooth", "assign", "study"}) {
    const CliRun r = run({stage, "--config", (kDemo / "config.json").string(), "--out", out.string(), "--validate"});
    EXPECT_EQ(r.code, 0) << stage << ": " << r.err;
  }
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, AssignBothMethodsProducesAgreement) {
  const fs::path out = fresh_dir("t2fe_cli_assign");
  const std::string cfg = (kDemo / "config.json").string();
  ASSERT_EQ(run({"fit-t2", "--config", cfg, "--out", out.string()}).code, 0);
  ASSERT_EQ(run({"smooth", "--config", cfg, "--out", out.string()}).code, 0);
  CliRun r = run({"assign", "--config", cfg, "--out", out.string(), "--method", "weighted"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(out / "agreement.csv"));
  r = run({"assign", "--config", cfg, "--out", out.string(), "--method", "nn"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string agreement = slurp(out / "agreement.csv");
  for (const char* key : {"bias,", "sd,", "loa_low,", "loa_high,", "r_squared,"})
    EXPECT_NE(agreement.find(key), std::string::npos) << key;
  EXPECT_TRUE(fs::exists(out / "texture.csv"));
  EXPECT_NE(r.out.find("bias"), std::string::npos);

  // Byte-identical re-run.
  const std::string before = slurp(out / "t2e_nn.csv");
  ASSERT_EQ(run({"assign", "--config", cfg, "--out", out.string(), "--method", "nn"}).code, 0);
  EXPECT_EQ(slurp(out / "t2e_nn.csv"), before);

  ASSERT_EQ(run({"relate", "--config", cfg, "--out", out.string()}).code, 0);
  EXPECT_TRUE(fs::exists(out / "e_d.csv"));
  EXPECT_TRUE(fs::exists(out / "materials.csv"));
  ASSERT_EQ(run({"perturb", "--config", cfg, "--out", out.string(), "--family", "slope", "--fractions", "0.1,0.5"}).code, 0);
  EXPECT_TRUE(fs::exists(out / "perturb" / "relation_slope_f+0.50.json"));
  fs::remove_all(out);
}

TEST(Cli, StudyWithZeroFractionReportsZeros) {
  const fs::path out = fresh_dir("t2fe_cli_study_zero");
  const CliRun r = run({"study", "--config", (kDemo / "config.json").string(), "--out", out.string(), "--fractions", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(out / "study" / "percent_change_tau_max_stress.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "+0.00,0,0,0");
  EXPECT_EQ(run({"report", "--config", (kDemo / "config.json").string(), "--out", out.string()}).code, 0);
  EXPECT_TRUE(fs::exists(out / "study_summary.csv"));
  fs::remove_all(out);
}

TEST(Cli, SolveStageWritesPerStepResults) {
  const fs::path out = fresh_dir("t2fe_cli_solve");
  const std::string cfg = (kDemo / "config.json").string();
  for (const char* stage : {"fit-t2", "smooth", "assign", "relate", "solve"}) {
    const CliRun r = run({stage, "--config", cfg, "--out", out.string(), "--jobs", "2"});
    ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
  }
  EXPECT_TRUE(fs::exists(out / "solution" / "diagnostics.json"));
  EXPECT_TRUE(fs::exists(out / "solution" / "step_001.csv"));
  fs::remove_all(out);
}
