#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.h"
#include "json.hpp"
#include "mjls/cli.h"
#include "mjls/error.h"
#include "mjls/game.h"
#include "mjls/io.h"

using namespace mjls;
using nlohmann::json;

namespace {

int CountLines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

json MinimalDoc() {
  return json::parse(R"({
    "grid": {"components": [{"label": "x", "interval": [0, 1], "cells": 2},
                            {"label": "y", "interval": [0, 2], "cells": 2}]},
    "kernel": {"block_probs": [[0.5, 0.5], [0.2, 0.8]]},
    "fields": {"A": {"kind": "constant", "per_component": [0.5, 0.25]}}
  })");
}

std::string ErrorOf(const json& doc) {
  try {
    ParseModel(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

CliRun Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mjls");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mjls_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Load, BundledModels) {
  const LoadedModel solar = fixture::Solar(50);
  EXPECT_EQ(solar.model.grid->size(), 100);
  EXPECT_NEAR(solar.model.A[25](0, 0), 0.93 + 0.51 * (0.73 - 0.93), 1e-15);
  EXPECT_NEAR(solar.model.B[75](0, 0), 0.0982, 1e-15);
  EXPECT_NEAR(solar.model.C[0](0, 0), 0.1885, 1e-15);
  EXPECT_DOUBLE_EQ(solar.model.kernel.density()(0, 0), 0.9767);
  EXPECT_DOUBLE_EQ(solar.model.kernel.density()(99, 99), 0.7611);

  const LoadedModel game = fixture::Game2d(50);
  EXPECT_EQ(game.model.n(), 2);
  EXPECT_DOUBLE_EQ(*game.gamma, 0.5);
  EXPECT_DOUBLE_EQ(game.model.kernel.density()(0, 99), 0.85);
  EXPECT_NEAR(game.model.C[12](0, 0), -0.3 * 0.25, 1e-15);
}

TEST(Load, DefaultsAndUniformInitial) {
  const LoadedModel m = ParseModel(MinimalDoc());
  EXPECT_EQ(m.model.m(), 1);
  EXPECT_EQ(m.model.B.NormInf(), 0.0);
  EXPECT_NEAR(m.model.initial.Probabilities().sum(), 1.0, 1e-15);
  EXPECT_NEAR(m.model.initial.values()(0), 1.0 / 3.0, 1e-15);
  EXPECT_FALSE(m.x0.has_value());
}

TEST(Load, MalformedKernelRowIsNamed) {
  json doc = MinimalDoc();
  doc["kernel"]["block_probs"][1] = {0.3, 0.3};
  const std::string e = ErrorOf(doc);
  EXPECT_NE(e.find("row 1"), std::string::npos) << e;

  doc = MinimalDoc();
  doc["kernel"] = json::parse(R"({"density": [[1,1,0,0],[1,1,0,0],[0,0,0.5,0.5],[0,0,0.5,0.1]]})");
  const std::string d = ErrorOf(doc);
  EXPECT_NE(d.find("row 3"), std::string::npos) << d;
}

TEST(Load, ErrorsCarryJsonPointers) {
  json doc = MinimalDoc();
  doc["fields"]["A"]["per_component"][1] = "oops";
  EXPECT_NE(ErrorOf(doc).find("/fields/A/per_component/1"), std::string::npos) << ErrorOf(doc);

  doc = MinimalDoc();
  doc["grid"]["components"][0].erase("cells");
  EXPECT_NE(ErrorOf(doc).find("/grid/components/0/cells"), std::string::npos) << ErrorOf(doc);

  doc = MinimalDoc();
  doc["fields"]["A"]["kind"] = "spline";
  EXPECT_NE(ErrorOf(doc).find("/fields/A/kind"), std::string::npos);
}

TEST(Load, RejectsNonOrthonormalD) {
  json doc = MinimalDoc();
  doc["fields"]["D"] = json::parse(R"({"kind": "constant", "per_component": [2, 2]})");
  EXPECT_THROW(ParseModel(doc), ConfigError);
}

TEST(Load, RejectsBadInitialDensity) {
  json doc = MinimalDoc();
  doc["initial"] = json::parse(R"({"component_probs": [0.7, 0.7]})");
  EXPECT_THROW(ParseModel(doc), ConfigError);
}

TEST(Load, MissingFileIsConfigError) {
  EXPECT_THROW(LoadModelFile("/nonexistent/model.json"), ConfigError);
}

TEST(RoundTrip, BitExact) {
  for (const LoadedModel& m : {fixture::Solar(25), fixture::Game2d(10)}) {
    const json doc = ModelToJson(m.model, m.name);
    const LoadedModel back = ParseModel(json::parse(doc.dump()));
    const SystemModel& a = m.model;
    const SystemModel& b = back.model;
    ASSERT_EQ(a.grid->size(), b.grid->size());
    EXPECT_EQ(a.kernel.density(), b.kernel.density());
    EXPECT_EQ(a.initial.values(), b.initial.values());
    for (auto field : {&SystemModel::A, &SystemModel::B, &SystemModel::C, &SystemModel::D, &SystemModel::F}) {
      for (int i = 0; i < a.grid->size(); ++i) EXPECT_EQ((a.*field)[i], (b.*field)[i]);
    }
  }
}

TEST(RoundTrip, TabulatedRejectsGridOverride) {
  const LoadedModel m = fixture::Solar(5);
  const json doc = ModelToJson(m.model, m.name);
  EXPECT_THROW(ParseModel(doc, 10), ConfigError);
}

TEST(FieldCsv, SingleCell) {
  const GridPtr g = fixture::Atoms(1);
  const std::string csv = FieldCsv(fixture::Scalar(g, 2.0));
  EXPECT_EQ(CountLines(csv), 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "component_label,t,row,col,value");
  EXPECT_NE(csv.find(",2\n"), std::string::npos) << csv;
}

TEST(FieldCsv, GameValueFieldShape) {
  const LoadedModel lm = fixture::Game2d(50);
  const GameSolution sol = SolveGame({lm.model, *lm.gamma});
  EXPECT_EQ(CountLines(FieldCsv(sol.P1)), 1 + 400);
}

TEST(FieldCsv, ZeroFieldAndReadBack) {
  const LoadedModel lm = fixture::Game2d(3);
  const std::string zero = FieldCsv(MatrixField::Zero(lm.model.grid, 2, 2));
  std::istringstream in(zero);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");

  const auto dir = TempDir("csv");
  const MatrixField a = lm.model.A;
  WriteFieldCsv(a, (dir / "a.csv").string());
  const MatrixField back = ReadFieldCsv(lm.model.grid, (dir / "a.csv").string());
  EXPECT_EQ(back.MaxAbsDiff(a), 0.0);
  std::filesystem::remove_all(dir);
}

TEST(StatsCsv, Header) {
  TrajectoryStats st;
  st.horizon = 1;
  st.mean_sq_norm = {1.0, 0.5};
  st.std_err = {0.0, 0.1};
  st.ratio = {std::nan(""), 0.2};
  st.J2 = {1.0, 1.5};
  const std::string csv = StatsCsv(st);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,mean_sq_norm,std_err,r_K,J2");
  EXPECT_EQ(CountLines(csv), 3);
}

TEST(JsonNumber, NonFiniteIsNull) {
  EXPECT_TRUE(JsonNumber(std::numeric_limits<double>::infinity()).is_null());
  EXPECT_EQ(JsonNumber(1.5).get<double>(), 1.5);
}

TEST(Cli, ValidateSucceeds) {
  const CliRun r = Cli({"validate", fixture::kModels + "/solar.json"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.report()["command"], "validate");
}

TEST(Cli, BadModelIsConfigError) {
  const auto dir = TempDir("bad");
  WriteTextFile((dir / "bad.json").string(), R"({"grid": {"components": []}})");
  EXPECT_EQ(Cli({"validate", (dir / "bad.json").string()}).code, kExitConfig);
  WriteTextFile((dir / "broken.json").string(), "{ not json");
  EXPECT_EQ(Cli({"validate", (dir / "broken.json").string()}).code, kExitConfig);
  std::filesystem::remove_all(dir);
}

TEST(Cli, UnknownSubcommandAndMissingArgs) {
  EXPECT_EQ(Cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(Cli({"riccati"}).code, kExitConfig);
}

TEST(Cli, RiccatiOnSolarModel) {
  const CliRun r = Cli({"riccati", fixture::kModels + "/solar.json", "--q", "from:c", "--r", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(r.report()["result"]["stabilizing"].get<bool>());
}

TEST(Cli, RiccatiCertifyRoundTrip) {
  const auto dir = TempDir("certify");
  const std::string model = fixture::kModels + "/solar.json";
  ASSERT_EQ(Cli({"riccati", model, "--grid-cells", "10", "--out", dir.string()}).code, kExitOk);
  const CliRun ok = Cli({"riccati", model, "certify", "--grid-cells", "10", "--p", (dir / "P.csv").string()});
  EXPECT_EQ(ok.code, kExitOk) << ok.err;
  EXPECT_TRUE(ok.report()["result"]["stabilizing"].get<bool>());
  std::filesystem::remove_all(dir);
}

TEST(Cli, H2HinfOnGameModel) {
  const auto dir = TempDir("h2hinf");
  const CliRun r = Cli({"h2hinf", fixture::kModels + "/game2d.json", "--gamma", "0.5", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json res = r.report()["result"];
  EXPECT_TRUE(res["converged"].get<bool>());
  EXPECT_TRUE(res["design_valid"].get<bool>());
  EXPECT_LE(res["p1_max_eigenvalue"].get<double>(), 1e-6);
  EXPECT_GE(res["p2_min_eigenvalue"].get<double>(), -1e-6);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_EQ(CountLines(ReadTextFile((dir / "P1.csv").string())), 401);
  std::filesystem::remove_all(dir);
}

TEST(Cli, TinyGammaIsSolverFailure) {
  const CliRun r = Cli({"game", fixture::kModels + "/game2d.json", "--gamma", "0.01", "--grid-cells", "10"});
  EXPECT_EQ(r.code, kExitSolver);
  EXPECT_NE(r.err.find("H1"), std::string::npos) << r.err;
}

TEST(Cli, SimulateWritesTrajectory) {
  const auto dir = TempDir("sim");
  const CliRun r = Cli({"simulate", fixture::kModels + "/game2d.json", "--grid-cells", "10", "--horizon", "10",
                        "--paths", "50", "--seed", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(CountLines(ReadTextFile((dir / "trajectory.csv").string())), 12);
  std::filesystem::remove_all(dir);
}

TEST(Cli, OtherCommandsRun) {
  const std::string solar = fixture::kModels + "/solar.json";
  const std::string game = fixture::kModels + "/game2d.json";
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"stability", solar},
           {"detect", solar},
           {"lyapunov", solar, "--rhs", "ctc"},
           {"hinf", game, "--grid-cells", "10"},
           {"ratio", game, "--grid-cells", "10", "--horizon", "10", "--paths", "20"},
           {"compare-j2", game, "--grid-cells", "10", "--horizon", "10", "--paths", "20"}}) {
    const CliRun r = Cli(args);
    EXPECT_EQ(r.code, kExitOk) << args[0] << ": " << r.err;
  }
}
