#include "mjls/cli.h"

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mjls/error.h"
#include "mjls/game.h"
#include "mjls/io.h"
#include "mjls/operators.h"
#include "mjls/riccati.h"
#include "mjls/sim.h"
#include "mjls/stability.h"

namespace mjls {

using nlohmann::json;

namespace {

struct Settings {
  std::string model_path;
  int grid_cells = 0;
  double gamma = 0.0;
  double tol = 0.0;
  int max_iter = 0;
  int horizon = 60;
  int paths = 1000;
  std::uint64_t seed = 1;
  std::string out_dir;
  // command specific
  std::string riccati_mode = "maximal";
  std::string q_source = "from:c";
  double r_weight = 1.0;
  std::string p_file;
  std::string rhs = "identity";
  std::string gain = "game";
  std::string disturbance = "none";
};

struct Result {
  json report;
  std::map<std::string, std::string> files;  // file name -> contents
};

LoadedModel Load(const Settings& s) {
  return LoadModelFile(s.model_path, s.grid_cells > 0 ? std::optional<int>(s.grid_cells) : std::nullopt);
}

double Gamma(const Settings& s, const LoadedModel& m) {
  if (s.gamma > 0.0) return s.gamma;
  if (m.gamma) return *m.gamma;
  throw ConfigError("gamma is required (--gamma or a 'gamma' entry in the model)");
}

GameOptions MakeGameOptions(const Settings& s) {
  GameOptions o;
  if (s.tol > 0.0) o.tol = s.tol;
  if (s.max_iter > 0) o.max_iter = s.max_iter;
  return o;
}

json StabilityJson(const StabilityReport& r) {
  return {{"spectral_radius_L", JsonNumber(r.spectral_radius_L)},
          {"spectral_radius_T", JsonNumber(r.spectral_radius_T)},
          {"emss", r.emss},
          {"marginal", r.marginal},
          {"converged", r.converged},
          {"certificate_margin", r.lyapunov_certificate ? JsonNumber(r.margin) : json(nullptr)}};
}

json GameJson(const GameSolution& g) {
  json j = {{"converged", g.converged},
            {"iterations", g.iterations},
            {"last_step", JsonNumber(g.last_step)},
            {"p1_max_eigenvalue", JsonNumber(g.p1_max_eig)},
            {"closed_loop_radius", JsonNumber(g.closed_loop_radius)},
            {"closed_loop_emss", g.closed_loop_radius < 1.0 - kMarginalBand},
            {"residuals",
             {{"p1", JsonNumber(g.residuals.p1)},
              {"k1", JsonNumber(g.residuals.k1)},
              {"k2", JsonNumber(g.residuals.k2)}}}};
  if (!g.hinf) {
    j["p2_min_eigenvalue"] = JsonNumber(g.p2_min_eig);
    j["residuals"]["p2"] = JsonNumber(g.residuals.p2);
  }
  return j;
}

Result CmdValidate(const Settings& s) {
  const LoadedModel m = Load(s);
  Result r;
  r.report = {{"valid", true},
              {"name", m.name},
              {"cells", m.model.grid->size()},
              {"components", m.model.grid->num_components()},
              {"n", m.model.n()},
              {"m", m.model.m()},
              {"p", m.model.p()},
              {"r", m.model.r()}};
  return r;
}

Result CmdStability(const Settings& s) {
  const LoadedModel m = Load(s);
  StabilityOptions opts;
  if (s.tol > 0.0) opts.radius_tol = s.tol;
  if (s.max_iter > 0) opts.radius_max_iter = s.max_iter;
  const StabilityReport rep = CheckEmss(m.model.A, m.model.kernel, opts);
  Result r;
  r.report = StabilityJson(rep);
  if (rep.lyapunov_certificate) r.files["certificate.csv"] = FieldCsv(*rep.lyapunov_certificate);
  return r;
}

Result CmdDetect(const Settings& s) {
  const LoadedModel m = Load(s);
  const DetectabilityGain d = SynthDetectabilityGain(m.model.A, m.model.C, m.model.kernel);
  Result r;
  r.report = {{"detectable", true}, {"closed_loop", StabilityJson(d.report)}};
  r.files["H.csv"] = FieldCsv(d.H);
  return r;
}

Result CmdLyapunov(const Settings& s) {
  const LoadedModel m = Load(s);
  const SystemModel& sys = m.model;
  MatrixField rhs;
  if (s.rhs == "identity") {
    rhs = MatrixField::Identity(sys.grid, sys.n());
  } else if (s.rhs == "ctc") {
    rhs = (sys.C.Transposed() * sys.C).Symmetrized();
  } else {
    throw ConfigError("--rhs must be identity or ctc");
  }
  const double tol = s.tol > 0.0 ? s.tol : 1e-11;
  const int max_iter = s.max_iter > 0 ? s.max_iter : 2000000;
  const MatrixField u = SolveLyapunovIdentity(sys.A, sys.kernel, rhs, tol, max_iter);
  const MatrixField residual = u - ApplyT(sys.A, sys.kernel, u) - rhs;
  Result r;
  r.report = {{"rhs", s.rhs},
              {"min_eigenvalue", JsonNumber(u.MinEigenvalue())},
              {"max_eigenvalue", JsonNumber(u.MaxEigenvalue())},
              {"residual", JsonNumber(residual.NormInf())}};
  r.files["U.csv"] = FieldCsv(u);
  return r;
}

Result CmdRiccati(const Settings& s) {
  const LoadedModel m = Load(s);
  const SystemModel& sys = m.model;
  MatrixField q;
  if (s.q_source == "from:c") {
    q = (sys.C.Transposed() * sys.C).Symmetrized();
  } else if (s.q_source == "identity") {
    q = MatrixField::Identity(sys.grid, sys.n());
  } else {
    throw ConfigError("--q must be from:c or identity");
  }
  if (!(s.r_weight > 0.0)) throw ConfigError("--r must be positive");
  Eigen::MatrixXd rmat = s.r_weight * Eigen::MatrixXd::Identity(sys.m(), sys.m());
  RiccatiProblem problem{sys.A, sys.B, q, MatrixField::Constant(sys.grid, rmat), sys.kernel};
  problem.Validate();
  const double tol = s.tol > 0.0 ? s.tol : 1e-9;

  RiccatiSolution sol;
  if (s.riccati_mode == "maximal") {
    RiccatiOptions opts;
    opts.tol = tol;
    if (s.max_iter > 0) opts.max_iter = s.max_iter;
    sol = SolveMaximal(problem, opts);
  } else if (s.riccati_mode == "certify") {
    if (s.p_file.empty()) throw ConfigError("certify needs --p FILE");
    sol = CertifyStabilizing(problem, ReadFieldCsv(sys.grid, s.p_file), tol);
  } else {
    throw ConfigError("mode must be maximal or certify");
  }
  Result r;
  r.report = {{"mode", s.riccati_mode},
              {"stabilizing", sol.stabilizing},
              {"W_residual", JsonNumber(sol.W_residual)},
              {"R_margin", JsonNumber(sol.R_margin)},
              {"closed_loop_radius", JsonNumber(sol.closed_loop_radius)},
              {"iterations", sol.iterations},
              {"monotonicity_violation", JsonNumber(sol.monotonicity_violation)},
              {"P_min_eigenvalue", JsonNumber(sol.P.MinEigenvalue())}};
  r.files["P.csv"] = FieldCsv(sol.P);
  r.files["K.csv"] = FieldCsv(sol.K);
  if (s.riccati_mode == "certify" && !sol.stabilizing) {
    r.report["error"] = "candidate is not a stabilizing solution";
  }
  return r;
}

void AddNashValues(json& report, const LoadedModel& m, const GameSolution& g) {
  if (!m.x0) return;
  const NashValues v = ComputeNashValues(g, *m.x0, m.model.initial);
  report["J1"] = JsonNumber(v.j1);
  if (!g.hinf) report["J2"] = JsonNumber(v.j2);
}

Result CmdGame(const Settings& s) {
  const LoadedModel m = Load(s);
  const GameProblem problem{m.model, Gamma(s, m)};
  const GameSolution g = SolveGame(problem, MakeGameOptions(s));
  Result r;
  r.report = GameJson(g);
  r.report["gamma"] = problem.gamma;
  AddNashValues(r.report, m, g);
  r.files["P1.csv"] = FieldCsv(g.P1);
  r.files["P2.csv"] = FieldCsv(g.P2);
  r.files["K1.csv"] = FieldCsv(g.K1);
  r.files["K2.csv"] = FieldCsv(g.K2);
  return r;
}

Result CmdHinf(const Settings& s) {
  const LoadedModel m = Load(s);
  const GameProblem problem{m.model, Gamma(s, m)};
  const GameSolution g = SolveHinf(problem, MakeGameOptions(s));
  Result r;
  r.report = GameJson(g);
  r.report["gamma"] = problem.gamma;
  AddNashValues(r.report, m, g);
  r.files["P1.csv"] = FieldCsv(g.P1);
  r.files["K1.csv"] = FieldCsv(g.K1);
  r.files["K2.csv"] = FieldCsv(g.K2);
  return r;
}

Result CmdH2Hinf(const Settings& s) {
  const LoadedModel m = Load(s);
  const GameProblem problem{m.model, Gamma(s, m)};
  const GameSolution g = SolveGame(problem, MakeGameOptions(s));
  const BrlCheck brl = VerifyBrl(problem, g.K2, g.P1);
  const SystemModel& sys = m.model;
  const StabilityReport control_loop = CheckEmss(sys.A + sys.B * g.K2, sys.kernel);
  bool detectable = true;
  try {
    SynthDetectabilityGain(sys.A + sys.F * g.K1, sys.C, sys.kernel);
  } catch (const SolverError&) {
    detectable = false;
  }
  Result r;
  r.report = GameJson(g);
  r.report["gamma"] = problem.gamma;
  r.report["bounded_real"] = {{"holds", brl.holds},
                              {"p1_max_eigenvalue", JsonNumber(brl.p1_max_eig)},
                              {"residual", JsonNumber(brl.residual)},
                              {"h1_margin", JsonNumber(brl.h1_margin)},
                              {"closed_loop_radius", JsonNumber(brl.closed_loop_radius)}};
  r.report["control_loop"] = StabilityJson(control_loop);
  r.report["detectable_worst_case_pair"] = detectable;
  r.report["design_valid"] = g.converged && brl.holds && control_loop.emss && detectable;
  AddNashValues(r.report, m, g);
  r.files["P1.csv"] = FieldCsv(g.P1);
  r.files["P2.csv"] = FieldCsv(g.P2);
  r.files["K1.csv"] = FieldCsv(g.K1);
  r.files["K2.csv"] = FieldCsv(g.K2);
  return r;
}

struct Gains {
  std::optional<MatrixField> control;
  std::optional<MatrixField> disturbance;
};

Gains DesignGains(const Settings& s, const LoadedModel& m, const std::string& which) {
  if (which == "none") return {};
  const GameProblem problem{m.model, Gamma(s, m)};
  if (which == "game") {
    GameSolution g = SolveGame(problem, MakeGameOptions(s));
    return {std::move(g.K2), std::move(g.K1)};
  }
  if (which == "hinf") {
    GameSolution g = SolveHinf(problem, MakeGameOptions(s));
    return {std::move(g.K2), std::move(g.K1)};
  }
  throw ConfigError("--gain must be game, hinf or none");
}

json StatsJson(const TrajectoryStats& st) {
  const std::size_t last = static_cast<std::size_t>(st.horizon);
  json occupancy = json::array();
  for (double o : st.component_occupancy) occupancy.push_back(o);
  return {{"horizon", st.horizon},
          {"paths", st.n_paths},
          {"final_mean_sq_norm", JsonNumber(st.mean_sq_norm[last])},
          {"final_J2", JsonNumber(st.J2[last])},
          {"final_ratio", JsonNumber(st.ratio[last])},
          {"overflow_paths", st.overflow_paths},
          {"component_occupancy", occupancy}};
}

Result CmdSimulate(const Settings& s) {
  const LoadedModel m = Load(s);
  Gains gains = DesignGains(s, m, s.gain);
  SimPlan plan;
  plan.system = m.model;
  plan.control_gain = gains.control;
  if (s.disturbance == "feedback") {
    if (!gains.disturbance) throw ConfigError("--disturbance feedback needs a designed gain");
    plan.disturbance = DisturbanceKind::kFeedback;
    plan.disturbance_gain = gains.disturbance;
  } else if (s.disturbance != "none") {
    throw ConfigError("--disturbance must be none or feedback");
  }
  plan.x0 = m.x0 ? *m.x0 : Eigen::VectorXd::Ones(m.model.n());
  plan.horizon = s.horizon;
  plan.n_paths = s.paths;
  plan.seed = s.seed;
  const TrajectoryStats st = RunPaths(plan);
  Result r;
  r.report = StatsJson(st);
  r.files["trajectory.csv"] = StatsCsv(st);
  return r;
}

Result CmdRatio(const Settings& s) {
  const LoadedModel m = Load(s);
  const Gains gains = DesignGains(s, m, s.gain == "none" ? "game" : s.gain);
  const TrajectoryStats st = HinfRatioRun(m.model, *gains.control, s.horizon, s.paths, s.seed);
  Result r;
  r.report = StatsJson(st);
  r.report["gamma"] = Gamma(s, m);
  double worst_tail = 0.0;
  for (int k = std::min(20, s.horizon); k <= s.horizon; ++k) {
    worst_tail = std::max(worst_tail, st.ratio[static_cast<std::size_t>(k)]);
  }
  r.report["max_ratio_from_k20"] = JsonNumber(worst_tail);
  r.files["ratio.csv"] = StatsCsv(st);
  return r;
}

Result CmdCompareJ2(const Settings& s) {
  const LoadedModel m = Load(s);
  const Gains mixed = DesignGains(s, m, "game");
  const Gains hinf = DesignGains(s, m, "hinf");
  SimPlan a;
  a.system = m.model;
  a.control_gain = mixed.control;
  a.disturbance = DisturbanceKind::kFeedback;
  a.disturbance_gain = mixed.disturbance;
  a.x0 = m.x0 ? *m.x0 : Eigen::VectorXd::Ones(m.model.n());
  a.horizon = s.horizon;
  a.n_paths = s.paths;
  a.seed = s.seed;
  SimPlan b = a;
  b.control_gain = hinf.control;
  const J2Comparison c = CompareJ2(a, b);
  std::ostringstream csv;
  csv << std::setprecision(17) << "k,J2_mixed,J2_hinf,difference,difference_std_err\n";
  for (std::size_t k = 0; k < c.j2_a.size(); ++k) {
    csv << k << ',' << c.j2_a[k] << ',' << c.j2_b[k] << ',' << c.difference[k] << ','
        << c.difference_std_err[k] << '\n';
  }
  Result r;
  const std::size_t last = c.j2_a.size() - 1;
  r.report = {{"horizon", s.horizon},
              {"paths", s.paths},
              {"J2_mixed", JsonNumber(c.j2_a[last])},
              {"J2_hinf", JsonNumber(c.j2_b[last])},
              {"difference", JsonNumber(c.difference[last])},
              {"difference_std_err", JsonNumber(c.difference_std_err[last])},
              {"mixed_not_worse", c.difference[last] <= 2.0 * c.difference_std_err[last]}};
  r.files["compare_j2.csv"] = csv.str();
  return r;
}

void AddModelOptions(CLI::App* sub, Settings& s) {
  sub->add_option("model", s.model_path, "Model JSON file")->required()->check(CLI::ExistingFile);
  sub->add_option("--grid-cells", s.grid_cells, "Cells per component (overrides the model)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--tol", s.tol, "Solver tolerance (module default when omitted)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--max-iter", s.max_iter, "Iteration cap (module default when omitted)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--out", s.out_dir, "Directory for report.json and CSV artifacts");
}

void AddGameOptions(CLI::App* sub, Settings& s) {
  sub->add_option("--gamma", s.gamma, "Attenuation level")->check(CLI::PositiveNumber);
}

void AddSimOptions(CLI::App* sub, Settings& s) {
  sub->add_option("--horizon", s.horizon, "Simulation horizon")->check(CLI::PositiveNumber);
  sub->add_option("--paths", s.paths, "Number of Monte Carlo paths")->check(CLI::PositiveNumber);
  sub->add_option("--seed", s.seed, "Random seed");
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Analysis and synthesis for Markov jump linear systems on general mode spaces"};
  app.name("mjls");
  app.require_subcommand(1);
  Settings s;
  std::map<CLI::App*, std::function<Result(const Settings&)>> handlers;

  auto add = [&](const char* name, const char* help, std::function<Result(const Settings&)> fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    AddModelOptions(sub, s);
    handlers[sub] = std::move(fn);
    return sub;
  };

  add("validate", "Parse and validate a model", CmdValidate);
  add("stability", "Mean-square stability of the open loop", CmdStability);
  add("detect", "Synthesize an output-injection gain", CmdDetect);
  add("lyapunov", "Solve U - T_A(U) = V", CmdLyapunov)
      ->add_option("--rhs", s.rhs, "identity or ctc")
      ->check(CLI::IsMember({"identity", "ctc"}));
  CLI::App* ric = add("riccati", "Maximal or certified stabilizing Riccati solution", CmdRiccati);
  ric->add_option("mode", s.riccati_mode, "maximal or certify")
      ->check(CLI::IsMember({"maximal", "certify"}));
  ric->add_option("--q", s.q_source, "State weight: from:c or identity");
  ric->add_option("--r", s.r_weight, "Control weight (scalar times identity)");
  ric->add_option("--p", s.p_file, "Candidate P as a field CSV (certify)");
  AddGameOptions(add("game", "Nash game between control and disturbance", CmdGame), s);
  AddGameOptions(add("hinf", "H-infinity state feedback", CmdHinf), s);
  AddGameOptions(add("h2hinf", "Mixed H2/H-infinity design with bounded-real check", CmdH2Hinf), s);
  for (auto [name, help, fn] :
       {std::tuple{"simulate", "Monte Carlo trajectories", &CmdSimulate},
        std::tuple{"ratio", "Output-to-disturbance energy ratio", &CmdRatio},
        std::tuple{"compare-j2", "Mixed vs H-infinity cost under the worst-case disturbance",
                   &CmdCompareJ2}}) {
    CLI::App* sub = add(name, help, fn);
    AddGameOptions(sub, s);
    AddSimOptions(sub, s);
    if (std::string(name) != "compare-j2") {
      sub->add_option("--gain", s.gain, "game, hinf or none")
          ->check(CLI::IsMember({"game", "hinf", "none"}));
    }
    if (std::string(name) == "simulate") {
      sub->add_option("--disturbance", s.disturbance, "none or feedback")
          ->check(CLI::IsMember({"none", "feedback"}));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    Result r = handlers.at(chosen)(s);
    r.report = {{"command", chosen->get_name()}, {"model", s.model_path}, {"result", r.report}};
    const std::string text = r.report.dump(2) + "\n";
    out << text;
    if (!s.out_dir.empty()) {
      std::filesystem::create_directories(s.out_dir);
      const std::filesystem::path dir(s.out_dir);
      WriteTextFile((dir / "report.json").string(), text);
      for (const auto& [name, contents] : r.files) WriteTextFile((dir / name).string(), contents);
    }
    if (r.report["result"].contains("error")) return kExitSolver;
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}

}  // namespace mjls
