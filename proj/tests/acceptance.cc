// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mjls/error.h"
#include "mjls/game.h"
#include "mjls/io.h"
#include "mjls/operators.h"
#include "mjls/riccati.h"
#include "mjls/sim.h"
#include "mjls/stability.h"
#include "oracles.h"

using namespace mjls;

namespace {

const std::string kModels = MJLS_MODELS_DIR;
constexpr std::uint64_t kSeed = 20240611;

// Every solve_maximal run feeds the monotonicity criterion.
struct KleinmanLog {
  double worst_violation = 0.0;
  double worst_gain_radius = 0.0;
  int runs = 0;

  void Add(const RiccatiSolution& s) {
    ++runs;
    worst_violation = std::max(worst_violation, s.monotonicity_violation);
    for (double r : s.gain_radius) worst_gain_radius = std::max(worst_gain_radius, r);
  }
};

KleinmanLog g_kleinman;

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

GridPtr AtomGrid(int atoms) {
  std::vector<GridComponent> comps;
  for (int i = 0; i < atoms; ++i) comps.push_back({"a" + std::to_string(i), 0.0, 1.0, 1});
  return BuildGrid(comps);
}

std::vector<std::vector<double>> Rows(const Eigen::MatrixXd& p) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(p.rows()));
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(p(i, j));
  return rows;
}

MatrixField FieldOf(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& per_cell) {
  return MatrixField(grid, per_cell);
}

// Lyapunov margins of the scalar certificates v = a^2 with gains -t.
Verdict Criterion1() {
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (int cells : {25, 50, 100}) {
    const LoadedModel lm = LoadModelFile(kModels + "/solar.json", cells);
    const SystemModel& s = lm.model;
    MatrixField gain(s.grid, 1, 1);
    for (int i = 0; i < s.grid->size(); ++i) gain[i](0, 0) = -s.grid->cell(i).t;
    const MatrixField v = s.A * s.A;
    const MatrixField control_loop = s.A + s.B * gain;
    const MatrixField output_loop = s.A + gain * s.C;
    const double m1 = (v - ApplyT(control_loop, s.kernel, v)).MinEigenvalue();
    const double m2 = (v - ApplyT(output_loop, s.kernel, v)).MinEigenvalue();
    const bool e1 = CheckEmss(control_loop, s.kernel).emss;
    const bool e2 = CheckEmss(output_loop, s.kernel).emss;

    // The LQ problem built from the same data also feeds the Kleinman log.
    RiccatiProblem lq{s.A, s.B, (s.C.Transposed() * s.C).Symmetrized(), MatrixField::Identity(s.grid, 1),
                      s.kernel};
    const RiccatiSolution sol = SolveMaximal(lq);
    g_kleinman.Add(sol);

    ok = ok && m1 > 0.0 && m2 > 0.0 && e1 && e2 && sol.stabilizing;
    detail << cells << " cells: margins " << m1 << ", " << m2 << (e1 && e2 ? " emss" : " NOT emss")
           << "; ";
  }
  const double t = Seconds(start);
  ok = ok && t < 5.0;
  detail << "runtime " << t << " s";
  return {ok, detail.str()};
}

struct Example2 {
  LoadedModel lm;
  GameProblem problem;
  GameSolution game;
  GameSolution hinf;
  double game_seconds = 0.0;
};

const Example2& Ex2() {
  static Example2 ex = [] {
    Example2 e;
    e.lm = LoadModelFile(kModels + "/game2d.json", 50);
    e.problem = GameProblem{e.lm.model, *e.lm.gamma};
    const auto start = std::chrono::steady_clock::now();
    e.game = SolveGame(e.problem);
    e.game_seconds = Seconds(start);
    e.hinf = SolveHinf(e.problem);
    return e;
  }();
  return ex;
}

Verdict Criterion2() {
  const Example2& e = Ex2();
  const GameSolution& g = e.game;
  std::ostringstream d;
  d << "converged " << g.converged << " in " << g.iterations << " steps, max eig P1 " << g.p1_max_eig
    << ", min eig P2 " << g.p2_min_eig << ", max residual " << g.residuals.max() << ", radius "
    << g.closed_loop_radius << ", runtime " << e.game_seconds << " s";
  const bool ok = g.converged && g.p1_max_eig <= 1e-6 && g.p2_min_eig >= -1e-6 &&
                  g.residuals.max() <= 1e-6 && g.closed_loop_radius < 1.0 && e.game_seconds < 60.0;
  return {ok, d.str()};
}

Verdict Criterion3() {
  const Example2& e = Ex2();
  const SystemModel& s = e.lm.model;
  Eigen::Matrix2d u1, u2;
  u1 << 1.3438, -0.6177, -0.6177, 0.4501;
  u2 << 0.1104, -0.0044, -0.0044, 1.3873;
  u1 *= 1e3;
  u2 *= 1e3;
  MatrixField u(s.grid, 2, 2);
  for (int i = 0; i < s.grid->size(); ++i) u[i] = s.grid->cell(i).component == 0 ? u1 : u2;
  const double slack = 1e-3 * u.NormInf();
  const std::vector<std::pair<std::string, MatrixField>> loops = {
      {"A+FK1", s.A + s.F * e.game.K1},
      {"A+BK2", s.A + s.B * e.game.K2},
      {"A+BK2inf+FK1inf", s.A + s.B * e.hinf.K2 + s.F * e.hinf.K1}};
  bool ok = true;
  std::ostringstream d;
  for (const auto& [name, acl] : loops) {
    const LyapunovInequalityResult r = VerifyLyapunovInequality(acl, s.kernel, u, slack);
    ok = ok && r.holds;
    d << name << " margin " << r.margin << "; ";
  }
  d << "allowed slack " << slack;
  return {ok, d.str()};
}

Verdict Criterion4() {
  const Example2& e = Ex2();
  const int horizon = 60;
  double worst_mixed = 0.0, worst_hinf = 0.0;
  const TrajectoryStats a = HinfRatioRun(e.lm.model, e.game.K2, horizon, 1000, kSeed);
  const TrajectoryStats b = HinfRatioRun(e.lm.model, e.hinf.K2, horizon, 1000, kSeed);
  for (int k = 20; k <= horizon; ++k) {
    worst_mixed = std::max(worst_mixed, a.ratio[static_cast<std::size_t>(k)]);
    worst_hinf = std::max(worst_hinf, b.ratio[static_cast<std::size_t>(k)]);
  }
  std::ostringstream d;
  d << "max r_K for k>=20: mixed " << worst_mixed << ", H-inf " << worst_hinf << " (gamma 0.5)";
  return {worst_mixed < 0.5 && worst_hinf < 0.5, d.str()};
}

Verdict Criterion5() {
  const Example2& e = Ex2();
  SimPlan a;
  a.system = e.lm.model;
  a.control_gain = e.game.K2;
  a.disturbance = DisturbanceKind::kFeedback;
  a.disturbance_gain = e.game.K1;
  a.x0 = *e.lm.x0;
  a.horizon = 60;
  a.n_paths = 1000;
  a.seed = kSeed;
  SimPlan b = a;
  b.control_gain = e.hinf.K2;
  const J2Comparison c = CompareJ2(a, b);
  const std::size_t last = c.j2_a.size() - 1;
  std::ostringstream d;
  d << "J2 mixed " << c.j2_a[last] << ", J2 H-inf " << c.j2_b[last] << ", difference "
    << c.difference[last] << " (std err " << c.difference_std_err[last] << ")";
  return {c.j2_a[last] <= c.j2_b[last] + 2.0 * c.difference_std_err[last], d.str()};
}

Verdict Criterion6() {
  std::mt19937_64 rng(kSeed);
  std::ostringstream d;
  bool ok = true;

  // (a) single atom against the scalar or symplectic DARE.
  {
    const GridPtr grid = AtomGrid(1);
    const KernelDensity kernel = BuildMarkovKernelFromBlocks(grid, {{1.0}});
    double worst = 0.0;
    int done = 0;
    while (done < 50) {
      const int n = 1 + done % 2;
      const int m = 1 + (done / 2) % 2;
      const Eigen::MatrixXd a = oracle::RandomMat(rng, n, n, 1.3);
      if (std::abs(a.determinant()) < 0.05) continue;
      const Eigen::MatrixXd g = oracle::RandomMat(rng, n, m, 1.0);
      const Eigen::MatrixXd c = oracle::RandomMat(rng, n, n, 1.0);
      const Eigen::MatrixXd q = c.transpose() * c + 0.1 * Eigen::MatrixXd::Identity(n, n);
      const Eigen::MatrixXd rr = oracle::RandomMat(rng, m, m, 0.5);
      const Eigen::MatrixXd r = rr * rr.transpose() + Eigen::MatrixXd::Identity(m, m);
      Eigen::MatrixXd ref;
      try {
        ref = (n == 1 && m == 1) ? Eigen::MatrixXd::Constant(1, 1, oracle::ScalarDare(a(0, 0), g(0, 0), q(0, 0), r(0, 0)))
                                 : oracle::SymplecticDare(a, g, q, r);
      } catch (const std::exception&) {
        continue;
      }
      RiccatiProblem p{MatrixField::Constant(grid, a), MatrixField::Constant(grid, g),
                       MatrixField::Constant(grid, q), MatrixField::Constant(grid, r), kernel};
      RiccatiOptions opts;
      opts.tol = 1e-11;
      const RiccatiSolution sol = SolveMaximal(p, opts);
      g_kleinman.Add(sol);
      worst = std::max(worst, (sol.P[0] - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.norm()));
      ++done;
    }
    ok = ok && worst <= 1e-8;
    d << "(a) worst rel. error " << worst << "; ";
  }

  // (b) atomic finite-mode grids against value iteration.
  {
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      const int atoms = 2 + inst % 3;
      const int n = 1 + (inst / 3) % 2;
      const GridPtr grid = AtomGrid(atoms);
      const Eigen::MatrixXd prob = oracle::RandomStochastic(rng, atoms);
      const KernelDensity kernel = BuildMarkovKernelFromBlocks(grid, Rows(prob));
      std::vector<Eigen::MatrixXd> av, gv, qv, rv;
      for (int i = 0; i < atoms; ++i) {
        av.push_back(oracle::RandomMat(rng, n, n, 1.2));
        gv.push_back(oracle::RandomMat(rng, n, 1, 1.0));
        const Eigen::MatrixXd c = oracle::RandomMat(rng, n, n, 1.0);
        qv.push_back(c.transpose() * c + 0.1 * Eigen::MatrixXd::Identity(n, n));
        rv.push_back(Eigen::MatrixXd::Constant(1, 1, 0.5 + std::uniform_real_distribution<double>(0, 1)(rng)));
      }
      RiccatiProblem p{FieldOf(grid, av), FieldOf(grid, gv), FieldOf(grid, qv), FieldOf(grid, rv), kernel};
      RiccatiSolution sol;
      try {
        RiccatiOptions opts;
        opts.tol = 1e-11;
        sol = SolveMaximal(p, opts);
      } catch (const SolverError&) {
        continue;  // not stabilizable from the search; value iteration would diverge too
      }
      g_kleinman.Add(sol);
      const auto ref = oracle::CoupledValueIteration(av, gv, qv, rv, prob);
      for (int i = 0; i < atoms; ++i) {
        const double scale = std::max(1.0, ref[static_cast<std::size_t>(i)].norm());
        worst = std::max(worst, (sol.P[i] - ref[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() / scale);
      }
    }
    ok = ok && worst <= 1e-8;
    d << "(b) worst rel. error " << worst << "; ";
  }

  // (c) adjointness of T and L.
  {
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const int n = 1 + inst % 3;
      const GridPtr grid = BuildGrid({{"x", 0.0, 1.0, 1 + inst % 5}, {"y", -1.0, 2.0, 1 + inst % 4}});
      Eigen::MatrixXd dens(grid->size(), grid->size());
      for (int i = 0; i < grid->size(); ++i) {
        for (int j = 0; j < grid->size(); ++j) dens(i, j) = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
        dens.row(i) /= dens.row(i).dot(grid->weights());
      }
      const KernelDensity kernel(grid, dens, kAnalyticKernelTolerance);
      std::vector<Eigen::MatrixXd> qv, uv, vv;
      for (int i = 0; i < grid->size(); ++i) {
        qv.push_back(oracle::RandomMat(rng, n, n, 2.0));
        uv.push_back(oracle::RandomMat(rng, n, n, 3.0));
        vv.push_back(oracle::RandomMat(rng, n, n, 3.0));
      }
      const MatrixField q(grid, qv), u(grid, uv), v(grid, vv);
      const double lhs = Pairing(ApplyL(q, kernel, v), u);
      const double rhs = Pairing(v, ApplyT(q, kernel, u));
      double scale = 0.0;
      for (int i = 0; i < grid->size(); ++i) {
        scale += grid->cell(i).weight * v[i].norm() * q[i].norm() * q[i].norm() * u[i].norm();
      }
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(scale, 1e-300));
    }
    ok = ok && worst <= 1e-12;
    d << "(c) worst rel. gap " << worst << "; ";
  }

  // (d) square root of PSD fields.
  {
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const int n = 1 + inst % 3;
      const GridPtr grid = BuildGrid({{"x", 0.0, 1.0, 1 + inst % 6}});
      std::vector<Eigen::MatrixXd> pv;
      for (int i = 0; i < grid->size(); ++i) {
        const Eigen::MatrixXd l = oracle::RandomMat(rng, n, n, 1.0);
        const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2, 3)(rng));
        pv.push_back(scale * (l * l.transpose() + 0.05 * Eigen::MatrixXd::Identity(n, n)));
      }
      const MatrixField p(grid, pv);
      const MatrixField sq = SqrtField(p);
      for (int i = 0; i < grid->size(); ++i) {
        const double err = (sq[i] * sq[i] - p[i]).cwiseAbs().maxCoeff() / std::max(1.0, p[i].norm());
        worst = std::max(worst, err);
      }
    }
    ok = ok && worst <= 1e-10;
    d << "(d) worst rel. error " << worst;
  }
  return {ok, d.str()};
}

Verdict Criterion7() {
  std::mt19937_64 rng(kSeed + 7);
  int instances = 0, disagreements = 0, stable = 0, skipped = 0;
  while (instances < 50) {
    const int n = 1 + instances % 2;
    const int comps = 1 + (instances / 2) % 2;
    const int cells_per = 1 + (instances / 4) % 4;
    std::vector<GridComponent> gc;
    for (int c = 0; c < comps; ++c) gc.push_back({"c" + std::to_string(c), 0.0, 0.5 + c, cells_per});
    const GridPtr grid = BuildGrid(gc);
    const int m = grid->size();
    Eigen::MatrixXd dens(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) dens(i, j) = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
      dens.row(i) /= dens.row(i).dot(grid->weights());
    }
    const KernelDensity kernel(grid, dens, kAnalyticKernelTolerance);
    const double spread = std::uniform_real_distribution<double>(0.4, 1.6)(rng);
    std::vector<Eigen::MatrixXd> av, cv;
    for (int i = 0; i < m; ++i) {
      av.push_back(oracle::RandomMat(rng, n, n, spread));
      Eigen::MatrixXd c = oracle::RandomMat(rng, n, n, 1.0);
      while (std::abs(c.determinant()) < 0.1) c = oracle::RandomMat(rng, n, n, 1.0);
      cv.push_back(c);  // invertible C: A - A C^{-1} C = 0, so detectable
    }
    // Oracle: dense (I - T) vec(U) = vec(C'C) and a PSD check.
    Eigen::MatrixXd w(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) w(i, j) = dens(i, j) * grid->cell(j).weight;
    const Eigen::MatrixXd t = oracle::DenseT(av, w);
    const double radius = oracle::DenseSpectralRadius(t);
    if (std::abs(radius - 1.0) < 0.02) {
      ++skipped;  // numerically marginal; neither verdict is meaningful
      continue;
    }
    Eigen::VectorXd rhs(m * n * n);
    for (int i = 0; i < m; ++i) {
      const Eigen::MatrixXd ctc = cv[static_cast<std::size_t>(i)].transpose() * cv[static_cast<std::size_t>(i)];
      rhs.segment(i * n * n, n * n) = Eigen::Map<const Eigen::VectorXd>(ctc.data(), n * n);
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m * n * n, m * n * n) - t;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    bool psd_solvable = false;
    if (lu.isInvertible()) {
      const Eigen::VectorXd sol = lu.solve(rhs);
      psd_solvable = true;
      const double scale = std::max(1.0, sol.cwiseAbs().maxCoeff());
      for (int i = 0; i < m; ++i) {
        const Eigen::MatrixXd ui = Eigen::Map<const Eigen::MatrixXd>(sol.data() + i * n * n, n, n);
        if (oracle::MinEig(ui) < -1e-9 * scale) psd_solvable = false;
      }
    }
    StabilityOptions opts;
    opts.compute_certificate = false;
    const bool emss = CheckEmss(MatrixField(grid, av), kernel, opts).emss;
    if (emss != psd_solvable) ++disagreements;
    stable += emss ? 1 : 0;
    ++instances;
  }
  std::ostringstream d;
  d << instances << " instances (" << stable << " EMSS, " << skipped << " marginal skipped), "
    << disagreements << " disagreements";
  return {disagreements == 0 && stable > 0 && stable < instances, d.str()};
}

Verdict Criterion8() {
  std::ostringstream d;
  d << g_kleinman.runs << " runs, max violation " << g_kleinman.worst_violation
    << ", worst intermediate gain radius " << g_kleinman.worst_gain_radius;
  return {g_kleinman.runs > 0 && g_kleinman.worst_violation <= 1e-10 &&
              g_kleinman.worst_gain_radius < 1.0,
          d.str()};
}

Verdict Criterion9() {
  const Example2& e = Ex2();
  const SystemModel& s = e.lm.model;
  const MatrixField acl = s.A + s.B * e.game.K2;
  const int horizon = 30;
  const CorrelationSequence corr = PropagateCorrelation(acl, s.kernel, *e.lm.x0, s.initial, horizon);
  SimPlan plan;
  plan.system = s;
  plan.control_gain = e.game.K2;
  plan.x0 = *e.lm.x0;
  plan.horizon = horizon;
  plan.n_paths = 1000;
  plan.seed = kSeed;
  const TrajectoryStats st = RunPaths(plan);
  const MatrixField eye = MatrixField::Identity(s.grid, s.n());
  int failing = 0, first_bad = -1;
  double bad_mc = 0.0, bad_exact = 0.0, bad_se = 0.0;
  for (int k = 0; k <= horizon; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    const double exact = Pairing(corr.X[i], eye);
    const double allowed = 3.0 * st.std_err[i] + 1e-12 * std::max(1.0, exact);
    if (std::abs(st.mean_sq_norm[i] - exact) > allowed) {
      if (first_bad < 0) {
        first_bad = k;
        bad_mc = st.mean_sq_norm[i];
        bad_exact = exact;
        bad_se = st.std_err[i];
      }
      ++failing;
    }
  }
  std::ostringstream d;
  d << (horizon + 1 - failing) << " of " << (horizon + 1) << " steps within 3 std err";
  if (first_bad >= 0) {
    d << "; first miss at k = " << first_bad << ": MC " << bad_mc << " +- " << bad_se << ", exact "
      << bad_exact;
  }
  return {failing == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, Criterion1}, {2, Criterion2}, {3, Criterion3}, {4, Criterion4}, {5, Criterion5},
      {6, Criterion6}, {7, Criterion7}, {8, Criterion8}, {9, Criterion9}};
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
