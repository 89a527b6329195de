#include "mjls/game.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "mjls/error.h"
#include "mjls/operators.h"

namespace mjls {

namespace {

double MinEig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Eigen::MatrixXd Sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// One backward step. Inputs are the values at k+1, outputs the values at k.
struct Stage {
  MatrixField P1, P2, K1, K2, K3, K4, H1, H2;
};

enum class Design { kNash, kHinf };

Stage BackwardStep(const SystemModel& s, double gamma, const Stage& next, Design design, int step) {
  const GridPtr& grid = s.grid;
  const int n = s.n();
  const int m = s.m();
  const int r = s.r();
  const Eigen::MatrixXd eye_r = Eigen::MatrixXd::Identity(r, r);
  const Eigen::MatrixXd eye_m = Eigen::MatrixXd::Identity(m, m);
  const double h1_floor = 1e-10 * gamma * gamma;
  const double h2_floor = 1e-10;

  const MatrixField e1 = ApplyE(s.kernel, next.P1);
  // The control player values the cost with P2, or with -P1 for the
  // H-infinity design.
  const MatrixField e2 = design == Design::kNash ? ApplyE(s.kernel, next.P2) : -1.0 * e1;

  Stage out;
  out.P1 = MatrixField(grid, n, n);
  out.K1 = MatrixField(grid, r, n);
  out.K2 = MatrixField(grid, m, n);
  out.K3 = MatrixField(grid, r, n);
  out.K4 = MatrixField(grid, m, n);
  out.H1 = MatrixField(grid, r, r);
  out.H2 = MatrixField(grid, m, m);
  if (design == Design::kNash) out.P2 = MatrixField(grid, n, n);

  for (int i = 0; i < grid->size(); ++i) {
    const Eigen::MatrixXd& A = s.A[i];
    const Eigen::MatrixXd& B = s.B[i];
    const Eigen::MatrixXd& F = s.F[i];
    const Eigen::MatrixXd& C = s.C[i];

    const Eigen::MatrixXd h1 = Sym(gamma * gamma * eye_r + F.transpose() * e1[i] * F);
    const Eigen::MatrixXd h2 = Sym(eye_m + B.transpose() * e2[i] * B);
    const double h1_min = MinEig(h1);
    if (!(h1_min > h1_floor)) {
      std::ostringstream os;
      os << "disturbance weight H1 lost positive definiteness at cell " << i << ", step " << step
         << " (min eigenvalue " << h1_min << "); gamma may be too small";
      throw SolverError(os.str());
    }
    const double h2_min = MinEig(h2);
    if (!(h2_min > h2_floor)) {
      std::ostringstream os;
      os << "control weight H2 lost positive definiteness at cell " << i << ", step " << step
         << " (min eigenvalue " << h2_min << ")";
      throw SolverError(os.str());
    }

    const Eigen::MatrixXd k3 = F.transpose() * e1[i] * (A + B * next.K2[i]);
    const Eigen::MatrixXd k4 = B.transpose() * e2[i] * (A + F * next.K1[i]);
    const Eigen::LLT<Eigen::MatrixXd> h1_llt(h1);
    const Eigen::LLT<Eigen::MatrixXd> h2_llt(h2);
    const Eigen::MatrixXd k1 = -h1_llt.solve(k3);
    const Eigen::MatrixXd k2 = -h2_llt.solve(k4);

    const Eigen::MatrixXd a2 = A + B * k2;
    out.P1[i] = Sym(a2.transpose() * e1[i] * a2 - k2.transpose() * k2 - C.transpose() * C -
                    k3.transpose() * h1_llt.solve(k3));
    if (design == Design::kNash) {
      const Eigen::MatrixXd a1 = A + F * k1;
      out.P2[i] = Sym(a1.transpose() * e2[i] * a1 + C.transpose() * C -
                      k4.transpose() * h2_llt.solve(k4));
    }
    out.K1[i] = k1;
    out.K2[i] = k2;
    out.K3[i] = k3;
    out.K4[i] = k4;
    out.H1[i] = h1;
    out.H2[i] = h2;
  }
  return out;
}

GameSolution RunRecursion(const GameProblem& problem, const GameOptions& options, Design design) {
  problem.Validate();
  const SystemModel& s = problem.system;
  const GridPtr& grid = s.grid;
  const int n = s.n();

  Stage stage;
  stage.P1 = MatrixField::Zero(grid, n, n);
  if (design == Design::kNash) stage.P2 = MatrixField::Zero(grid, n, n);
  stage.K1 = MatrixField::Zero(grid, s.r(), n);
  stage.K2 = MatrixField::Zero(grid, s.m(), n);

  GameSolution sol;
  sol.hinf = design == Design::kHinf;
  for (int step = 1; step <= options.max_iter; ++step) {
    Stage prev = BackwardStep(s, problem.gamma, stage, design, step);
    std::swap(prev, stage);
    double delta = stage.P1.MaxAbsDiff(prev.P1);
    if (design == Design::kNash) delta += stage.P2.MaxAbsDiff(prev.P2);
    sol.iterations = step;
    sol.last_step = delta;
    if (!std::isfinite(delta)) throw SolverError("game recursion diverged");
    if (delta < options.tol) {
      sol.converged = true;
      break;
    }
  }

  sol.P1 = std::move(stage.P1);
  sol.P2 = std::move(stage.P2);
  sol.K1 = std::move(stage.K1);
  sol.K2 = std::move(stage.K2);
  sol.K3 = std::move(stage.K3);
  sol.K4 = std::move(stage.K4);
  sol.H1 = std::move(stage.H1);
  sol.H2 = std::move(stage.H2);
  sol.residuals = GameEquationResiduals(problem, sol);
  sol.p1_max_eig = sol.P1.MaxEigenvalue();
  sol.p2_min_eig = design == Design::kNash ? sol.P2.MinEigenvalue() : 0.0;
  const MatrixField acl = s.A + s.B * sol.K2 + s.F * sol.K1;
  sol.closed_loop_radius = SpectralRadius({OperatorKind::kL, acl, s.kernel}).value;

  if (!sol.converged) {
    std::ostringstream os;
    os << "game recursion did not converge within " << options.max_iter
       << " iterations (last step " << sol.last_step << ")";
    throw SolverError(os.str());
  }
  return sol;
}

}  // namespace

void GameProblem::Validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("game: gamma must be positive");
  system.Validate();
  system.RequireOrthonormalD();
}

GameSolution SolveGame(const GameProblem& problem, const GameOptions& options) {
  return RunRecursion(problem, options, Design::kNash);
}

GameSolution SolveHinf(const GameProblem& problem, const GameOptions& options) {
  return RunRecursion(problem, options, Design::kHinf);
}

GameResiduals GameEquationResiduals(const GameProblem& problem, const GameSolution& sol) {
  const SystemModel& s = problem.system;
  const double g2 = problem.gamma * problem.gamma;
  const MatrixField e1 = ApplyE(s.kernel, sol.P1);
  const MatrixField e2 = sol.hinf ? -1.0 * e1 : ApplyE(s.kernel, sol.P2);
  GameResiduals res;
  for (int i = 0; i < s.grid->size(); ++i) {
    const Eigen::MatrixXd& A = s.A[i];
    const Eigen::MatrixXd& B = s.B[i];
    const Eigen::MatrixXd& F = s.F[i];
    const Eigen::MatrixXd& C = s.C[i];
    const Eigen::MatrixXd& K1 = sol.K1[i];
    const Eigen::MatrixXd& K2 = sol.K2[i];

    const Eigen::MatrixXd a2 = A + B * K2;
    const Eigen::MatrixXd k3 = F.transpose() * e1[i] * a2;
    const Eigen::MatrixXd h1 =
        g2 * Eigen::MatrixXd::Identity(F.cols(), F.cols()) + F.transpose() * e1[i] * F;
    const Eigen::MatrixXd h1_inv_k3 = h1.ldlt().solve(k3);
    const Eigen::MatrixXd p1 = a2.transpose() * e1[i] * a2 - K2.transpose() * K2 -
                               C.transpose() * C - k3.transpose() * h1_inv_k3;
    res.p1 = std::max(res.p1, (sol.P1[i] - p1).cwiseAbs().maxCoeff());
    res.k1 = std::max(res.k1, (K1 + h1_inv_k3).cwiseAbs().maxCoeff());

    const Eigen::MatrixXd a1 = A + F * K1;
    const Eigen::MatrixXd k4 = B.transpose() * e2[i] * a1;
    const Eigen::MatrixXd h2 =
        Eigen::MatrixXd::Identity(B.cols(), B.cols()) + B.transpose() * e2[i] * B;
    const Eigen::MatrixXd h2_inv_k4 = h2.ldlt().solve(k4);
    res.k2 = std::max(res.k2, (K2 + h2_inv_k4).cwiseAbs().maxCoeff());
    if (!sol.hinf) {
      const Eigen::MatrixXd p2 =
          a1.transpose() * e2[i] * a1 + C.transpose() * C - k4.transpose() * h2_inv_k4;
      res.p2 = std::max(res.p2, (sol.P2[i] - p2).cwiseAbs().maxCoeff());
    }
  }
  return res;
}

NashValues ComputeNashValues(const GameSolution& solution, const Eigen::VectorXd& x0,
                             const InitialDensity& nu0) {
  if (!solution.converged) throw SolverError("Nash values need a converged solution");
  const Eigen::VectorXd prob = nu0.Probabilities();
  auto value = [&](const MatrixField& p) {
    if (p.empty()) return 0.0;
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    for (int i = 0; i < p.size(); ++i) avg += prob(i) * p[i];
    return x0.dot(avg * x0);
  };
  return {value(solution.P1), value(solution.P2)};
}

const MatrixField& WorstCaseDisturbanceGain(const GameSolution& solution) {
  if (!solution.converged) throw SolverError("worst-case gain needs a converged solution");
  return solution.K1;
}

BrlCheck VerifyBrl(const GameProblem& problem, const MatrixField& K2, const MatrixField& P1,
                   double tol) {
  const SystemModel& s = problem.system;
  const double g2 = problem.gamma * problem.gamma;
  const MatrixField e1 = ApplyE(s.kernel, P1);
  BrlCheck out;
  out.K1 = MatrixField(s.grid, s.r(), s.n());
  out.p1_max_eig = P1.MaxEigenvalue();
  out.h1_margin = std::numeric_limits<double>::infinity();
  bool h1_ok = true;
  for (int i = 0; i < s.grid->size(); ++i) {
    const Eigen::MatrixXd a2 = s.A[i] + s.B[i] * K2[i];
    const Eigen::MatrixXd& F = s.F[i];
    const Eigen::MatrixXd h1 =
        Sym(g2 * Eigen::MatrixXd::Identity(F.cols(), F.cols()) + F.transpose() * e1[i] * F);
    const double h1_min = MinEig(h1);
    out.h1_margin = std::min(out.h1_margin, h1_min);
    if (!(h1_min > 1e-10 * g2)) {
      h1_ok = false;
      out.K1[i].setZero();
      continue;
    }
    const Eigen::MatrixXd k3 = F.transpose() * e1[i] * a2;
    const Eigen::MatrixXd h1_inv_k3 = h1.llt().solve(k3);
    out.K1[i] = -h1_inv_k3;
    const Eigen::MatrixXd p1 = a2.transpose() * e1[i] * a2 - K2[i].transpose() * K2[i] -
                               s.C[i].transpose() * s.C[i] - k3.transpose() * h1_inv_k3;
    out.residual = std::max(out.residual, (P1[i] - p1).cwiseAbs().maxCoeff());
  }
  if (!h1_ok) {
    out.residual = std::numeric_limits<double>::infinity();
    out.closed_loop_radius = std::numeric_limits<double>::infinity();
    return out;
  }
  const MatrixField acl = s.A + s.B * K2 + s.F * out.K1;
  out.closed_loop_radius = SpectralRadius({OperatorKind::kL, acl, s.kernel}).value;
  out.holds = out.p1_max_eig <= tol && out.residual <= tol &&
              out.closed_loop_radius < 1.0 - 1e-8;
  return out;
}

MatrixField SolveBrlRiccati(const GameProblem& problem, const MatrixField& K2,
                            const GameOptions& options) {
  problem.Validate();
  const SystemModel& s = problem.system;
  const double g2 = problem.gamma * problem.gamma;
  MatrixField p = MatrixField::Zero(s.grid, s.n(), s.n());
  for (int step = 1; step <= options.max_iter; ++step) {
    const MatrixField e1 = ApplyE(s.kernel, p);
    MatrixField next(s.grid, s.n(), s.n());
    for (int i = 0; i < s.grid->size(); ++i) {
      const Eigen::MatrixXd a2 = s.A[i] + s.B[i] * K2[i];
      const Eigen::MatrixXd& F = s.F[i];
      const Eigen::MatrixXd h1 =
          Sym(g2 * Eigen::MatrixXd::Identity(F.cols(), F.cols()) + F.transpose() * e1[i] * F);
      if (!(MinEig(h1) > 1e-10 * g2)) {
        std::ostringstream os;
        os << "disturbance weight H1 lost positive definiteness at cell " << i << ", step "
           << step;
        throw SolverError(os.str());
      }
      const Eigen::MatrixXd k3 = F.transpose() * e1[i] * a2;
      next[i] = Sym(a2.transpose() * e1[i] * a2 - K2[i].transpose() * K2[i] -
                    s.C[i].transpose() * s.C[i] - k3.transpose() * h1.llt().solve(k3));
    }
    const double delta = next.MaxAbsDiff(p);
    p = std::move(next);
    if (!std::isfinite(delta)) break;
    if (delta < options.tol) return p;
  }
  throw SolverError("bounded-real recursion did not converge");
}

}  // namespace mjls
