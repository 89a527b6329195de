#include "mjls/riccati.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mjls/error.h"
#include "mjls/operators.h"
#include "mjls/stability.h"

namespace mjls {

namespace {

double MinEig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double SignThreshold(const RiccatiProblem& problem) {
  return 1e-10 * std::max(problem.R.NormInf(), 1e-300);
}

struct RawTerms {
  MatrixField e;   // E(P)
  MatrixField gp;  // G(P)
  MatrixField rp;  // R(P)
  double r_margin = 0.0;
  int worst_cell = 0;
};

RawTerms ComputeRaw(const RiccatiProblem& p, const MatrixField& P) {
  RawTerms t;
  t.e = ApplyE(p.kernel, P);
  const GridPtr& grid = P.grid();
  t.gp = MatrixField(grid, p.G.cols(), p.A.cols());
  t.rp = MatrixField(grid, p.G.cols(), p.G.cols());
  t.r_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < P.size(); ++i) {
    const Eigen::MatrixXd ge = p.G[i].transpose() * t.e[i];
    t.gp[i] = ge * p.A[i];
    t.rp[i] = p.R[i] + ge * p.G[i];
    t.rp[i] = 0.5 * (t.rp[i] + t.rp[i].transpose()).eval();
    const double lo = MinEig(t.rp[i]);
    if (lo < t.r_margin) {
      t.r_margin = lo;
      t.worst_cell = i;
    }
  }
  return t;
}

// Closed loop radius through the T operator, which matches L by adjointness.
double ClosedLoopRadius(const RiccatiProblem& p, const MatrixField& K) {
  return SpectralRadius({OperatorKind::kT, p.A + p.G * K, p.kernel}).value;
}

bool IsStabilizingRadius(double r) { return r < 1.0 - kMarginalBand; }

}  // namespace

void RiccatiProblem::Validate() const {
  const int n = A.rows();
  const int m = G.cols();
  auto fail = [](const std::string& what) { throw ConfigError("Riccati problem: " + what); };
  if (A.empty() || A.cols() != n) fail("A must be a nonempty square field");
  if (G.rows() != n) fail("G must have as many rows as A");
  if (Q.rows() != n || Q.cols() != n) fail("Q must be n x n");
  if (R.rows() != m || R.cols() != m) fail("R must be m x m");
  if (G.size() != A.size() || Q.size() != A.size() || R.size() != A.size() ||
      kernel.size() != A.size()) {
    fail("fields and kernel live on different grids");
  }
  if (!Q.IsSymmetric(1e-9)) fail("Q is not symmetric");
  if (!R.IsSymmetric(1e-9)) fail("R is not symmetric");
  const double lo = R.MinEigenvalue();
  if (!(lo > SignThreshold(*this))) {
    std::ostringstream os;
    os << "R is not uniformly positive definite (min eigenvalue " << lo << ")";
    fail(os.str());
  }
}

RiccatiTerms RiccatiOps(const RiccatiProblem& problem, const MatrixField& P) {
  RawTerms raw = ComputeRaw(problem, P);
  if (!(raw.r_margin > SignThreshold(problem))) {
    std::ostringstream os;
    os << "sign condition violated: R(P) min eigenvalue " << raw.r_margin << " at cell "
       << raw.worst_cell;
    throw SolverError(os.str());
  }
  RiccatiTerms terms;
  const GridPtr& grid = P.grid();
  terms.Mp = MatrixField(grid, problem.G.cols(), problem.A.cols());
  terms.Wp = MatrixField(grid, problem.A.rows(), problem.A.rows());
  for (int i = 0; i < P.size(); ++i) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(raw.rp[i]);
    terms.Mp[i] = -ldlt.solve(raw.gp[i]);
    Eigen::MatrixXd w = -P[i] + problem.A[i].transpose() * raw.e[i] * problem.A[i] + problem.Q[i] +
                        raw.gp[i].transpose() * terms.Mp[i];
    terms.Wp[i] = 0.5 * (w + w.transpose());
  }
  terms.Gp = std::move(raw.gp);
  terms.Rp = std::move(raw.rp);
  terms.r_margin = raw.r_margin;
  return terms;
}

SPlusMembership InSPlus(const RiccatiProblem& problem, const MatrixField& P, double tol) {
  SPlusMembership out;
  const RawTerms raw = ComputeRaw(problem, P);
  out.r_margin = raw.r_margin;
  if (!(raw.r_margin > 0.0)) return out;
  const RiccatiTerms terms = RiccatiOps(problem, P);
  out.w_margin = terms.Wp.MinEigenvalue();
  out.member = out.w_margin >= -tol && raw.r_margin > SignThreshold(problem);
  return out;
}

MatrixField FindStabilizingGain(const RiccatiProblem& problem, int horizon_cap) {
  const GridPtr& grid = problem.A.grid();
  const int n = problem.A.rows();
  const int m = problem.G.cols();
  MatrixField k = MatrixField::Zero(grid, m, n);
  if (IsStabilizingRadius(ClosedLoopRadius(problem, k))) return k;

  // Finite-horizon LQ recursion with identity weights; its gain stabilizes
  // once the horizon is long enough for a stabilizable pair.
  RiccatiProblem lq{problem.A, problem.G, MatrixField::Identity(grid, n),
                    MatrixField::Identity(grid, m), problem.kernel};
  MatrixField p = MatrixField::Zero(grid, n, n);
  for (int step = 1; step <= horizon_cap; ++step) {
    const RiccatiTerms terms = RiccatiOps(lq, p);
    p += terms.Wp;  // p <- T_A(p) + I - G(p)^T R(p)^{-1} G(p)
    p = p.Symmetrized();
    if (!std::isfinite(p.NormInf())) break;
    const MatrixField gain = RiccatiOps(lq, p).Mp;
    if (IsStabilizingRadius(ClosedLoopRadius(problem, gain))) return gain;
  }
  throw SolverError("no stabilizing initial gain found within the horizon cap");
}

RiccatiSolution SolveMaximal(const RiccatiProblem& problem, const RiccatiOptions& options) {
  problem.Validate();
  MatrixField gain = options.initial_gain ? *options.initial_gain
                                          : FindStabilizingGain(problem, options.gain_search_horizon);
  if (gain.rows() != problem.G.cols() || gain.cols() != problem.A.rows()) {
    throw std::invalid_argument("SolveMaximal: initial gain has the wrong shape");
  }
  const double inner_tol = options.tol / 10.0;

  RiccatiSolution sol;
  auto solve_for = [&](const MatrixField& k, int h) {
    const MatrixField acl = problem.A + problem.G * k;
    const double radius = SpectralRadius({OperatorKind::kT, acl, problem.kernel}).value;
    sol.gain_radius.push_back(radius);
    if (!IsStabilizingRadius(radius)) {
      std::ostringstream os;
      os << "gain at iteration " << h << " is not stabilizing (closed-loop radius " << radius << ")";
      throw SolverError(os.str());
    }
    MatrixField rhs = problem.Q + k.Transposed() * problem.R * k;
    return SolveLyapunovIdentity(acl, problem.kernel, rhs.Symmetrized(), inner_tol, 2000000, false);
  };

  MatrixField p = solve_for(gain, 0);
  bool done = false;
  for (int h = 1; h <= options.max_iter; ++h) {
    gain = RiccatiOps(problem, p).Mp;
    MatrixField next = solve_for(gain, h);
    const MatrixField step = next - p;
    const double delta = step.NormInf();
    sol.history.push_back(delta);
    sol.monotonicity_violation = std::max(sol.monotonicity_violation, step.MaxEigenvalue());
    p = std::move(next);
    sol.iterations = h;
    if (delta < options.tol) {
      done = true;
      break;
    }
  }
  if (!done) {
    std::ostringstream os;
    os << "Riccati iteration did not converge within " << options.max_iter << " iterations";
    throw SolverError(os.str());
  }

  RiccatiSolution cert = CertifyStabilizing(problem, p, options.tol);
  cert.iterations = sol.iterations;
  cert.history = std::move(sol.history);
  cert.gain_radius = std::move(sol.gain_radius);
  cert.monotonicity_violation = sol.monotonicity_violation;
  return cert;
}

RiccatiSolution CertifyStabilizing(const RiccatiProblem& problem, const MatrixField& P,
                                   double tol) {
  RiccatiSolution sol;
  sol.P = P.Symmetrized();
  const RawTerms raw = ComputeRaw(problem, sol.P);
  sol.R_margin = raw.r_margin;
  if (!(raw.r_margin > SignThreshold(problem))) {
    sol.W_residual = std::numeric_limits<double>::infinity();
    sol.closed_loop_radius = std::numeric_limits<double>::infinity();
    sol.K = MatrixField::Zero(P.grid(), problem.G.cols(), problem.A.rows());
    return sol;
  }
  const RiccatiTerms terms = RiccatiOps(problem, sol.P);
  sol.K = terms.Mp;
  sol.W_residual = terms.Wp.NormInf();
  sol.closed_loop_radius = ClosedLoopRadius(problem, sol.K);
  sol.stabilizing = IsStabilizingRadius(sol.closed_loop_radius) &&
                    sol.W_residual <= 10.0 * tol * std::max(1.0, sol.P.NormInf());
  return sol;
}

StrictInequalityCheck CheckStrictRiccatiInequality(const RiccatiProblem& problem,
                                                   const MatrixField& P) {
  const RawTerms raw = ComputeRaw(problem, P);
  const int n = problem.A.rows();
  const int m = problem.G.cols();
  StrictInequalityCheck out;
  out.margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < P.size(); ++i) {
    Eigen::MatrixXd block(n + m, n + m);
    block.topLeftCorner(n, n) =
        -P[i] + problem.A[i].transpose() * raw.e[i] * problem.A[i] + problem.Q[i];
    block.topRightCorner(n, m) = raw.gp[i].transpose();
    block.bottomLeftCorner(m, n) = raw.gp[i];
    block.bottomRightCorner(m, m) = raw.rp[i];
    out.margin = std::min(out.margin, MinEig(block));
  }
  out.holds = out.margin > 0.0;
  return out;
}

}  // namespace mjls
