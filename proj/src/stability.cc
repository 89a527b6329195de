#include "mjls/stability.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mjls/error.h"
#include "mjls/riccati.h"

namespace mjls {

namespace {

double MaxAbs(const MatrixField& f) {
  double best = 0.0;
  for (int i = 0; i < f.size(); ++i) {
    if (f[i].size() > 0) best = std::max(best, f[i].cwiseAbs().maxCoeff());
  }
  return best;
}

double MinEigenOf(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

StabilityReport CheckEmss(const MatrixField& A, const KernelDensity& kernel,
                          const StabilityOptions& options) {
  if (A.rows() != A.cols()) throw std::invalid_argument("CheckEmss: A must be square");
  StabilityReport report;
  const auto rt = SpectralRadius({OperatorKind::kT, A, kernel}, options.radius_tol,
                                 options.radius_max_iter);
  const auto rl = SpectralRadius({OperatorKind::kL, A, kernel}, options.radius_tol,
                                 options.radius_max_iter);
  report.spectral_radius_T = rt.value;
  report.spectral_radius_L = rl.value;
  report.converged = rt.converged && rl.converged;
  const double r = report.spectral_radius();
  report.marginal = std::abs(r - 1.0) <= kMarginalBand;
  report.emss = r < 1.0 - kMarginalBand;
  if (report.emss && options.compute_certificate) {
    const MatrixField eye = MatrixField::Identity(A.grid(), A.rows());
    MatrixField u = SolveLyapunovIdentity(A, kernel, eye, options.lyapunov_tol,
                                          options.lyapunov_max_iter, false);
    const MatrixField lhs = u - ApplyT(A, kernel, u);
    report.margin = lhs.MinEigenvalue();
    report.lyapunov_certificate = std::move(u);
  }
  return report;
}

MatrixField SolveLyapunovIdentity(const MatrixField& A, const KernelDensity& kernel,
                                  const MatrixField& V, double tol, int max_iter,
                                  bool check_stability) {
  if (A.rows() != A.cols() || V.rows() != A.rows() || V.cols() != A.rows()) {
    throw std::invalid_argument("SolveLyapunovIdentity: shape mismatch");
  }
  if (check_stability) {
    const auto rt = SpectralRadius({OperatorKind::kT, A, kernel});
    if (!(rt.value < 1.0 - kMarginalBand)) {
      std::ostringstream os;
      os << "Lyapunov equation has no solution: spectral radius " << rt.value << " >= 1";
      throw SolverError(os.str());
    }
  }
  MatrixField u = V;
  double prev_delta = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    MatrixField next = ApplyT(A, kernel, u);
    next += V;
    const double delta = next.MaxAbsDiff(u);
    u = std::move(next);
    if (!std::isfinite(delta)) break;
    // Geometric tail estimate from the contraction observed so far.
    const double q = std::min(prev_delta > 0.0 ? delta / prev_delta : 0.5, 0.99999);
    const double tail = delta * (1.0 + q / (1.0 - q));
    if (tail <= tol * std::max(1.0, MaxAbs(u)) || delta == 0.0) return u.Symmetrized();
    prev_delta = delta;
  }
  std::ostringstream os;
  os << "Lyapunov fixed point did not converge within " << max_iter << " iterations";
  throw SolverError(os.str());
}

MatrixField SolveClosedLoopLyapunov(const MatrixField& A, const MatrixField& G, const MatrixField& K,
                                    const KernelDensity& kernel, const MatrixField& Q,
                                    const MatrixField& R, double tol, int max_iter) {
  const MatrixField acl = A + G * K;
  const auto rt = SpectralRadius({OperatorKind::kT, acl, kernel});
  if (!(rt.value < 1.0 - kMarginalBand)) {
    std::ostringstream os;
    os << "gain is not stabilizing: closed-loop spectral radius " << rt.value;
    throw SolverError(os.str());
  }
  MatrixField rhs = Q + K.Transposed() * R * K;
  return SolveLyapunovIdentity(acl, kernel, rhs.Symmetrized(), tol, max_iter, false);
}

CorrelationSequence PropagateCorrelation(const MatrixField& A, const KernelDensity& kernel,
                                         const Eigen::VectorXd& x0, const InitialDensity& nu0,
                                         int horizon) {
  if (horizon < 0) throw std::invalid_argument("PropagateCorrelation: negative horizon");
  if (x0.size() != A.rows()) throw std::invalid_argument("PropagateCorrelation: x0 size mismatch");
  CorrelationSequence seq;
  seq.horizon = horizon;
  const Eigen::MatrixXd outer = x0 * x0.transpose();
  MatrixField x(A.grid(), A.rows(), A.rows());
  for (int i = 0; i < x.size(); ++i) x[i] = outer * nu0.values()(i);
  seq.X.reserve(static_cast<std::size_t>(horizon) + 1);
  seq.X.push_back(x);
  for (int k = 0; k < horizon; ++k) seq.X.push_back(ApplyL(A, kernel, seq.X.back()).Symmetrized());
  return seq;
}

StabilityReport VerifyDetectabilityGain(const MatrixField& A, const MatrixField& C,
                                        const MatrixField& H, const KernelDensity& kernel,
                                        const StabilityOptions& options) {
  if (H.rows() != A.rows() || H.cols() != C.rows() || C.cols() != A.rows()) {
    throw std::invalid_argument("VerifyDetectabilityGain: shape mismatch");
  }
  return CheckEmss(A + H * C, kernel, options);
}

StabilityReport VerifyStabilizabilityGain(const MatrixField& A, const MatrixField& G,
                                          const MatrixField& K, const KernelDensity& kernel,
                                          const StabilityOptions& options) {
  if (G.rows() != A.rows() || K.rows() != G.cols() || K.cols() != A.rows()) {
    throw std::invalid_argument("VerifyStabilizabilityGain: shape mismatch");
  }
  return CheckEmss(A + G * K, kernel, options);
}

LyapunovInequalityResult VerifyLyapunovInequality(const MatrixField& A_cl,
                                                  const KernelDensity& kernel,
                                                  const MatrixField& U, double slack) {
  LyapunovInequalityResult result;
  const MatrixField tu = ApplyT(A_cl, kernel, U);
  double margin = std::numeric_limits<double>::infinity();
  double min_u = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(U.rows(), U.cols());
  for (int i = 0; i < U.size(); ++i) {
    margin = std::min(margin, MinEigenOf(U[i] - tu[i] - eye));
    min_u = std::min(min_u, MinEigenOf(U[i]));
  }
  result.margin = margin;
  result.min_eig_U = min_u;
  result.holds = margin >= -slack && min_u > 0.0;
  return result;
}

DetectabilityGain SynthDetectabilityGain(const MatrixField& A, const MatrixField& C,
                                         const KernelDensity& kernel) {
  const int n = A.rows();
  const int p = C.rows();
  if (C.cols() != n) throw std::invalid_argument("SynthDetectabilityGain: shape mismatch");
  const GridPtr& grid = A.grid();

  std::vector<MatrixField> candidates;

  // Already stable: H = 0 is a valid gain.
  candidates.push_back(MatrixField::Zero(grid, n, p));

  // Dual LQ problem on the reversed chain.
  try {
    const int m = kernel.size();
    const Eigen::VectorXd col_mass = kernel.ColumnMass();
    const double total = grid->total_measure();
    Eigen::MatrixXd reversed(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        reversed(i, j) = col_mass(i) > 0.0 ? kernel.density()(j, i) / col_mass(i) : 1.0 / total;
      }
    }
    RiccatiProblem dual{A.Transposed(), C.Transposed(), MatrixField::Identity(grid, n),
                        MatrixField::Identity(grid, p),
                        KernelDensity(grid, std::move(reversed), kUserKernelTolerance)};
    const RiccatiSolution sol = SolveMaximal(dual);
    candidates.push_back(sol.K.Transposed());
  } catch (const std::exception&) {
    // fall through to the pseudo-inverse candidate
  }

  MatrixField deadbeat(grid, n, p);
  for (int i = 0; i < grid->size(); ++i) {
    deadbeat[i] = -A[i] * C[i].completeOrthogonalDecomposition().pseudoInverse();
  }
  candidates.push_back(std::move(deadbeat));

  for (auto& h : candidates) {
    StabilityReport report = VerifyDetectabilityGain(A, C, h, kernel);
    if (report.emss) return {std::move(h), std::move(report)};
  }
  throw SolverError("gain not found");
}

}  // namespace mjls
