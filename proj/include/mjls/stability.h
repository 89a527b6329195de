#pragma once

#include <optional>
#include <vector>

#include "mjls/mode_space.h"
#include "mjls/operators.h"

namespace mjls {

// Radii within this distance of one are reported as marginal, never EMSS.
inline constexpr double kMarginalBand = 1e-8;

struct StabilityReport {
  double spectral_radius_L = 0.0;
  double spectral_radius_T = 0.0;
  bool emss = false;
  bool marginal = false;
  bool converged = true;  // both spectral-radius estimates settled
  // Solution of U - T_A(U) = I when EMSS.
  std::optional<MatrixField> lyapunov_certificate;
  // min over cells of lambda_min(U - T_A(U)); positive for a valid certificate.
  double margin = 0.0;

  double spectral_radius() const { return std::max(spectral_radius_L, spectral_radius_T); }
};

struct StabilityOptions {
  double radius_tol = kSpectralRadiusTolerance;
  int radius_max_iter = kSpectralRadiusMaxIter;
  bool compute_certificate = true;
  double lyapunov_tol = 1e-11;
  int lyapunov_max_iter = 2000000;
};

StabilityReport CheckEmss(const MatrixField& A, const KernelDensity& kernel,
                          const StabilityOptions& options = {});

// Fixed point U = T_A(U) + V started at U = V. Throws SolverError when A is
// not mean-square stable or the iteration does not reach tol (relative to
// max(1, |U|)) within max_iter steps.
MatrixField SolveLyapunovIdentity(const MatrixField& A, const KernelDensity& kernel,
                                  const MatrixField& V, double tol = 1e-11,
                                  int max_iter = 2000000, bool check_stability = true);

// P - T_{A+GK}(P) = Q + K^T R K for a stabilizing K.
MatrixField SolveClosedLoopLyapunov(const MatrixField& A, const MatrixField& G, const MatrixField& K,
                                    const KernelDensity& kernel, const MatrixField& Q,
                                    const MatrixField& R, double tol = 1e-11,
                                    int max_iter = 2000000);

struct CorrelationSequence {
  std::vector<MatrixField> X;  // X[0..horizon]
  int horizon = 0;
};

// X(0) = x0 x0^T nu0, X(k+1) = L_A(X(k)).
CorrelationSequence PropagateCorrelation(const MatrixField& A, const KernelDensity& kernel,
                                         const Eigen::VectorXd& x0, const InitialDensity& nu0,
                                         int horizon);

StabilityReport VerifyDetectabilityGain(const MatrixField& A, const MatrixField& C,
                                        const MatrixField& H, const KernelDensity& kernel,
                                        const StabilityOptions& options = {});

StabilityReport VerifyStabilizabilityGain(const MatrixField& A, const MatrixField& G,
                                          const MatrixField& K, const KernelDensity& kernel,
                                          const StabilityOptions& options = {});

struct LyapunovInequalityResult {
  bool holds = false;
  // min over cells of lambda_min(U - T_{A_cl}(U) - I)
  double margin = 0.0;
  double min_eig_U = 0.0;
};

// U - T_{A_cl}(U) - I >= -slack and U >> 0 in every cell.
LyapunovInequalityResult VerifyLyapunovInequality(const MatrixField& A_cl,
                                                  const KernelDensity& kernel,
                                                  const MatrixField& U, double slack = 0.0);

struct DetectabilityGain {
  MatrixField H;  // n x p
  StabilityReport report;
};

// Output-injection gain from the LQ Riccati equation on the dual data
// (A^T, C^T, I, I) over the reversed kernel, with a -A pinv(C) fallback. The
// returned gain is always verified; throws SolverError("gain not found")
// when no candidate makes A + H C mean-square stable. Failure does not prove
// the pair undetectable.
DetectabilityGain SynthDetectabilityGain(const MatrixField& A, const MatrixField& C,
                                         const KernelDensity& kernel);

}  // namespace mjls
