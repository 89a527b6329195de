#pragma once

// Coupled algebraic Riccati equations over the mode space
//
//   P = T_A(P) + Q - G(P)^T R(P)^{-1} G(P),   R(P) >> 0
//
// with G(P) = G^T E(P) A, R(P) = R + T_G(P), M(P) = -R(P)^{-1} G(P) and
// W(P) the residual of the equation written as -P + ... .

#include <optional>
#include <vector>

#include "mjls/mode_space.h"

namespace mjls {

struct RiccatiProblem {
  MatrixField A;  // n x n
  MatrixField G;  // n x m
  MatrixField Q;  // n x n symmetric, any sign
  MatrixField R;  // m x m, uniformly positive definite
  KernelDensity kernel;

  // Throws ConfigError on shape errors, asymmetric Q or R not >> 0.
  void Validate() const;
};

struct RiccatiTerms {
  MatrixField Gp;  // m x n
  MatrixField Rp;  // m x m
  MatrixField Mp;  // m x n
  MatrixField Wp;  // n x n
  double r_margin = 0.0;  // min over cells of lambda_min(R(P))
};

// Throws SolverError when R(P) fails the uniform sign condition at some cell.
RiccatiTerms RiccatiOps(const RiccatiProblem& problem, const MatrixField& P);

struct SPlusMembership {
  bool member = false;
  double w_margin = 0.0;  // min eigenvalue of W(P) over cells
  double r_margin = 0.0;  // min eigenvalue of R(P) over cells
};

SPlusMembership InSPlus(const RiccatiProblem& problem, const MatrixField& P, double tol = 1e-9);

struct RiccatiOptions {
  double tol = 1e-9;
  int max_iter = 200;
  std::optional<MatrixField> initial_gain;
  int gain_search_horizon = 500;
};

struct RiccatiSolution {
  MatrixField P;
  MatrixField K;  // M(P)
  double W_residual = 0.0;  // |W(P)|_inf
  double R_margin = 0.0;
  double closed_loop_radius = 0.0;
  bool stabilizing = false;
  int iterations = 0;
  // |P_h - P_{h-1}|_inf for h >= 1.
  std::vector<double> history;
  // Spectral radius of the closed loop under every gain K_h, h >= 0.
  std::vector<double> gain_radius;
  // max over h of lambda_max(P_h - P_{h-1}); nonpositive for a monotone run.
  double monotonicity_violation = 0.0;
};

// Kleinman-type policy iteration: K_h = M(P_{h-1}) and
// P_h - T_{A+G K_h}(P_h) = Q + K_h^T R K_h, started from a stabilizing K_0.
// Throws SolverError when no stabilizing K_0 is available, when an iterate
// loses the stabilizing property, or on max_iter without convergence.
RiccatiSolution SolveMaximal(const RiccatiProblem& problem, const RiccatiOptions& options = {});

// Residual, sign margin and closed-loop radius for a candidate P.
RiccatiSolution CertifyStabilizing(const RiccatiProblem& problem, const MatrixField& P,
                                   double tol = 1e-9);

// K = 0 when A is already stable, otherwise the gain of a backward LQ
// recursion with identity weights once it stabilizes the closed loop.
MatrixField FindStabilizingGain(const RiccatiProblem& problem, int horizon_cap = 500);

struct StrictInequalityCheck {
  bool holds = false;
  double margin = 0.0;  // min over cells of the block matrix min eigenvalue
};

// [ -P + T_A(P) + Q , G(P)^T ; G(P) , R(P) ] >> 0 in every cell.
StrictInequalityCheck CheckStrictRiccatiInequality(const RiccatiProblem& problem,
                                                   const MatrixField& P);

}  // namespace mjls
