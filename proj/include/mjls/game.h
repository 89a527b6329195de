#pragma once

// Two-player LQ game on a Markov jump linear system and the derived
// H-infinity and mixed H2/H-infinity state-feedback designs.
//
// Player 1 picks the disturbance v = K1 x and maximizes attenuation slack
// against gamma; player 2 picks the control u = K2 x and minimizes output
// energy. The stationary pair (P1 <= 0, P2 >= 0) is found by running the
// finite-horizon recursion backward from zero terminal values.

#include <algorithm>

#include "mjls/mode_space.h"
#include "mjls/system_model.h"

namespace mjls {

struct GameProblem {
  SystemModel system;
  double gamma = 1.0;

  // Throws ConfigError unless gamma > 0, the model is valid and D^T D = I.
  void Validate() const;
};

struct GameOptions {
  double tol = 1e-9;
  int max_iter = 5000;
};

struct GameResiduals {
  double p1 = 0.0;  // Riccati equation for P1
  double k1 = 0.0;  // K1 = -H1^{-1} K3
  double p2 = 0.0;  // Riccati equation for P2 (game only)
  double k2 = 0.0;  // gain equation for K2

  double max() const { return std::max(std::max(p1, k1), std::max(p2, k2)); }
};

struct GameSolution {
  MatrixField P1;  // n x n, <= 0
  MatrixField P2;  // n x n, >= 0 (empty for the H-infinity design)
  MatrixField K1;  // r x n, disturbance gain
  MatrixField K2;  // m x n, control gain
  MatrixField K3;  // r x n
  MatrixField K4;  // m x n
  MatrixField H1;  // r x r
  MatrixField H2;  // m x m
  GameResiduals residuals;
  double closed_loop_radius = 0.0;  // A + B K2 + F K1
  double p1_max_eig = 0.0;
  double p2_min_eig = 0.0;
  double last_step = 0.0;
  bool converged = false;
  bool hinf = false;
  int iterations = 0;
};

// Backward recursion for the Nash pair. Throws SolverError when H1 or H2
// loses positive definiteness (naming cell and step) or on max_iter.
GameSolution SolveGame(const GameProblem& problem, const GameOptions& options = {});

// Same recursion for P1 with the control gain taken from -P1.
GameSolution SolveHinf(const GameProblem& problem, const GameOptions& options = {});

// Residuals of the stationary equations for a candidate solution.
GameResiduals GameEquationResiduals(const GameProblem& problem, const GameSolution& solution);

struct NashValues {
  double j1 = 0.0;
  double j2 = 0.0;
};

// x0^T E{P(theta0)} x0 for both players. Throws SolverError when the solution
// did not converge.
NashValues ComputeNashValues(const GameSolution& solution, const Eigen::VectorXd& x0,
                             const InitialDensity& nu0);

// K1 of a converged solution.
const MatrixField& WorstCaseDisturbanceGain(const GameSolution& solution);

struct BrlCheck {
  bool holds = false;
  double p1_max_eig = 0.0;
  double residual = 0.0;
  double h1_margin = 0.0;
  double closed_loop_radius = 0.0;
  MatrixField K1;
};

// Bounded-real certificate for a frozen control gain: P1 <= tol, the P1
// equation holds with K2 fixed, H1 >> 0, and A + B K2 + F K1(P1) is EMSS.
BrlCheck VerifyBrl(const GameProblem& problem, const MatrixField& K2, const MatrixField& P1,
                   double tol = 1e-6);

// P1 equation with K2 frozen, iterated backward from zero. Throws
// SolverError when H1 loses definiteness or on max_iter.
MatrixField SolveBrlRiccati(const GameProblem& problem, const MatrixField& K2,
                            const GameOptions& options = {});

}  // namespace mjls
