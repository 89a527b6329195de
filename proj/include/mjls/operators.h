#pragma once

// The integral operators of a Markov jump linear system on a discretized mode
// space:
//
//   E(U)(l)   = int g(l, t) U(t) mu(dt)
//   T_Q(U)(l) = Q(l)^T E(U)(l) Q(l)
//   L_Q(V)(l) = int g(t, l) Q(t) V(t) Q(t)^T mu(dt)
//   <V; U>    = int tr(V(t)^T U(t)) mu(dt)
//
// T_Q and L_Q are adjoint under <.;.> and both preserve the PSD cone.

#include <functional>

#include "mjls/mode_space.h"

namespace mjls {

MatrixField ApplyE(const KernelDensity& kernel, const MatrixField& U);

// Q may be rectangular (n x m); the result is then m x m.
MatrixField ApplyT(const MatrixField& Q, const KernelDensity& kernel, const MatrixField& U);

MatrixField ApplyL(const MatrixField& Q, const KernelDensity& kernel, const MatrixField& V);

double Pairing(const MatrixField& V, const MatrixField& U);

enum class OperatorKind { kL, kT };

struct OperatorHandle {
  OperatorKind kind = OperatorKind::kT;
  MatrixField coefficient;  // square n x n
  KernelDensity kernel;

  MatrixField Apply(const MatrixField& X) const;
  // Dimension of the underlying linear map on full n x n fields.
  int dimension() const { return coefficient.size() * coefficient.rows() * coefficient.rows(); }
};

struct SpectralRadiusResult {
  double value = 0.0;
  // Residual of the final power step, ||Op(X) - value X|| / ||X|| in the
  // trace-integral norm. Zero for the dense route.
  double residual = 0.0;
  // Rigorous cone upper bound from the last iterate (infinity if unavailable).
  double upper_bound = 0.0;
  int iterations = 0;
  bool converged = false;
  bool dense = false;
};

inline constexpr double kSpectralRadiusTolerance = 1e-10;
inline constexpr int kSpectralRadiusMaxIter = 10000;
// Largest operator dimension (M n^2) handed to the dense eigensolver.
inline constexpr int kDenseSpectralLimit = 400;

// Power iteration on the PSD cone started from the identity field. When the
// iteration does not settle within max_iter and the operator is small enough
// the dense eigensolver is used instead; otherwise the best estimate is
// returned with converged == false.
SpectralRadiusResult SpectralRadius(const OperatorHandle& op,
                                    double tol = kSpectralRadiusTolerance,
                                    int max_iter = kSpectralRadiusMaxIter);

// Matrix of the operator acting on column-major vec(X_i), stacked by cell.
Eigen::MatrixXd DenseOperatorMatrix(const OperatorHandle& op);
double SpectralRadiusDense(const OperatorHandle& op);

// Square root of a PSD field through the monotone iteration
//   Q_0 = (I - P/|P|)/2,  Q_k = (I - P/|P| + Q_{k-1}^2)/2,  S = |P|^{1/2}(I - Q).
// Normalization is per cell. Throws SolverError when P is indefinite beyond
// tolerance or the iteration fails to settle. The observer, if given, sees
// every Q_k.
MatrixField SqrtField(const MatrixField& P, double tol = 1e-12, int max_iter = 1000,
                      const std::function<void(int, const MatrixField&)>& observer = {});

}  // namespace mjls
