#include "mjls/operators.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mjls/error.h"

namespace mjls {

namespace {

// One row per cell holding vec(X_i).
Eigen::MatrixXd Stack(const MatrixField& X) {
  const int entries = X.rows() * X.cols();
  Eigen::MatrixXd s(X.size(), entries);
  for (int i = 0; i < X.size(); ++i) {
    s.row(i) = Eigen::Map<const Eigen::RowVectorXd>(X[i].data(), entries);
  }
  return s;
}

MatrixField Unstack(const GridPtr& grid, const Eigen::MatrixXd& s, int rows, int cols) {
  MatrixField out(grid, rows, cols);
  for (int i = 0; i < out.size(); ++i) {
    Eigen::Map<Eigen::RowVectorXd>(out[i].data(), rows * cols) = s.row(i);
  }
  return out;
}

void RequireKernelMatch(const KernelDensity& kernel, const MatrixField& f, const char* what) {
  if (f.size() != kernel.size()) {
    std::ostringstream os;
    os << what << ": field has " << f.size() << " cells, kernel has " << kernel.size();
    throw std::invalid_argument(os.str());
  }
}

double TraceMass(const MatrixField& X) {
  double total = 0.0;
  for (int i = 0; i < X.size(); ++i) total += X.grid()->cell(i).weight * X[i].trace();
  return total;
}

// Smallest mu with Y <= mu X cell-wise, for X positive definite.
double ConeUpperBound(const MatrixField& X, const MatrixField& Y) {
  double best = 0.0;
  for (int i = 0; i < X.size(); ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(X[i]);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    Eigen::MatrixXd z = llt.matrixL().solve(Y[i]);
    z = llt.matrixL().solve(z.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (z + z.transpose()),
                                                      Eigen::EigenvaluesOnly);
    best = std::max(best, es.eigenvalues().maxCoeff());
  }
  return best;
}

}  // namespace

namespace {

// Cone bound at a slightly regularized copy of x, which keeps every cell
// positive definite.
double UpperBoundAt(const OperatorHandle& op, const MatrixField& x) {
  MatrixField xr = x;
  const double bump = 1e-12 * std::max(x.NormInf(), 1e-300);
  for (int i = 0; i < xr.size(); ++i) xr[i].diagonal().array() += bump;
  return ConeUpperBound(xr, op.Apply(xr).Symmetrized());
}

}  // namespace

MatrixField ApplyE(const KernelDensity& kernel, const MatrixField& U) {
  RequireKernelMatch(kernel, U, "ApplyE");
  const Eigen::MatrixXd s = kernel.weighted() * Stack(U);
  return Unstack(U.grid(), s, U.rows(), U.cols());
}

MatrixField ApplyT(const MatrixField& Q, const KernelDensity& kernel, const MatrixField& U) {
  RequireKernelMatch(kernel, Q, "ApplyT");
  if (U.rows() != U.cols() || Q.rows() != U.rows() || Q.size() != U.size()) {
    std::ostringstream os;
    os << "ApplyT: coefficient " << Q.rows() << "x" << Q.cols() << " incompatible with field "
       << U.rows() << "x" << U.cols();
    throw std::invalid_argument(os.str());
  }
  MatrixField e = ApplyE(kernel, U);
  MatrixField out(U.grid(), Q.cols(), Q.cols());
  for (int i = 0; i < out.size(); ++i) out[i] = Q[i].transpose() * e[i] * Q[i];
  return out;
}

MatrixField ApplyL(const MatrixField& Q, const KernelDensity& kernel, const MatrixField& V) {
  RequireKernelMatch(kernel, Q, "ApplyL");
  if (V.rows() != V.cols() || Q.cols() != V.rows() || Q.size() != V.size()) {
    std::ostringstream os;
    os << "ApplyL: coefficient " << Q.rows() << "x" << Q.cols() << " incompatible with field "
       << V.rows() << "x" << V.cols();
    throw std::invalid_argument(os.str());
  }
  MatrixField y(V.grid(), Q.rows(), Q.rows());
  for (int j = 0; j < y.size(); ++j) y[j] = Q[j] * V[j] * Q[j].transpose();
  // L_Q(V)_i = sum_j g(j, i) w_j Q_j V_j Q_j^T
  const Eigen::MatrixXd s =
      kernel.density().transpose() * (V.grid()->weights().asDiagonal() * Stack(y));
  return Unstack(V.grid(), s, Q.rows(), Q.rows());
}

double Pairing(const MatrixField& V, const MatrixField& U) {
  RequireSameShape(V, U, "Pairing");
  double total = 0.0;
  for (int i = 0; i < V.size(); ++i) {
    total += V.grid()->cell(i).weight * V[i].cwiseProduct(U[i]).sum();
  }
  return total;
}

MatrixField OperatorHandle::Apply(const MatrixField& X) const {
  return kind == OperatorKind::kT ? ApplyT(coefficient, kernel, X)
                                  : ApplyL(coefficient, kernel, X);
}

Eigen::MatrixXd DenseOperatorMatrix(const OperatorHandle& op) {
  const int m = op.coefficient.size();
  const int n = op.coefficient.rows();
  const int nn = n * n;
  const Eigen::MatrixXd& w = op.kernel.weighted();
  const Eigen::VectorXd& cell_weight = op.coefficient.grid()->weights();
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(m * nn, m * nn);
  // vec(A X B) = (B^T kron A) vec(X)
  auto kron = [nn, n](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd k(nn, nn);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) k.block(r * n, c * n, n, n) = a(r, c) * b;
    return k;
  };
  if (op.kind == OperatorKind::kT) {
    for (int i = 0; i < m; ++i) {
      const Eigen::MatrixXd qt = op.coefficient[i].transpose();
      const Eigen::MatrixXd block = kron(qt, qt);
      for (int j = 0; j < m; ++j) {
        if (w(i, j) != 0.0) dense.block(i * nn, j * nn, nn, nn) = w(i, j) * block;
      }
    }
  } else {
    for (int j = 0; j < m; ++j) {
      const Eigen::MatrixXd& q = op.coefficient[j];
      const Eigen::MatrixXd block = kron(q, q);
      for (int i = 0; i < m; ++i) {
        const double wji = op.kernel.density()(j, i) * cell_weight(j);
        if (wji != 0.0) dense.block(i * nn, j * nn, nn, nn) = wji * block;
      }
    }
  }
  return dense;
}

double SpectralRadiusDense(const OperatorHandle& op) {
  const Eigen::MatrixXd dense = DenseOperatorMatrix(op);
  Eigen::EigenSolver<Eigen::MatrixXd> es(dense, false);
  if (es.info() != Eigen::Success) throw SolverError("dense eigensolve failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SpectralRadiusResult SpectralRadius(const OperatorHandle& op, double tol, int max_iter) {
  const int n = op.coefficient.rows();
  if (op.coefficient.cols() != n) throw std::invalid_argument("SpectralRadius: coefficient must be square");
  const GridPtr& grid = op.coefficient.grid();

  SpectralRadiusResult result;
  MatrixField x = MatrixField::Identity(grid, n);
  x *= 1.0 / TraceMass(x);
  double prev_estimate = -1.0;
  double prev_delta = -1.0;
  int settled = 0;
  for (int it = 1; it <= max_iter; ++it) {
    MatrixField y = op.Apply(x).Symmetrized();
    const double mass = TraceMass(y);
    result.iterations = it;
    if (!(mass > 1e-300)) {
      // The cone collapses to zero: nilpotent operator.
      result.value = 0.0;
      result.upper_bound = 0.0;
      result.converged = true;
      return result;
    }
    const double estimate = mass;  // x has unit trace mass
    MatrixField r = y;
    r -= estimate * x;
    double rnorm = 0.0;
    for (int i = 0; i < r.size(); ++i) rnorm += grid->cell(i).weight * r[i].norm();
    result.value = estimate;
    result.residual = rnorm;

    if (prev_estimate >= 0.0) {
      const double delta = std::abs(estimate - prev_estimate);
      const double q = std::min(prev_delta > 0.0 ? delta / prev_delta : 0.0, 0.999);
      const double err = delta * q / (1.0 - q) + 1e-3 * delta;
      if (err <= tol * estimate) {
        if (++settled >= 3) {
          result.converged = true;
          result.upper_bound = UpperBoundAt(op, x);
          return result;
        }
      } else {
        settled = 0;
      }
      prev_delta = delta;
    }
    prev_estimate = estimate;
    y *= 1.0 / mass;
    x = std::move(y);
  }
  result.upper_bound = std::numeric_limits<double>::infinity();
  if (op.dimension() <= kDenseSpectralLimit) {
    result.value = SpectralRadiusDense(op);
    result.dense = true;
    result.converged = true;
    result.residual = 0.0;
  }
  return result;
}

MatrixField SqrtField(const MatrixField& P, double tol, int max_iter,
                      const std::function<void(int, const MatrixField&)>& observer) {
  if (P.rows() != P.cols()) throw std::invalid_argument("SqrtField: field must be square");
  if (!P.IsSymmetric(1e-9)) throw SolverError("SqrtField: field is not symmetric");
  const int n = P.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const double global_scale = P.NormInf();
  if (global_scale == 0.0) return P;

  std::vector<double> scale(static_cast<std::size_t>(P.size()));
  MatrixField phat(P.grid(), n, n);
  for (int i = 0; i < P.size(); ++i) {
    const Eigen::MatrixXd sym = 0.5 * (P[i] + P[i].transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = std::max(std::abs(lo), es.eigenvalues()(n - 1));
    if (lo < -1e-10 * std::max(hi, global_scale)) {
      std::ostringstream os;
      os << "SqrtField: field is indefinite at cell " << i << " (min eigenvalue " << lo << ")";
      throw SolverError(os.str());
    }
    scale[static_cast<std::size_t>(i)] = hi;
    phat[i] = hi > 0.0 ? Eigen::MatrixXd(sym / hi) : Eigen::MatrixXd::Zero(n, n);
  }

  MatrixField q(P.grid(), n, n);
  for (int i = 0; i < q.size(); ++i) q[i] = 0.5 * (eye - phat[i]);
  if (observer) observer(0, q);
  bool done = false;
  for (int k = 1; k <= max_iter && !done; ++k) {
    double delta = 0.0;
    for (int i = 0; i < q.size(); ++i) {
      Eigen::MatrixXd next = 0.5 * (eye - phat[i] + q[i] * q[i]);
      next = 0.5 * (next + next.transpose()).eval();
      delta = std::max(delta, (next - q[i]).cwiseAbs().maxCoeff());
      q[i] = std::move(next);
    }
    if (observer) observer(k, q);
    done = delta < tol;
  }
  if (!done) {
    std::ostringstream os;
    os << "SqrtField: iteration did not settle within " << max_iter << " steps";
    throw SolverError(os.str());
  }
  MatrixField s(P.grid(), n, n);
  for (int i = 0; i < s.size(); ++i) {
    s[i] = std::sqrt(scale[static_cast<std::size_t>(i)]) * (eye - q[i]);
  }
  return s;
}

}  // namespace mjls
