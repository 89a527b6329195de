#include "mjls/system_model.h"

#include <sstream>

#include "mjls/error.h"

namespace mjls {

namespace {

void CheckField(const MatrixField& f, const GridPtr& grid, int rows, int cols, const char* name) {
  if (f.empty() || f.size() != grid->size()) {
    std::ostringstream os;
    os << "model: field " << name << " is missing or not defined on the model grid";
    throw ConfigError(os.str());
  }
  if ((rows >= 0 && f.rows() != rows) || (cols >= 0 && f.cols() != cols)) {
    std::ostringstream os;
    os << "model: field " << name << " is " << f.rows() << "x" << f.cols() << ", expected "
       << rows << "x" << cols;
    throw ConfigError(os.str());
  }
}

}  // namespace

void SystemModel::Validate() const {
  if (!grid) throw ConfigError("model: missing grid");
  if (kernel.size() != grid->size()) throw ConfigError("model: kernel does not match grid");
  if (initial.values().size() != grid->size()) {
    throw ConfigError("model: initial density does not match grid");
  }
  CheckField(A, grid, -1, -1, "A");
  if (A.rows() != A.cols()) throw ConfigError("model: A must be square");
  const int nn = A.rows();
  CheckField(B, grid, nn, -1, "B");
  CheckField(C, grid, -1, nn, "C");
  CheckField(D, grid, -1, B.cols(), "D");
  CheckField(F, grid, nn, -1, "F");
  for (const auto* f : {&A, &B, &C, &D, &F}) {
    for (int i = 0; i < f->size(); ++i) {
      if (!(*f)[i].allFinite()) throw ConfigError("model: non-finite coefficient");
    }
  }
}

void SystemModel::RequireOrthonormalD(double tol) const {
  for (int i = 0; i < D.size(); ++i) {
    const Eigen::MatrixXd dtd = D[i].transpose() * D[i];
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dtd.rows(), dtd.cols());
    if ((dtd - eye).cwiseAbs().maxCoeff() > tol) {
      std::ostringstream os;
      os << "model: D^T D != I at cell " << i;
      throw ConfigError(os.str());
    }
  }
}

SystemModel MakeSystemModel(KernelDensity kernel, InitialDensity initial, MatrixField A,
                            MatrixField B, MatrixField C, MatrixField D, MatrixField F) {
  SystemModel model;
  model.grid = kernel.grid();
  const int nn = A.rows();
  if (B.empty()) B = MatrixField::Zero(model.grid, nn, 1);
  if (C.empty()) C = MatrixField::Zero(model.grid, 1, nn);
  if (D.empty()) D = MatrixField::Identity(model.grid, B.cols());
  if (F.empty()) F = MatrixField::Zero(model.grid, nn, 1);
  model.kernel = std::move(kernel);
  model.initial = std::move(initial);
  model.A = std::move(A);
  model.B = std::move(B);
  model.C = std::move(C);
  model.D = std::move(D);
  model.F = std::move(F);
  model.Validate();
  return model;
}

}  // namespace mjls
