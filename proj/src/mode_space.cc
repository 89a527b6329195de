#include "mjls/mode_space.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mjls/error.h"

namespace mjls {

namespace {

double SpectralNorm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

std::shared_ptr<const ModeGrid> ModeGrid::Build(std::vector<GridComponent> components) {
  if (components.empty()) throw ConfigError("grid: component list is empty");
  std::shared_ptr<ModeGrid> grid(new ModeGrid());
  int total = 0;
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto& comp = components[c];
    if (comp.cell_count < 1) {
      std::ostringstream os;
      os << "grid: component " << c << " ('" << comp.label << "') has nonpositive cell count "
         << comp.cell_count;
      throw ConfigError(os.str());
    }
    if (!(comp.hi > comp.lo) || !std::isfinite(comp.lo) || !std::isfinite(comp.hi)) {
      std::ostringstream os;
      os << "grid: component " << c << " ('" << comp.label << "') has degenerate interval ["
         << comp.lo << ", " << comp.hi << "]";
      throw ConfigError(os.str());
    }
    grid->offsets_.push_back(total);
    total += comp.cell_count;
  }
  grid->cells_.reserve(static_cast<std::size_t>(total));
  grid->weights_.resize(total);
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto& comp = components[c];
    const double h = comp.length() / comp.cell_count;
    for (int k = 0; k < comp.cell_count; ++k) {
      Cell cell;
      cell.component = static_cast<int>(c);
      cell.t = comp.lo + (k + 0.5) * h;
      cell.weight = h;
      grid->weights_(static_cast<Eigen::Index>(grid->cells_.size())) = h;
      grid->cells_.push_back(cell);
    }
  }
  grid->components_ = std::move(components);
  return grid;
}

std::shared_ptr<const ModeGrid> ModeGrid::WithResolution(int cells_per_component) const {
  auto comps = components_;
  for (auto& c : comps) c.cell_count = cells_per_component;
  return Build(std::move(comps));
}

GridPtr BuildGrid(std::vector<GridComponent> components) {
  return ModeGrid::Build(std::move(components));
}

// ---------------------------------------------------------------------------

KernelDensity::KernelDensity(GridPtr grid, Eigen::MatrixXd density, double row_stochastic_tolerance)
    : grid_(std::move(grid)), density_(std::move(density)), tolerance_(row_stochastic_tolerance) {
  if (!grid_) throw ConfigError("kernel: missing grid");
  const int m = grid_->size();
  if (density_.rows() != m || density_.cols() != m) {
    std::ostringstream os;
    os << "kernel: density is " << density_.rows() << "x" << density_.cols() << ", grid has " << m
       << " cells";
    throw ConfigError(os.str());
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!(density_(i, j) >= 0.0) || !std::isfinite(density_(i, j))) {
        std::ostringstream os;
        os << "kernel: row " << i << " has invalid density " << density_(i, j) << " at column " << j;
        throw ConfigError(os.str());
      }
    }
  }
  weighted_ = density_ * grid_->weights().asDiagonal();
  for (int i = 0; i < m; ++i) {
    const double mass = weighted_.row(i).sum();
    if (std::abs(mass - 1.0) > tolerance_) {
      std::ostringstream os;
      os << "kernel: row " << i << " integrates to " << mass << " (tolerance " << tolerance_ << ")";
      throw ConfigError(os.str());
    }
  }
}

Eigen::VectorXd KernelDensity::ColumnMass() const {
  return density_.transpose() * grid_->weights();
}

void KernelDensity::RequirePositiveColumns() const {
  const Eigen::VectorXd mass = ColumnMass();
  for (int j = 0; j < mass.size(); ++j) {
    if (!(mass(j) > 0.0)) {
      std::ostringstream os;
      os << "kernel: column " << j << " has zero incoming mass";
      throw ConfigError(os.str());
    }
  }
}

KernelDensity BuildMarkovKernelFromBlocks(const GridPtr& grid,
                                          const std::vector<std::vector<double>>& block_probs,
                                          double tolerance) {
  const int nc = grid->num_components();
  if (static_cast<int>(block_probs.size()) != nc) {
    std::ostringstream os;
    os << "kernel: block_probs has " << block_probs.size() << " rows, grid has " << nc
       << " components";
    throw ConfigError(os.str());
  }
  for (int a = 0; a < nc; ++a) {
    const auto& row = block_probs[static_cast<std::size_t>(a)];
    if (static_cast<int>(row.size()) != nc) {
      std::ostringstream os;
      os << "kernel: block_probs row " << a << " has " << row.size() << " entries, expected " << nc;
      throw ConfigError(os.str());
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) {
        std::ostringstream os;
        os << "kernel: block_probs row " << a << " has a negative entry";
        throw ConfigError(os.str());
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      std::ostringstream os;
      os << "kernel: block_probs row " << a << " sums to " << sum;
      throw ConfigError(os.str());
    }
  }
  const int m = grid->size();
  Eigen::MatrixXd g(m, m);
  for (int i = 0; i < m; ++i) {
    const int ci = grid->cell(i).component;
    for (int j = 0; j < m; ++j) {
      const int cj = grid->cell(j).component;
      g(i, j) = block_probs[static_cast<std::size_t>(ci)][static_cast<std::size_t>(cj)] /
                grid->component(cj).length();
    }
  }
  return KernelDensity(grid, std::move(g), tolerance);
}

// ---------------------------------------------------------------------------

InitialDensity::InitialDensity(GridPtr grid, Eigen::VectorXd values, double tolerance)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw ConfigError("initial density: missing grid");
  if (values_.size() != grid_->size()) {
    std::ostringstream os;
    os << "initial density: " << values_.size() << " values for " << grid_->size() << " cells";
    throw ConfigError(os.str());
  }
  for (int i = 0; i < values_.size(); ++i) {
    if (!(values_(i) >= 0.0) || !std::isfinite(values_(i))) {
      std::ostringstream os;
      os << "initial density: invalid value " << values_(i) << " at cell " << i;
      throw ConfigError(os.str());
    }
  }
  const double mass = values_.dot(grid_->weights());
  if (std::abs(mass - 1.0) > tolerance) {
    std::ostringstream os;
    os << "initial density integrates to " << mass;
    throw ConfigError(os.str());
  }
}

InitialDensity InitialDensity::Uniform(GridPtr grid) {
  const double total = grid->total_measure();
  Eigen::VectorXd v = Eigen::VectorXd::Constant(grid->size(), 1.0 / total);
  return InitialDensity(std::move(grid), std::move(v), kAnalyticKernelTolerance);
}

InitialDensity InitialDensity::FromComponentProbabilities(GridPtr grid,
                                                          const std::vector<double>& probs) {
  if (static_cast<int>(probs.size()) != grid->num_components()) {
    std::ostringstream os;
    os << "initial density: " << probs.size() << " component probabilities for "
       << grid->num_components() << " components";
    throw ConfigError(os.str());
  }
  Eigen::VectorXd v(grid->size());
  for (int i = 0; i < grid->size(); ++i) {
    const int c = grid->cell(i).component;
    v(i) = probs[static_cast<std::size_t>(c)] / grid->component(c).length();
  }
  return InitialDensity(std::move(grid), std::move(v), kAnalyticKernelTolerance);
}

Eigen::VectorXd InitialDensity::Probabilities() const {
  return values_.cwiseProduct(grid_->weights());
}

void InitialDensity::RequirePositive() const {
  for (int i = 0; i < values_.size(); ++i) {
    if (!(values_(i) > 0.0)) {
      std::ostringstream os;
      os << "initial density vanishes at cell " << i;
      throw ConfigError(os.str());
    }
  }
}

// ---------------------------------------------------------------------------

MatrixField::MatrixField(GridPtr grid, int rows, int cols)
    : grid_(std::move(grid)), rows_(rows), cols_(cols) {
  values_.assign(static_cast<std::size_t>(grid_->size()), Eigen::MatrixXd::Zero(rows, cols));
}

MatrixField::MatrixField(GridPtr grid, std::vector<Eigen::MatrixXd> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != grid_->size()) {
    throw std::invalid_argument("MatrixField: value count does not match grid size");
  }
  rows_ = static_cast<int>(values_.front().rows());
  cols_ = static_cast<int>(values_.front().cols());
  for (const auto& v : values_) {
    if (v.rows() != rows_ || v.cols() != cols_) {
      throw std::invalid_argument("MatrixField: cells have inconsistent shapes");
    }
  }
}

MatrixField MatrixField::Zero(GridPtr grid, int rows, int cols) {
  return MatrixField(std::move(grid), rows, cols);
}

MatrixField MatrixField::Identity(GridPtr grid, int n) {
  return Constant(std::move(grid), Eigen::MatrixXd::Identity(n, n));
}

MatrixField MatrixField::Constant(GridPtr grid, const Eigen::MatrixXd& value) {
  const auto m = static_cast<std::size_t>(grid->size());
  return MatrixField(std::move(grid), std::vector<Eigen::MatrixXd>(m, value));
}

MatrixField MatrixField::Transposed() const {
  MatrixField out(grid_, cols_, rows_);
  for (int i = 0; i < size(); ++i) out[i] = (*this)[i].transpose();
  return out;
}

MatrixField MatrixField::Symmetrized() const {
  MatrixField out = *this;
  for (auto& v : out.values_) v = 0.5 * (v + v.transpose()).eval();
  return out;
}

void RequireSameShape(const MatrixField& a, const MatrixField& b, const char* what) {
  if (a.grid() != b.grid() && (a.size() != b.size())) {
    throw std::invalid_argument(std::string(what) + ": fields live on different grids");
  }
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() != b.size()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
       << b.cols();
    throw std::invalid_argument(os.str());
  }
}

MatrixField& MatrixField::operator+=(const MatrixField& other) {
  RequireSameShape(*this, other, "operator+=");
  for (int i = 0; i < size(); ++i) (*this)[i] += other[i];
  return *this;
}

MatrixField& MatrixField::operator-=(const MatrixField& other) {
  RequireSameShape(*this, other, "operator-=");
  for (int i = 0; i < size(); ++i) (*this)[i] -= other[i];
  return *this;
}

MatrixField& MatrixField::operator*=(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

double MatrixField::NormInf() const {
  double best = 0.0;
  for (const auto& v : values_) best = std::max(best, SpectralNorm(v));
  return best;
}

double MatrixField::Norm1() const {
  double total = 0.0;
  for (int i = 0; i < size(); ++i) total += grid_->cell(i).weight * SpectralNorm((*this)[i]);
  return total;
}

double MatrixField::MaxAbsDiff(const MatrixField& other) const {
  RequireSameShape(*this, other, "MaxAbsDiff");
  double best = 0.0;
  for (int i = 0; i < size(); ++i) {
    if ((*this)[i].size() == 0) continue;
    best = std::max(best, ((*this)[i] - other[i]).cwiseAbs().maxCoeff());
  }
  return best;
}

bool MatrixField::IsSymmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (const auto& v : values_) {
    if (v.size() == 0) continue;
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    if ((v - v.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  }
  return true;
}

double MatrixField::MinEigenvalue() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : values_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()),
                                                      Eigen::EigenvaluesOnly);
    best = std::min(best, es.eigenvalues()(0));
  }
  return best;
}

double MatrixField::MaxEigenvalue() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& v : values_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()),
                                                      Eigen::EigenvaluesOnly);
    best = std::max(best, es.eigenvalues()(es.eigenvalues().size() - 1));
  }
  return best;
}

MatrixField operator+(MatrixField a, const MatrixField& b) { return a += b; }
MatrixField operator-(MatrixField a, const MatrixField& b) { return a -= b; }
MatrixField operator*(double s, MatrixField a) { return a *= s; }

MatrixField operator*(const MatrixField& a, const MatrixField& b) {
  if (a.cols() != b.rows() || a.size() != b.size()) {
    std::ostringstream os;
    os << "field product: inner dimensions " << a.rows() << "x" << a.cols() << " * " << b.rows()
       << "x" << b.cols();
    throw std::invalid_argument(os.str());
  }
  MatrixField out(a.grid(), a.rows(), b.cols());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void CheckComponentCount(const GridPtr& grid, std::size_t given, const char* what) {
  if (static_cast<int>(given) != grid->num_components()) {
    std::ostringstream os;
    os << what << ": " << given << " component entries for " << grid->num_components()
       << " components";
    throw ConfigError(os.str());
  }
}

}  // namespace

MatrixField EvalAffineField(
    const GridPtr& grid,
    const std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>& per_component) {
  CheckComponentCount(grid, per_component.size(), "affine field");
  const auto rows = per_component.front().first.rows();
  const auto cols = per_component.front().first.cols();
  for (std::size_t c = 0; c < per_component.size(); ++c) {
    const auto& [m1, m2] = per_component[c];
    if (m1.rows() != rows || m1.cols() != cols || m2.rows() != rows || m2.cols() != cols) {
      std::ostringstream os;
      os << "affine field: component " << c << " has shape mismatch";
      throw ConfigError(os.str());
    }
  }
  std::vector<Eigen::MatrixXd> values;
  values.reserve(static_cast<std::size_t>(grid->size()));
  for (const auto& cell : grid->cells()) {
    const auto& [m1, m2] = per_component[static_cast<std::size_t>(cell.component)];
    values.push_back(m1 + cell.t * (m2 - m1));
  }
  return MatrixField(grid, std::move(values));
}

MatrixField EvalConstantField(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& per_component) {
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> pairs;
  for (const auto& m : per_component) pairs.emplace_back(m, m);
  return EvalAffineField(grid, pairs);
}

MatrixField EvalScaledByTField(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& per_component) {
  CheckComponentCount(grid, per_component.size(), "scaled_by_t field");
  std::vector<Eigen::MatrixXd> values;
  values.reserve(static_cast<std::size_t>(grid->size()));
  for (const auto& cell : grid->cells()) {
    const auto& m = per_component[static_cast<std::size_t>(cell.component)];
    if (m.rows() != per_component.front().rows() || m.cols() != per_component.front().cols()) {
      throw ConfigError("scaled_by_t field: shape mismatch between components");
    }
    values.push_back(cell.t * m);
  }
  return MatrixField(grid, std::move(values));
}

}  // namespace mjls
