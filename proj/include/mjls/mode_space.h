#pragma once

// Finite-grid representation of a Borel mode space: labeled interval
// components cut into uniform midpoint cells, a transition density on the
// cells, an initial density, and matrix-valued functions stored per cell.

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mjls {

struct GridComponent {
  std::string label;
  double lo = 0.0;
  double hi = 1.0;
  int cell_count = 1;

  double length() const { return hi - lo; }
};

struct Cell {
  int component = 0;
  double t = 0.0;       // midpoint
  double weight = 0.0;  // measure of the cell
};

class ModeGrid {
 public:
  // Midpoint-rule cells with uniform weights inside each component. Throws
  // ConfigError on an empty component list, cell_count < 1 or hi <= lo.
  static std::shared_ptr<const ModeGrid> Build(std::vector<GridComponent> components);

  int size() const { return static_cast<int>(cells_.size()); }
  int num_components() const { return static_cast<int>(components_.size()); }
  const Cell& cell(int i) const { return cells_[static_cast<std::size_t>(i)]; }
  std::span<const Cell> cells() const { return cells_; }
  const std::vector<GridComponent>& components() const { return components_; }
  const GridComponent& component(int c) const {
    return components_[static_cast<std::size_t>(c)];
  }
  // Index of the first cell of component c.
  int offset(int c) const { return offsets_[static_cast<std::size_t>(c)]; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double total_measure() const { return weights_.sum(); }

  // Same components with every cell_count replaced.
  std::shared_ptr<const ModeGrid> WithResolution(int cells_per_component) const;

 private:
  ModeGrid() = default;

  std::vector<GridComponent> components_;
  std::vector<Cell> cells_;
  std::vector<int> offsets_;
  Eigen::VectorXd weights_;
};

using GridPtr = std::shared_ptr<const ModeGrid>;

inline constexpr double kAnalyticKernelTolerance = 1e-9;
inline constexpr double kUserKernelTolerance = 1e-6;

// Transition density g(l_i, t_j) on the cells. Row i integrates to one:
// sum_j g(i, j) w_j = 1.
class KernelDensity {
 public:
  KernelDensity() = default;
  // Validates nonnegativity and row normalization; throws ConfigError naming
  // the offending row.
  KernelDensity(GridPtr grid, Eigen::MatrixXd density,
                double row_stochastic_tolerance = kUserKernelTolerance);

  const GridPtr& grid() const { return grid_; }
  int size() const { return static_cast<int>(density_.rows()); }
  const Eigen::MatrixXd& density() const { return density_; }
  // weighted()(i, j) = g(i, j) * w_j, the one-step transition probabilities.
  const Eigen::MatrixXd& weighted() const { return weighted_; }
  double row_stochastic_tolerance() const { return tolerance_; }

  // sum_i g(i, j) w_i for every j.
  Eigen::VectorXd ColumnMass() const;
  // Throws ConfigError when some column mass is zero.
  void RequirePositiveColumns() const;

 private:
  GridPtr grid_;
  Eigen::MatrixXd density_;
  Eigen::MatrixXd weighted_;
  double tolerance_ = kUserKernelTolerance;
};

// Density of the initial mode distribution with respect to the grid measure.
class InitialDensity {
 public:
  InitialDensity() = default;
  InitialDensity(GridPtr grid, Eigen::VectorXd values, double tolerance = kUserKernelTolerance);

  // Constant density 1 / mu(Theta).
  static InitialDensity Uniform(GridPtr grid);
  // Component c carries probability probs[c], spread uniformly over its cells.
  static InitialDensity FromComponentProbabilities(GridPtr grid, const std::vector<double>& probs);

  const GridPtr& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  // Cell probabilities nu0_i * w_i.
  Eigen::VectorXd Probabilities() const;
  void RequirePositive() const;

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
};

// A measurable matrix-valued function on the mode space, stored as one
// rows x cols matrix per grid cell.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(GridPtr grid, int rows, int cols);
  MatrixField(GridPtr grid, std::vector<Eigen::MatrixXd> values);

  static MatrixField Zero(GridPtr grid, int rows, int cols);
  static MatrixField Identity(GridPtr grid, int n);
  static MatrixField Constant(GridPtr grid, const Eigen::MatrixXd& value);

  const GridPtr& grid() const { return grid_; }
  int size() const { return static_cast<int>(values_.size()); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  Eigen::MatrixXd& operator[](int i) { return values_[static_cast<std::size_t>(i)]; }
  const Eigen::MatrixXd& operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }

  MatrixField Transposed() const;
  MatrixField Symmetrized() const;

  MatrixField& operator+=(const MatrixField& other);
  MatrixField& operator-=(const MatrixField& other);
  MatrixField& operator*=(double s);

  // max over cells of the spectral norm
  double NormInf() const;
  // sum over cells of w_i * spectral norm
  double Norm1() const;
  // max over cells of the largest absolute entry difference
  double MaxAbsDiff(const MatrixField& other) const;

  bool IsSymmetric(double tol = 1e-10) const;
  // Extreme eigenvalues over all cells of a symmetric field.
  double MinEigenvalue() const;
  double MaxEigenvalue() const;

 private:
  GridPtr grid_;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Eigen::MatrixXd> values_;
};

MatrixField operator+(MatrixField a, const MatrixField& b);
MatrixField operator-(MatrixField a, const MatrixField& b);
MatrixField operator*(double s, MatrixField a);
// Cell-wise matrix product.
MatrixField operator*(const MatrixField& a, const MatrixField& b);

// Throws std::invalid_argument when the two fields live on different grids or
// have different shapes.
void RequireSameShape(const MatrixField& a, const MatrixField& b, const char* what);

GridPtr BuildGrid(std::vector<GridComponent> components);

// g(i, j) = block_probs[comp(i)][comp(j)] / length(comp(j)).
KernelDensity BuildMarkovKernelFromBlocks(const GridPtr& grid,
                                          const std::vector<std::vector<double>>& block_probs,
                                          double tolerance = kAnalyticKernelTolerance);

// Cell value M1 + t (M2 - M1) at the cell midpoint t, one pair per component.
MatrixField EvalAffineField(const GridPtr& grid,
                            const std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>& per_component);
// Cell value M_c on every cell of component c.
MatrixField EvalConstantField(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& per_component);
// Cell value t * M_c.
MatrixField EvalScaledByTField(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& per_component);

}  // namespace mjls
