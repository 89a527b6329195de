#pragma once

// Small grids and models shared by the unit tests.

#include <string>
#include <vector>

#include "mjls/io.h"
#include "mjls/mode_space.h"
#include "mjls/system_model.h"

namespace fixture {

using mjls::GridPtr;
using mjls::MatrixField;

inline const std::string kModels = MJLS_MODELS_DIR;

inline GridPtr Atoms(int count) {
  std::vector<mjls::GridComponent> comps;
  for (int i = 0; i < count; ++i) comps.push_back({"a" + std::to_string(i), 0.0, 1.0, 1});
  return mjls::BuildGrid(comps);
}

inline GridPtr UnitGrid(int cells) { return mjls::BuildGrid({{"m", 0.0, 1.0, cells}}); }

// Finite chain with transition matrix `prob` on single-cell atoms.
inline mjls::KernelDensity Chain(const GridPtr& grid, const Eigen::MatrixXd& prob) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(prob.rows()));
  for (int i = 0; i < prob.rows(); ++i)
    for (int j = 0; j < prob.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(prob(i, j));
  return mjls::BuildMarkovKernelFromBlocks(grid, rows);
}

inline MatrixField Scalar(const GridPtr& grid, double v) {
  return MatrixField::Constant(grid, Eigen::MatrixXd::Constant(1, 1, v));
}

inline MatrixField Fill(const GridPtr& grid, const std::vector<Eigen::MatrixXd>& cells) {
  return MatrixField(grid, cells);
}

inline mjls::LoadedModel Solar(int cells = 50) {
  return mjls::LoadModelFile(kModels + "/solar.json", cells);
}

inline mjls::LoadedModel Game2d(int cells = 50) {
  return mjls::LoadModelFile(kModels + "/game2d.json", cells);
}

// Field with value -t on every cell.
inline MatrixField MinusT(const GridPtr& grid) {
  MatrixField f(grid, 1, 1);
  for (int i = 0; i < grid->size(); ++i) f[i](0, 0) = -grid->cell(i).t;
  return f;
}

}  // namespace fixture
