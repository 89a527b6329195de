#pragma once

// JSON model files and CSV/JSON result artifacts.

#include <optional>
#include <string>

#include "json.hpp"

#include "mjls/mode_space.h"
#include "mjls/sim.h"
#include "mjls/system_model.h"

namespace mjls {

struct LoadedModel {
  std::string name;
  SystemModel model;
  std::optional<Eigen::VectorXd> x0;
  std::optional<double> gamma;
};

// Parses and validates a model description. `grid_cells` replaces the cell
// count of every component; tabulated data cannot be resampled and is then
// rejected. Throws ConfigError with a JSON pointer to the offending entry.
LoadedModel ParseModel(const nlohmann::json& doc, std::optional<int> grid_cells = std::nullopt);
LoadedModel LoadModelFile(const std::string& path, std::optional<int> grid_cells = std::nullopt);

// Cell-exact description: every field tabulated, kernel and initial law as
// explicit densities. Parsing the result reproduces the model bit for bit.
nlohmann::json ModelToJson(const SystemModel& model, const std::string& name = "model");

// Header component_label,t,row,col,value; one line per cell and entry,
// cells in grid order, entries row-major.
std::string FieldCsv(const MatrixField& field);
void WriteFieldCsv(const MatrixField& field, const std::string& path);
// Inverse of FieldCsv on a known grid. Throws ConfigError on mismatch.
MatrixField ReadFieldCsv(const GridPtr& grid, const std::string& path);

// Header k,mean_sq_norm,std_err,r_K,J2.
std::string StatsCsv(const TrajectoryStats& stats);
void WriteStatsCsv(const TrajectoryStats& stats, const std::string& path);

void WriteTextFile(const std::string& path, const std::string& text);
std::string ReadTextFile(const std::string& path);

// Non-finite numbers become null so that reports stay valid JSON.
nlohmann::json JsonNumber(double value);

}  // namespace mjls
