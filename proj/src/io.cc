#include "mjls/io.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mjls/error.h"

namespace mjls {

using nlohmann::json;

namespace {

[[noreturn]] void Fail(const std::string& pointer, const std::string& what) {
  throw ConfigError((pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

const json& Require(const json& obj, const std::string& key, const std::string& pointer) {
  if (!obj.is_object()) Fail(pointer, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) Fail(pointer + "/" + key, "missing required entry");
  return *it;
}

double Number(const json& j, const std::string& pointer) {
  if (!j.is_number()) Fail(pointer, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) Fail(pointer, "expected a finite number");
  return v;
}

int Integer(const json& j, const std::string& pointer) {
  if (!j.is_number_integer()) Fail(pointer, "expected an integer");
  return j.get<int>();
}

// A number is read as a 1 x 1 matrix; otherwise an array of equal-length rows.
Eigen::MatrixXd Matrix(const json& j, const std::string& pointer) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, Number(j, pointer));
  if (!j.is_array() || j.empty()) Fail(pointer, "expected a nonempty array of rows");
  const int rows = static_cast<int>(j.size());
  int cols = -1;
  Eigen::MatrixXd m;
  for (int r = 0; r < rows; ++r) {
    const std::string rp = pointer + "/" + std::to_string(r);
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.empty()) Fail(rp, "expected a nonempty array");
    if (cols < 0) {
      cols = static_cast<int>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<int>(row.size()) != cols) {
      Fail(rp, "row length differs from the first row");
    }
    for (int c = 0; c < cols; ++c) {
      m(r, c) = Number(row[static_cast<std::size_t>(c)], rp + "/" + std::to_string(c));
    }
  }
  return m;
}

Eigen::VectorXd Vector(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.empty()) Fail(pointer, "expected a nonempty array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = Number(j[i], pointer + "/" + std::to_string(i));
  return v;
}

json MatrixJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Eigen::MatrixXd> PerComponent(const json& values, int comps, const std::string& pointer) {
  if (!values.is_array() || static_cast<int>(values.size()) != comps) {
    Fail(pointer, "expected one entry per grid component (" + std::to_string(comps) + ")");
  }
  std::vector<Eigen::MatrixXd> out;
  for (int c = 0; c < comps; ++c) {
    out.push_back(Matrix(values[static_cast<std::size_t>(c)], pointer + "/" + std::to_string(c)));
    if (out.back().rows() != out.front().rows() || out.back().cols() != out.front().cols()) {
      Fail(pointer + "/" + std::to_string(c), "shape differs from the first component");
    }
  }
  return out;
}

MatrixField ParseField(const json& entry, const GridPtr& grid, bool resampled,
                       const std::string& pointer) {
  const std::string kind = [&] {
    const json& k = Require(entry, "kind", pointer);
    if (!k.is_string()) Fail(pointer + "/kind", "expected a string");
    return k.get<std::string>();
  }();
  const int comps = grid->num_components();
  const std::string vp = pointer + "/per_component";
  if (kind == "constant") return EvalConstantField(grid, PerComponent(Require(entry, "per_component", pointer), comps, vp));
  if (kind == "scaled_by_t") return EvalScaledByTField(grid, PerComponent(Require(entry, "per_component", pointer), comps, vp));
  if (kind == "affine") {
    const json& values = Require(entry, "per_component", pointer);
    if (!values.is_array() || static_cast<int>(values.size()) != comps) {
      Fail(vp, "expected one [at_0, at_1] pair per grid component");
    }
    std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> pairs;
    for (int c = 0; c < comps; ++c) {
      const std::string cp = vp + "/" + std::to_string(c);
      const json& pair = values[static_cast<std::size_t>(c)];
      if (!pair.is_array() || pair.size() != 2) Fail(cp, "expected a pair of matrices");
      Eigen::MatrixXd lo = Matrix(pair[0], cp + "/0");
      Eigen::MatrixXd hi = Matrix(pair[1], cp + "/1");
      if (lo.rows() != hi.rows() || lo.cols() != hi.cols()) Fail(cp, "pair shapes differ");
      if (!pairs.empty() && (lo.rows() != pairs.front().first.rows() ||
                             lo.cols() != pairs.front().first.cols())) {
        Fail(cp, "shape differs from the first component");
      }
      pairs.emplace_back(std::move(lo), std::move(hi));
    }
    return EvalAffineField(grid, pairs);
  }
  if (kind == "tabulated") {
    if (resampled) Fail(pointer, "tabulated fields cannot be resampled by a grid override");
    const int rows = Integer(Require(entry, "rows", pointer), pointer + "/rows");
    const int cols = Integer(Require(entry, "cols", pointer), pointer + "/cols");
    if (rows < 1 || cols < 1) Fail(pointer, "rows and cols must be positive");
    const json& cells = Require(entry, "cells", pointer);
    const std::string cp = pointer + "/cells";
    if (!cells.is_array() || static_cast<int>(cells.size()) != grid->size()) {
      Fail(cp, "expected one entry per grid cell (" + std::to_string(grid->size()) + ")");
    }
    MatrixField f(grid, rows, cols);
    for (int i = 0; i < grid->size(); ++i) {
      const std::string ip = cp + "/" + std::to_string(i);
      const json& flat = cells[static_cast<std::size_t>(i)];
      if (!flat.is_array() || static_cast<int>(flat.size()) != rows * cols) {
        Fail(ip, "expected rows*cols numbers in row-major order");
      }
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const std::size_t k = static_cast<std::size_t>(r * cols + c);
          f[i](r, c) = Number(flat[k], ip + "/" + std::to_string(k));
        }
      }
    }
    return f;
  }
  Fail(pointer + "/kind", "unknown field kind '" + kind + "'");
}

GridPtr ParseGrid(const json& doc, std::optional<int> grid_cells) {
  const json& grid = Require(doc, "grid", "");
  const json& comps = Require(grid, "components", "/grid");
  if (!comps.is_array() || comps.empty()) Fail("/grid/components", "expected a nonempty array");
  std::vector<GridComponent> out;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const std::string cp = "/grid/components/" + std::to_string(c);
    GridComponent gc;
    const json& label = Require(comps[c], "label", cp);
    if (!label.is_string()) Fail(cp + "/label", "expected a string");
    gc.label = label.get<std::string>();
    if (gc.label.find_first_of(",\"\n") != std::string::npos) {
      Fail(cp + "/label", "labels may not contain commas, quotes or newlines");
    }
    const json& interval = Require(comps[c], "interval", cp);
    if (!interval.is_array() || interval.size() != 2) Fail(cp + "/interval", "expected [lo, hi]");
    gc.lo = Number(interval[0], cp + "/interval/0");
    gc.hi = Number(interval[1], cp + "/interval/1");
    gc.cell_count = grid_cells ? *grid_cells : Integer(Require(comps[c], "cells", cp), cp + "/cells");
    out.push_back(std::move(gc));
  }
  try {
    return BuildGrid(std::move(out));
  } catch (const ConfigError& e) {
    Fail("/grid", e.what());
  }
}

KernelDensity ParseKernel(const json& doc, const GridPtr& grid, bool resampled) {
  const json& kernel = Require(doc, "kernel", "");
  try {
    if (kernel.contains("block_probs")) {
      const Eigen::MatrixXd p = Matrix(kernel["block_probs"], "/kernel/block_probs");
      if (p.rows() != grid->num_components() || p.cols() != grid->num_components()) {
        Fail("/kernel/block_probs", "expected a square matrix with one row per component");
      }
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(p.rows()));
      for (int i = 0; i < p.rows(); ++i) {
        for (int j = 0; j < p.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(p(i, j));
      }
      return BuildMarkovKernelFromBlocks(grid, rows, kUserKernelTolerance);
    }
    if (kernel.contains("density")) {
      if (resampled) Fail("/kernel/density", "a tabulated density cannot be resampled");
      Eigen::MatrixXd g = Matrix(kernel["density"], "/kernel/density");
      if (g.rows() != grid->size() || g.cols() != grid->size()) {
        Fail("/kernel/density", "expected a cells x cells matrix");
      }
      return KernelDensity(grid, std::move(g), kUserKernelTolerance);
    }
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (!what.empty() && what[0] == '/') throw;
    Fail("/kernel", what);
  }
  Fail("/kernel", "expected block_probs or density");
}

InitialDensity ParseInitial(const json& doc, const GridPtr& grid, bool resampled) {
  if (!doc.contains("initial")) return InitialDensity::Uniform(grid);
  const json& init = doc["initial"];
  try {
    if (init.contains("component_probs")) {
      const Eigen::VectorXd p = Vector(init["component_probs"], "/initial/component_probs");
      if (p.size() != grid->num_components()) {
        Fail("/initial/component_probs", "expected one probability per component");
      }
      return InitialDensity::FromComponentProbabilities(grid, std::vector<double>(p.data(), p.data() + p.size()));
    }
    if (init.contains("density")) {
      if (resampled) Fail("/initial/density", "a tabulated density cannot be resampled");
      Eigen::VectorXd v = Vector(init["density"], "/initial/density");
      if (v.size() != grid->size()) Fail("/initial/density", "expected one value per cell");
      return InitialDensity(grid, std::move(v), kUserKernelTolerance);
    }
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (!what.empty() && what[0] == '/') throw;
    Fail("/initial", what);
  }
  Fail("/initial", "expected component_probs or density");
}

std::string Fixed(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

LoadedModel ParseModel(const json& doc, std::optional<int> grid_cells) {
  if (!doc.is_object()) Fail("", "expected a JSON object");
  LoadedModel out;
  out.name = doc.value("name", std::string("model"));
  const bool resampled = grid_cells.has_value();
  const GridPtr grid = ParseGrid(doc, grid_cells);
  KernelDensity kernel = ParseKernel(doc, grid, resampled);
  InitialDensity initial = ParseInitial(doc, grid, resampled);

  const json& fields = Require(doc, "fields", "");
  auto field = [&](const char* key) -> MatrixField {
    if (!fields.contains(key)) return {};
    return ParseField(fields[key], grid, resampled, std::string("/fields/") + key);
  };
  MatrixField A = field("A");
  if (A.empty()) Fail("/fields/A", "missing required entry");
  try {
    out.model = MakeSystemModel(std::move(kernel), std::move(initial), std::move(A), field("B"),
                                field("C"), field("D"), field("F"));
    out.model.RequireOrthonormalD();
  } catch (const ConfigError& e) {
    Fail("/fields", e.what());
  }

  if (doc.contains("x0")) {
    out.x0 = Vector(doc["x0"], "/x0");
    if (out.x0->size() != out.model.n()) Fail("/x0", "dimension differs from A");
  }
  if (doc.contains("gamma")) {
    out.gamma = Number(doc["gamma"], "/gamma");
    if (!(*out.gamma > 0.0)) Fail("/gamma", "must be positive");
  }
  return out;
}

LoadedModel LoadModelFile(const std::string& path, std::optional<int> grid_cells) {
  json doc;
  try {
    doc = json::parse(ReadTextFile(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return ParseModel(doc, grid_cells);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json ModelToJson(const SystemModel& model, const std::string& name) {
  json doc;
  doc["name"] = name;
  json comps = json::array();
  for (const auto& c : model.grid->components()) {
    comps.push_back({{"label", c.label}, {"interval", {c.lo, c.hi}}, {"cells", c.cell_count}});
  }
  doc["grid"]["components"] = comps;
  doc["kernel"]["density"] = MatrixJson(model.kernel.density());
  doc["initial"]["density"] = std::vector<double>(model.initial.values().data(),
                                                  model.initial.values().data() + model.initial.values().size());
  auto tab = [](const MatrixField& f) {
    json cells = json::array();
    for (int i = 0; i < f.size(); ++i) {
      json flat = json::array();
      for (int r = 0; r < f.rows(); ++r)
        for (int c = 0; c < f.cols(); ++c) flat.push_back(f[i](r, c));
      cells.push_back(std::move(flat));
    }
    return json{{"kind", "tabulated"}, {"rows", f.rows()}, {"cols", f.cols()}, {"cells", cells}};
  };
  doc["fields"] = {{"A", tab(model.A)}, {"B", tab(model.B)}, {"C", tab(model.C)},
                   {"D", tab(model.D)}, {"F", tab(model.F)}};
  return doc;
}

std::string FieldCsv(const MatrixField& field) {
  std::ostringstream os;
  os << "component_label,t,row,col,value\n";
  const GridPtr& grid = field.grid();
  for (int i = 0; i < field.size(); ++i) {
    const Cell& cell = grid->cell(i);
    const std::string& label = grid->component(cell.component).label;
    for (int r = 0; r < field.rows(); ++r) {
      for (int c = 0; c < field.cols(); ++c) {
        os << label << ',' << Fixed(cell.t) << ',' << r << ',' << c << ',' << Fixed(field[i](r, c))
           << '\n';
      }
    }
  }
  return os.str();
}

void WriteFieldCsv(const MatrixField& field, const std::string& path) {
  WriteTextFile(path, FieldCsv(field));
}

MatrixField ReadFieldCsv(const GridPtr& grid, const std::string& path) {
  std::istringstream in(ReadTextFile(path));
  std::string line;
  if (!std::getline(in, line) || line != "component_label,t,row,col,value") {
    throw ConfigError(path + ": missing field CSV header");
  }
  struct Entry {
    int row, col;
    double value;
  };
  std::vector<Entry> entries;
  int rows = 0, cols = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string label, t, r, c, v;
    if (!std::getline(ls, label, ',') || !std::getline(ls, t, ',') || !std::getline(ls, r, ',') ||
        !std::getline(ls, c, ',') || !std::getline(ls, v)) {
      throw ConfigError(path + ": malformed line " + std::to_string(lineno));
    }
    try {
      entries.push_back({std::stoi(r), std::stoi(c), std::stod(v)});
    } catch (const std::exception&) {
      throw ConfigError(path + ": malformed number on line " + std::to_string(lineno));
    }
    rows = std::max(rows, entries.back().row + 1);
    cols = std::max(cols, entries.back().col + 1);
  }
  if (rows == 0 || static_cast<long>(entries.size()) != static_cast<long>(grid->size()) * rows * cols) {
    throw ConfigError(path + ": entry count does not match the grid");
  }
  MatrixField f(grid, rows, cols);
  std::size_t k = 0;
  for (int i = 0; i < grid->size(); ++i) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c, ++k) {
        if (entries[k].row != r || entries[k].col != c) {
          throw ConfigError(path + ": entries out of order near data row " + std::to_string(k + 1));
        }
        f[i](r, c) = entries[k].value;
      }
    }
  }
  return f;
}

std::string StatsCsv(const TrajectoryStats& stats) {
  std::ostringstream os;
  os << "k,mean_sq_norm,std_err,r_K,J2\n";
  for (int k = 0; k <= stats.horizon; ++k) {
    const std::size_t i = static_cast<std::size_t>(k);
    os << k << ',' << Fixed(stats.mean_sq_norm[i]) << ',' << Fixed(stats.std_err[i]) << ',';
    if (std::isfinite(stats.ratio[i])) os << Fixed(stats.ratio[i]);
    os << ',' << Fixed(stats.J2[i]) << '\n';
  }
  return os.str();
}

void WriteStatsCsv(const TrajectoryStats& stats, const std::string& path) {
  WriteTextFile(path, StatsCsv(stats));
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json JsonNumber(double value) { return std::isfinite(value) ? json(value) : json(nullptr); }

}  // namespace mjls
