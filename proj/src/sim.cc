#include "mjls/sim.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "mjls/error.h"

namespace mjls {

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 PathStream(std::uint64_t seed, std::uint64_t path) {
  return std::mt19937_64(SplitMix64(SplitMix64(seed) ^ SplitMix64(path + 0x5851f42d4c957f2dULL)));
}

// Cumulative distributions for the initial law and every kernel row.
struct ChainSampler {
  std::vector<double> initial;
  std::vector<std::vector<double>> rows;

  ChainSampler(const KernelDensity& kernel, const InitialDensity& nu0) {
    initial = Cumulative(nu0.Probabilities(), "initial density");
    const Eigen::MatrixXd& w = kernel.weighted();
    rows.reserve(static_cast<std::size_t>(w.rows()));
    for (int i = 0; i < w.rows(); ++i) {
      rows.push_back(Cumulative(w.row(i).transpose(), "kernel row"));
    }
  }

  static std::vector<double> Cumulative(const Eigen::VectorXd& p, const char* what) {
    std::vector<double> c(static_cast<std::size_t>(p.size()));
    double total = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      total += std::max(p(i), 0.0);
      c[static_cast<std::size_t>(i)] = total;
    }
    if (!(total > 0.0)) throw ConfigError(std::string("degenerate ") + what);
    for (double& v : c) v /= total;
    c.back() = 1.0;
    return c;
  }

  static int Draw(const std::vector<double>& cdf, std::mt19937_64& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                     static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  }

  std::vector<int> Path(int horizon, std::mt19937_64& rng) const {
    std::vector<int> path(static_cast<std::size_t>(horizon) + 1);
    path[0] = Draw(initial, rng);
    for (int k = 0; k < horizon; ++k) {
      path[static_cast<std::size_t>(k) + 1] =
          Draw(rows[static_cast<std::size_t>(path[static_cast<std::size_t>(k)])], rng);
    }
    return path;
  }
};

// Raw per-path samples, row = path, column = k.
struct PathSamples {
  Eigen::MatrixXd sq_norm;
  Eigen::MatrixXd z_energy;
  Eigen::MatrixXd v_energy;
  std::vector<Eigen::MatrixXd> state;  // per path, n x (horizon+1)
  std::vector<int> component_visits;
  std::vector<char> overflow;
};

// Pairwise summation keeps the reduction independent of how paths were
// split across workers.
double PairwiseSum(const double* data, int count) {
  if (count <= 8) {
    double s = 0.0;
    for (int i = 0; i < count; ++i) s += data[i];
    return s;
  }
  const int half = count / 2;
  return PairwiseSum(data, half) + PairwiseSum(data + half, count - half);
}

double ColumnMean(const Eigen::MatrixXd& m, int col) {
  const Eigen::VectorXd c = m.col(col);
  return PairwiseSum(c.data(), static_cast<int>(c.size())) / static_cast<double>(c.size());
}

double ColumnStdErr(const Eigen::VectorXd& c) {
  const int n = static_cast<int>(c.size());
  if (n < 2) return 0.0;
  const double mean = PairwiseSum(c.data(), n) / n;
  const Eigen::VectorXd dev = (c.array() - mean).square();
  const double var = PairwiseSum(dev.data(), n) / (n - 1);
  return std::sqrt(var / n);
}

void SimulateOne(const SimPlan& plan, const ChainSampler& sampler, int p, PathSamples& out) {
  const SystemModel& s = plan.system;
  const int horizon = plan.horizon;
  const int n = s.n();
  std::mt19937_64 rng = PathStream(plan.seed, static_cast<std::uint64_t>(p));
  const std::vector<int> modes = sampler.Path(horizon, rng);

  Eigen::VectorXd x = plan.x0;
  Eigen::MatrixXd& traj = out.state[static_cast<std::size_t>(p)];
  traj.resize(n, horizon + 1);
  bool dead = false;
  for (int k = 0; k <= horizon; ++k) {
    const int cell = modes[static_cast<std::size_t>(k)];
    if (dead) {
      const double inf = std::numeric_limits<double>::infinity();
      out.sq_norm(p, k) = inf;
      out.z_energy(p, k) = inf;
      out.v_energy(p, k) = 0.0;
      traj.col(k).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    traj.col(k) = x;
    out.sq_norm(p, k) = x.squaredNorm();
    Eigen::VectorXd u = Eigen::VectorXd::Zero(s.m());
    if (plan.control_gain) u = (*plan.control_gain)[cell] * x;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(s.r());
    if (plan.disturbance == DisturbanceKind::kSequence) {
      v = plan.disturbance_sequence[static_cast<std::size_t>(k)];
    } else if (plan.disturbance == DisturbanceKind::kFeedback) {
      v = (*plan.disturbance_gain)[cell] * x;
    }
    out.z_energy(p, k) = (s.C[cell] * x).squaredNorm() + (s.D[cell] * u).squaredNorm();
    out.v_energy(p, k) = v.squaredNorm();
    x = s.A[cell] * x + s.B[cell] * u + s.F[cell] * v;
    if (!(x.norm() <= kOverflowGuard)) {
      dead = true;
      out.overflow[static_cast<std::size_t>(p)] = 1;
    }
  }
  for (int k = 0; k <= horizon; ++k) {
    const int comp = s.grid->cell(modes[static_cast<std::size_t>(k)]).component;
    out.component_visits[static_cast<std::size_t>(p) * s.grid->num_components() +
                         static_cast<std::size_t>(comp)] += 1;
  }
}

PathSamples Simulate(const SimPlan& plan) {
  plan.Validate();
  const InitialDensity& nu0 = plan.initial ? *plan.initial : plan.system.initial;
  const ChainSampler sampler(plan.system.kernel, nu0);
  const int paths = plan.n_paths;
  const int cols = plan.horizon + 1;
  PathSamples out;
  out.sq_norm.resize(paths, cols);
  out.z_energy.resize(paths, cols);
  out.v_energy.resize(paths, cols);
  out.state.resize(static_cast<std::size_t>(paths));
  out.overflow.assign(static_cast<std::size_t>(paths), 0);
  out.component_visits.assign(
      static_cast<std::size_t>(paths) * static_cast<std::size_t>(plan.system.grid->num_components()), 0);

  const int workers = WorkerCount(paths);
  if (workers <= 1) {
    for (int p = 0; p < paths; ++p) SimulateOne(plan, sampler, p, out);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int p = w; p < paths; p += workers) SimulateOne(plan, sampler, p, out);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

TrajectoryStats Summarize(const SimPlan& plan, const PathSamples& raw) {
  const int paths = plan.n_paths;
  const int horizon = plan.horizon;
  const int n = plan.system.n();
  TrajectoryStats st;
  st.horizon = horizon;
  st.n_paths = paths;
  st.overflow_paths = static_cast<int>(std::count(raw.overflow.begin(), raw.overflow.end(), 1));

  Eigen::VectorXd j2_path = Eigen::VectorXd::Zero(paths);
  double z_total = 0.0;
  double v_total = 0.0;
  for (int k = 0; k <= horizon; ++k) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (int h = 0; h < n; ++h) {
      Eigen::VectorXd c(paths);
      for (int p = 0; p < paths; ++p) c(p) = raw.state[static_cast<std::size_t>(p)](h, k);
      mean(h) = PairwiseSum(c.data(), paths) / paths;
    }
    st.mean_state.push_back(mean);
    st.mean_sq_norm.push_back(ColumnMean(raw.sq_norm, k));
    st.std_err.push_back(ColumnStdErr(raw.sq_norm.col(k)));
    const double ez = ColumnMean(raw.z_energy, k);
    st.output_energy.push_back(ez);
    j2_path += raw.z_energy.col(k);
    st.J2.push_back(PairwiseSum(j2_path.data(), paths) / paths);
    st.J2_std_err.push_back(ColumnStdErr(j2_path));
    z_total += ez;
    v_total += ColumnMean(raw.v_energy, k);
    st.ratio.push_back(v_total > 0.0 ? std::sqrt(z_total) / std::sqrt(v_total)
                                     : std::numeric_limits<double>::quiet_NaN());
  }

  const int comps = plan.system.grid->num_components();
  st.component_occupancy.assign(static_cast<std::size_t>(comps), 0.0);
  for (int p = 0; p < paths; ++p) {
    for (int c = 0; c < comps; ++c) {
      st.component_occupancy[static_cast<std::size_t>(c)] +=
          raw.component_visits[static_cast<std::size_t>(p) * comps + static_cast<std::size_t>(c)];
    }
  }
  for (double& o : st.component_occupancy) o /= static_cast<double>(paths) * (horizon + 1);
  return st;
}

}  // namespace

void SimPlan::Validate() const {
  system.Validate();
  const int n = system.n();
  auto fail = [](const std::string& what) { throw ConfigError("simulation plan: " + what); };
  if (horizon < 1) fail("horizon must be at least 1");
  if (n_paths < 1) fail("n_paths must be at least 1");
  if (x0.size() != n) fail("x0 has the wrong dimension");
  if (control_gain) {
    if (control_gain->size() != system.grid->size() || control_gain->rows() != system.m() ||
        control_gain->cols() != n) {
      fail("control gain must be an m x n field on the model grid");
    }
  }
  if (disturbance == DisturbanceKind::kFeedback) {
    if (!disturbance_gain || disturbance_gain->size() != system.grid->size() ||
        disturbance_gain->rows() != system.r() || disturbance_gain->cols() != n) {
      fail("feedback disturbance needs an r x n gain field on the model grid");
    }
  }
  if (disturbance == DisturbanceKind::kSequence) {
    if (static_cast<int>(disturbance_sequence.size()) < horizon + 1) {
      fail("disturbance sequence is shorter than the horizon");
    }
    for (const auto& v : disturbance_sequence) {
      if (v.size() != system.r()) fail("disturbance sequence entry has the wrong dimension");
    }
  }
  if (initial && initial->values().size() != system.grid->size()) {
    fail("initial density does not match the grid");
  }
}

int WorkerCount(int work_items) {
  unsigned hw = std::thread::hardware_concurrency();
  int cap = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("MJLS_THREADS")) {
    const int requested = std::atoi(env);
    if (requested >= 1) cap = std::min(cap, requested);
  }
  return std::max(1, std::min(cap, work_items / 64 + 1));
}

std::vector<int> SampleChain(const KernelDensity& kernel, const InitialDensity& nu0, int horizon,
                             std::uint64_t seed, std::uint64_t path) {
  if (horizon < 0) throw std::invalid_argument("SampleChain: negative horizon");
  const ChainSampler sampler(kernel, nu0);
  std::mt19937_64 rng = PathStream(seed, path);
  return sampler.Path(horizon, rng);
}

TrajectoryStats RunPaths(const SimPlan& plan) { return Summarize(plan, Simulate(plan)); }

TrajectoryStats HinfRatioRun(const SystemModel& system, const MatrixField& K2, int horizon,
                             int n_paths, std::uint64_t seed) {
  SimPlan plan;
  plan.system = system;
  plan.control_gain = K2;
  plan.disturbance = DisturbanceKind::kSequence;
  for (int k = 0; k <= horizon; ++k) {
    plan.disturbance_sequence.push_back(Eigen::VectorXd::Constant(system.r(), std::exp(-2.0 * k)));
  }
  plan.x0 = Eigen::VectorXd::Zero(system.n());
  plan.horizon = horizon;
  plan.n_paths = n_paths;
  plan.seed = seed;
  return RunPaths(plan);
}

J2Comparison CompareJ2(const SimPlan& plan_a, const SimPlan& plan_b) {
  if (plan_a.horizon != plan_b.horizon) throw ConfigError("compare-j2: mismatched horizons");
  if (plan_a.n_paths != plan_b.n_paths) throw ConfigError("compare-j2: mismatched path counts");
  if (plan_a.seed != plan_b.seed) throw ConfigError("compare-j2: mismatched seeds");
  const PathSamples a = Simulate(plan_a);
  const PathSamples b = Simulate(plan_b);
  const int paths = plan_a.n_paths;
  J2Comparison out;
  Eigen::VectorXd ja = Eigen::VectorXd::Zero(paths);
  Eigen::VectorXd jb = Eigen::VectorXd::Zero(paths);
  for (int k = 0; k <= plan_a.horizon; ++k) {
    ja += a.z_energy.col(k);
    jb += b.z_energy.col(k);
    const Eigen::VectorXd d = ja - jb;
    out.j2_a.push_back(PairwiseSum(ja.data(), paths) / paths);
    out.j2_b.push_back(PairwiseSum(jb.data(), paths) / paths);
    out.difference.push_back(PairwiseSum(d.data(), paths) / paths);
    out.difference_std_err.push_back(ColumnStdErr(d));
  }
  return out;
}

}  // namespace mjls
