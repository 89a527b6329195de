#pragma once

// Monte Carlo trajectories of
//   x(k+1) = A x + B u + F v,   z = [C x; D u],   u = K2 x,
// with the mode chain sampled cell by cell from the discretized kernel.

#include <cstdint>
#include <optional>
#include <vector>

#include "mjls/mode_space.h"
#include "mjls/system_model.h"

namespace mjls {

enum class DisturbanceKind { kNone, kSequence, kFeedback };

struct SimPlan {
  SystemModel system;
  std::optional<MatrixField> control_gain;      // K2, m x n; u = 0 when absent
  std::optional<MatrixField> disturbance_gain;  // K1, r x n, for kFeedback
  DisturbanceKind disturbance = DisturbanceKind::kNone;
  // v(k) for kSequence, k = 0..horizon; each entry has r components.
  std::vector<Eigen::VectorXd> disturbance_sequence;
  Eigen::VectorXd x0;
  std::optional<InitialDensity> initial;  // defaults to the model's
  int horizon = 60;
  int n_paths = 1000;
  std::uint64_t seed = 1;

  // Throws ConfigError on inconsistent shapes or counts.
  void Validate() const;
};

// Per-k statistics for k = 0..horizon.
struct TrajectoryStats {
  int horizon = 0;
  int n_paths = 0;
  std::vector<Eigen::VectorXd> mean_state;
  std::vector<double> mean_sq_norm;  // E|x(k)|^2
  std::vector<double> std_err;       // standard error of mean_sq_norm
  std::vector<double> output_energy;  // E|z(k)|^2
  std::vector<double> J2;            // sum_{d<=k} E|z(d)|^2
  std::vector<double> J2_std_err;
  // r_K(k); NaN where the accumulated disturbance energy is zero.
  std::vector<double> ratio;
  // Fraction of path-steps spent in each grid component.
  std::vector<double> component_occupancy;
  int overflow_paths = 0;  // paths stopped by the |x| > 1e12 guard
  bool overflow() const { return overflow_paths > 0; }
};

inline constexpr double kOverflowGuard = 1e12;

// Cell index path theta(0..horizon) for stream `path` of `seed`.
std::vector<int> SampleChain(const KernelDensity& kernel, const InitialDensity& nu0, int horizon,
                             std::uint64_t seed, std::uint64_t path = 0);

TrajectoryStats RunPaths(const SimPlan& plan);

// v(k) = e^{-2k} in every disturbance channel, x0 = 0, u = K2 x.
TrajectoryStats HinfRatioRun(const SystemModel& system, const MatrixField& K2, int horizon,
                             int n_paths, std::uint64_t seed);

struct J2Comparison {
  std::vector<double> j2_a;
  std::vector<double> j2_b;
  std::vector<double> difference;  // j2_a - j2_b
  std::vector<double> difference_std_err;
};

// Common random numbers: both plans see the same mode paths. Throws
// ConfigError when horizons, path counts or seeds differ.
J2Comparison CompareJ2(const SimPlan& plan_a, const SimPlan& plan_b);

// Worker count from MJLS_THREADS, the hardware and the amount of work.
int WorkerCount(int work_items);

}  // namespace mjls
