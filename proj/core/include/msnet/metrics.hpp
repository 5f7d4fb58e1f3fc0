#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "msnet/lattice.hpp"
#include "msnet/simcore.hpp"
#include "msnet/vec3.hpp"

namespace msnet {

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins);

struct ParamRecoveryReport {
  double rmse_k = 0.0;
  double rmse_b = 0.0;

  struct ClassStat {
    std::size_t count = 0;
    double rmse_k = 0.0;
    double rmse_b = 0.0;
  };
  std::array<ClassStat, 3> per_class{};  // indexed by SpringClass

  Histogram hist_k, hist_b;  // estimated-value distributions
};

/// RMSE between estimated and ground-truth per-spring parameters; requires
/// matching topology (same S and spring ordering).
ParamRecoveryReport rmse_params(const MaterialParams& estimated, const MaterialParams& truth,
                                const SpringNetwork& net);

struct MotionReport {
  std::vector<double> per_frame;  // one RMSE value per frame
  double mean = 0.0;
  double stddev = 0.0;
  bool per_coordinate = false;
};

/// Per-frame RMSE between predicted and target particle positions. The
/// default squares the 3-vector differences (squared Euclidean norms summed
/// over particles, divided by P); per_coordinate additionally divides by 3.
MotionReport motion_rmse(const Trajectory3& predicted, const Trajectory3& target,
                         bool per_coordinate = false);

/// Pools per-frame values across rollouts into one mean/stddev summary.
MotionReport pool_motion_reports(std::span<const MotionReport> reports);

/// CSV export: one row per frame (rollout id, frame, rmse) followed by one
/// summary row per rollout and a pooled summary.
void write_motion_csv(std::ostream& os, std::span<const MotionReport> reports,
                      std::span<const std::string> rollout_ids);

/// CSV export of histogram bins (Fig-style parameter distributions).
void write_histogram_csv(std::ostream& os, const Histogram& hist, const std::string& label);

}  // namespace msnet
