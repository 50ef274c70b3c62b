#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "core/schlesinger.hpp"

namespace ddtau {

struct SleOptions {
  double kappa = 4.0;
  double step = 1e-3;        // driver step h
  double horizon = 0.03;     // T
  double r_min = -1.0;       // <0: 0.05 * min Im lambda
  double window_margin = -1.0;  // <0: max(0.5*spread, 1.5*max Im lambda)
  int checkpoints = 16;      // Schlesinger re-solve grid
};

// Discretized chordal Loewner flow: the driver is piecewise constant on the
// step grid (refreshed at the start of each step), each puncture image is
// advanced by sub-stepped RK2 within the step.
struct SlePath {
  std::vector<double> times;
  std::vector<double> driver;
  std::vector<std::vector<cplx>> lambda;
  double stop_time = 0.0;
  bool hit_r_min = false;
  bool driver_escaped = false;
};

SlePath evolve(const std::vector<cplx>& lambdas, uint64_t seed,
               const SleOptions& opt);

struct MartingaleResult {
  Mat2c m_start = Mat2c::Zero();
  // per-entry statistics of Delta M = M_stop - M_0
  Eigen::Matrix2d mean_re, mean_im, se_re, se_im;
  long paths_requested = 0;
  long paths_used = 0;
  long discarded = 0;
  double discard_fraction = 0.0;
  double max_det_dev = 0.0;       // max |det M - tau^2|
  double max_trace_sq = 0.0;      // prefactor identity: max |Tr A_k^2|
  ConservationStats conservation;
  // path_id, stop_time, re/im of M entries at 0 and at the stop time
  std::vector<std::array<double, 18>> rows;
  // largest |mean|/max(se, floor) over the 8 real components
  double worst_sigma(double floor_abs = 1e-8) const;
};

// Statistical test of the local-martingale property of
// M_t = tau(Lambda_t) * Y0(Z_t; Lambda_t) driven by the flow above. Paths
// whose driver leaves the safe window (or whose re-solve fails a guard) are
// discarded and counted.
MartingaleResult martingale_statistic(const SchlesingerState& reference,
                                      long paths, uint64_t seed,
                                      const SleOptions& opt, int threads = 1);

}  // namespace ddtau
