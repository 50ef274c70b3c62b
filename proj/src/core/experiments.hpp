#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/dimer.hpp"
#include "core/kasteleyn.hpp"
#include "core/report.hpp"
#include "core/schlesinger.hpp"
#include "core/sle.hpp"

namespace ddtau {

struct ExperimentConfig {
  std::string experiment;
  std::vector<cplx> punctures;       // continuum, upper half-plane
  std::vector<Mat2> nilpotents;
  std::vector<double> deltas;        // strictly decreasing mesh list
  double box_multiplier = 8.0;
  bool box_doubling = true;
  long samples = 10000;
  uint64_t seed = 20260808ULL;
  int threads = 1;
  double eps = 1e-3;
  double rtol = 1e-10;

  std::vector<double> heights;       // boundary sweep puncture heights
  std::vector<double> separations;   // pinch cluster separations
  int cluster_size = 1;              // pinch: first k punctures form cluster A

  std::vector<double> radii;         // tail radii
  int grid_cols = 0, grid_rows = 0;  // explicit grid (mc, tail)
  std::vector<std::pair<int, int>> faces;  // explicit puncture faces

  long paths = 2000;                 // sle
  double sle_step = 1e-3;
  double sle_horizon = 0.03;
  double sle_rmin = -1.0;

  int cases = 20;                    // oracle suite
  std::string out_dir = "out";
  std::string format = "csv";        // csv | json | svg (csv always written)
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& c);

struct RunResult {
  std::string name;
  Table table;
  nlohmann::json summary;
  bool pass = true;
  std::vector<Series> plot;      // optional
  std::string plot_x, plot_y;
  bool plot_log_x = false, plot_log_y = false;
};

// Snapped placement of continuum punctures on a mesh-delta box chosen by the
// side policy (side = multiplier * max(|lambda|, pairwise gaps), centered on
// the punctures' real span).
struct BoxSpec {
  int m = 0, n = 0;
  double delta = 0.0;
  double x_offset = 0.0;
  std::vector<std::pair<int, int>> faces;
  std::vector<cplx> snapped;  // continuum positions of the chosen face centers
  double max_snap = 0.0;
};
BoxSpec plan_box(const std::vector<cplx>& punctures, double delta,
                 double multiplier);

struct BoxRun {
  BoxSpec box;
  double det_ratio = 0.0;
  double log_det_K = 0.0;  // log |det K| of the scalar Kasteleyn matrix
  DetRatioInfo info;
};
BoxRun det_ratio_on_box(const std::vector<cplx>& punctures,
                        const std::vector<Mat2>& Ns, double delta,
                        double multiplier, bool want_log_det = true);

RunResult run_oracle_suite(const ExperimentConfig& c);
RunResult run_convergence(const ExperimentConfig& c);
RunResult run_variation_check(const ExperimentConfig& c);
RunResult run_boundary_sweep(const ExperimentConfig& c);
RunResult run_pinch(const ExperimentConfig& c);
RunResult run_tau(const ExperimentConfig& c);
RunResult run_mc(const ExperimentConfig& c);
RunResult run_tail(const ExperimentConfig& c);
RunResult run_sle_drift(const ExperimentConfig& c);

RunResult run_experiment(const ExperimentConfig& c);

// CSV always; JSON summary and SVG plot per config.format.
void emit_report(const RunResult& r, const ExperimentConfig& c);

}  // namespace ddtau
