#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/common.hpp"
#include "core/lattice.hpp"

namespace ddtau {

using Mat2c = Eigen::Matrix2cd;

struct SchlesingerOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  // collision guard between distinct punctures, relative to configuration size
  double d_min_factor = 1e-3;
  // step cap |dlambda| <= y_k/4 once y_k < boundary_cap_factor * eps0
  double boundary_cap_factor = 10.0;
};

struct ConservationStats {
  double max_trace = 0.0;        // max |Tr A_k|
  double max_trace_sq = 0.0;     // max |Tr A_k^2|
  double max_residue_sum = 0.0;  // max entry of |sum_k (A_k + conj A_k)|
  double max_im_dlogtau = 0.0;   // drift of Im(log tau)
  void merge(const ConservationStats& o) {
    max_trace = std::max(max_trace, o.max_trace);
    max_trace_sq = std::max(max_trace_sq, o.max_trace_sq);
    max_residue_sum = std::max(max_residue_sum, o.max_residue_sum);
    max_im_dlogtau = std::max(max_im_dlogtau, o.max_im_dlogtau);
  }
  double worst() const {
    return std::max({max_trace, max_trace_sq, max_residue_sum});
  }
};

// Punctures in the upper half-plane with their mirror images implicit: the
// residue at conj(lambda_k) is conj(A_k) throughout, so only the upper-half
// data is stored and integrated.
struct SchlesingerState {
  std::vector<cplx> lambda;   // n punctures, Im > 0
  std::vector<Mat2c> A;       // traceless nilpotent residues
  std::vector<Mat2> N;        // real generators, rho(gamma_k) = Id + N_k
  cplx log_tau = 0.0;         // normalized to 0 for boundary configurations
  double eps0 = 0.0;          // lift height used at initialization

  int count() const { return static_cast<int>(lambda.size()); }
  ConservationStats conservation() const;
  double diameter() const;  // over punctures and mirrors
};

// Boundary initialization: lambda_k = x_k + i*eps, A_k = (i/2pi) N_k,
// log tau = 0.
SchlesingerState init_boundary(const std::vector<double>& xs,
                               const std::vector<Mat2>& Ns, double eps);

// Piecewise-linear tracks for all punctures; knots[0] must match the state.
struct DeformPath {
  std::vector<std::vector<cplx>> knots;
};

SchlesingerState deform(const SchlesingerState& state, const DeformPath& path,
                        const SchlesingerOptions& opt = {},
                        ConservationStats* track = nullptr);

// Move puncture k along a polyline (first point = current position implied).
SchlesingerState deform_one(const SchlesingerState& state, int k,
                            const std::vector<cplx>& waypoints,
                            const SchlesingerOptions& opt = {},
                            ConservationStats* track = nullptr);

// init_boundary at the targets' real parts, then vertical lifts processed
// left to right. Targets must have distinct real parts (else supply paths).
SchlesingerState solve_to(std::vector<cplx> targets, std::vector<Mat2> Ns,
                          double eps, const SchlesingerOptions& opt = {},
                          ConservationStats* track = nullptr);

// Real part of the accumulator; throws if |Im log tau| > 1e-7.
double log_tau(const SchlesingerState& state);

// R_k = sum_{J != k} A_J / (lambda_J - lambda_k) over punctures and mirrors;
// Tr(A_k R_k) is both the Robin-kernel derivative of log tau and the
// variation-formula coefficient.
cplx variation_prediction(const SchlesingerState& state, int k);

// (finite difference of log tau under lambda_k displacement, Tr(A_k R_k))
std::pair<cplx, cplx> robin_check(const SchlesingerState& state, int k,
                                  double h = 1e-4,
                                  const SchlesingerOptions& opt = {});

struct ContourOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double d_min = -1.0;       // <0: 1e-3 * configuration diameter
  double base_point = -1.0;  // <=0: max(100 * diameter, 10)
  double* det_error = nullptr;  // out: max |det Y - 1| at segment ends
};

// Base point for contours: R0 = max(100 * diameter, 10) on the positive axis.
double contour_base_point(const SchlesingerState& state);

// Transport of the fundamental solution along a polyline starting at a real
// base point R0 >= 100 * diameter, with Y(R0) = Id - B/R0, B = sum A_I lam_I.
Mat2c fundamental_solution(const SchlesingerState& state,
                           const std::vector<cplx>& contour,
                           const ContourOptions& opt = {});

// Monodromy around puncture k: transport along R0 -> rectangle around
// lambda_k (counterclockwise) -> R0; returns Y_end^{-1} Y_start. Expected
// Id + N_k up to conjugation by the access transport.
Mat2c monodromy(const SchlesingerState& state, int k,
                const ContourOptions& opt = {});

// Same-representation state at homography images (a z + b)/(c z + d),
// ad - bc > 0; log tau is expected to be unchanged.
SchlesingerState mobius_image(const SchlesingerState& state, double a, double b,
                              double c, double d,
                              const SchlesingerOptions& opt = {},
                              ConservationStats* track = nullptr);

std::string state_to_json(const SchlesingerState& state);

}  // namespace ddtau
