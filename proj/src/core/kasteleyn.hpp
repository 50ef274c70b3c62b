#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "core/lattice.hpp"

namespace ddtau {

// Factorization handle for the scalar Kasteleyn matrix K (whites x blacks,
// entries +-1). Solves go through the normal equations K^T K with CHOLMOD,
// followed by iterative refinement on the original system; |det K| is
// accumulated in log magnitude. Immutable after construction; solves are
// serialized internally so the handle can be shared across threads.
class KasteleynFactor {
 public:
  explicit KasteleynFactor(const LatticeDomain& dom);
  ~KasteleynFactor();
  KasteleynFactor(const KasteleynFactor&) = delete;
  KasteleynFactor& operator=(const KasteleynFactor&) = delete;

  int size() const { return size_; }
  const LatticeDomain& domain() const { return *dom_; }

  // log |det K|; throws singular_error if K is singular.
  double log_abs_det() const;

  // x over blacks with K x = e_{white w}.
  Eigen::VectorXd solve_white_unit(int white_idx) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs_whites) const;

  double kentry(int white_idx, int black_idx) const;

  // Dense K^{-1} (blacks x whites), cached; only for domains small enough for
  // the exact sampler (vertex count <= 2 * kDenseLimit).
  static constexpr int kDenseLimit = 2048;
  const Eigen::MatrixXd& dense_inverse() const;
  bool dense_inverse_available() const { return size_ <= kDenseLimit; }

 private:
  struct Cholmod;
  const LatticeDomain* dom_;
  int size_;
  Eigen::SparseMatrix<double> K_;   // whites x blacks
  Eigen::SparseMatrix<double> Kt_;  // blacks x whites
  std::unique_ptr<Cholmod> ch_;
  mutable std::mutex mu_;
  mutable std::optional<double> log_abs_det_;
  mutable std::optional<Eigen::MatrixXd> dense_inv_;
};

std::shared_ptr<KasteleynFactor> factorize(const LatticeDomain& dom);

// |det K| rounded to the nearest integer. Throws overflow_error once the
// count leaves the exactly-representable range, singular_error if there are
// no matchings.
double count_matchings(const LatticeDomain& dom);
double count_matchings(const KasteleynFactor& factor);

// P(edge is a dimer) = |K(w,b) K^{-1}(b,w)|.
double edge_probability(const KasteleynFactor& factor, int edge_index);

struct DetRatioInfo {
  double cond_estimate = 0.0;   // 1-norm condition estimate of the block
  bool ill_conditioned = false; // cond > 1e12
  int twisted_edges = 0;
  double log_det_K = 0.0;       // filled only when requested
};

// Scalar Kasteleyn matrix + rank-2 jump blocks on cut-crossing edges.
class TwistedOperator {
 public:
  TwistedOperator(const LatticeDomain& dom, Representation rep,
                  std::shared_ptr<KasteleynFactor> factor);

  struct Twist {
    int edge = 0;
    int cut = 0;
    bool black_left = false;
  };

  const LatticeDomain& domain() const { return *dom_; }
  const Representation& rep() const { return rep_; }
  const std::vector<Twist>& twists() const { return twists_; }
  const std::shared_ptr<KasteleynFactor>& factor() const { return factor_; }

  // Jump block attached to a crossing when moving white -> black over the
  // crossed edge: (Id + N)^{+1} if the black endpoint is on the left of the
  // cut, (Id + N)^{-1} = Id - N otherwise.
  Mat2 jump_white_to_black(const Twist& t) const;

  // det(K_rho) / det(K (+) K) by finite-block reduction over the twisted
  // edges (real for real generators).
  double det_ratio(DetRatioInfo* info = nullptr) const;

  // Rank-1 specialization: per-cut unit-modulus scalars instead of SL2 jumps.
  cplx det_ratio_rank1(const std::vector<cplx>& chis,
                       DetRatioInfo* info = nullptr) const;

  // K^{-1}(b, w) for explicit (black vertex id, white vertex id) pairs.
  std::vector<double> inverse_entries(
      const std::vector<std::pair<int, int>>& black_white_vertex_pairs) const;

 private:
  const LatticeDomain* dom_;
  Representation rep_;
  std::shared_ptr<KasteleynFactor> factor_;
  std::vector<Twist> twists_;

  // K^{-1}(b_e', w_e) for all twisted pairs; rows/cols indexed by twist order.
  Eigen::MatrixXd cross_inverse() const;
};

TwistedOperator assemble(const LatticeDomain& dom, Representation rep,
                         std::shared_ptr<KasteleynFactor> factor = nullptr);

// 1-norm condition estimate of a dense LU-factored matrix (Hager/Higham).
double cond1_estimate(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu,
                      double norm1);
double cond1_estimate(const Eigen::PartialPivLU<Eigen::MatrixXcd>& lu,
                      double norm1);

}  // namespace ddtau
