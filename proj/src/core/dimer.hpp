#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "core/kasteleyn.hpp"
#include "core/lattice.hpp"
#include "core/rng.hpp"

namespace ddtau {

// Perfect matching stored as white index -> black index.
struct Matching {
  std::vector<int> black_of_white;
  bool operator==(const Matching& o) const {
    return black_of_white == o.black_of_white;
  }
};

// Superposition of two matchings: disjoint even cycles plus doubled edges,
// together covering every vertex exactly once.
struct LoopEnsemble {
  std::vector<std::vector<int>> loops;  // canonicalized vertex cycles
  std::vector<int> doubled_edges;       // edge indices
};

// Exhaustive recursion; guarded to tiny domains.
std::vector<Matching> enumerate_matchings(const LatticeDomain& dom);
constexpr int kEnumerationVertexGuard = 36;

// Exact uniform sampler: processes white vertices in index order, drawing the
// partner of each from the conditional edge probabilities
// |K~(w,b) K~^{-1}(b,w)| of the submatrix on unmatched vertices. The running
// inverse is maintained by rank-1 updates with a sum-to-one drift monitor and
// a from-scratch refresh fallback.
class MatchingSampler {
 public:
  explicit MatchingSampler(const KasteleynFactor& factor);
  Matching sample(Rng& rng);

 private:
  const KasteleynFactor* factor_;
  const LatticeDomain* dom_;
  int size_;
  Eigen::MatrixXd buf_;
  std::vector<int> black_at_row_, row_of_black_;
  std::vector<int> white_at_col_, col_of_white_;
  void refresh(int active);
};

Matching sample_matching(const KasteleynFactor& factor, uint64_t seed);

LoopEnsemble superpose(const LatticeDomain& dom, const Matching& m1,
                       const Matching& m2);

// rotate/reflect a cycle to its canonical representative (min vertex first,
// then the smaller neighbor)
std::vector<int> canonical_cycle(std::vector<int> cycle);

// Per-edge jump data derived from a representation's cuts.
struct TwistLookup {
  TwistLookup(const LatticeDomain& dom, const Representation& rep);
  const Representation* rep;
  std::unordered_map<int, std::pair<int, bool>> by_edge;  // edge -> (cut, black_left)
};

// Trace of the ordered product of jump matrices along one traversal of the
// loop; independent of base point and orientation (the loop is canonicalized
// first, so equal cycles give bit-identical results).
double holonomy_trace(const LatticeDomain& dom, const TwistLookup& tw,
                      const std::vector<int>& loop);

// prod over loops of Tr(holonomy)/2; doubled edges contribute 1
double loop_product(const LatticeDomain& dom, const TwistLookup& tw,
                    const LoopEnsemble& ensemble);

struct McResult {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
  std::vector<double> values;  // per-pair products, in sample order
};

// Empirical mean of prod Tr(rho(loop))/2 over independent matching pairs.
McResult mc_correlator(const TwistedOperator& op, long samples, uint64_t seed,
                       int threads = 1);

// (1/Z^2) sum over all matching pairs of prod Tr(rho(loop))/2.
double oracle_correlator(const LatticeDomain& dom, const Representation& rep);

// Rank-1 oracle: (1/Z) sum over matchings of prod chi_i^{+-1} over
// cut-crossing dimers.
cplx oracle_correlator_rank1(const LatticeDomain& dom,
                             const Representation& rep,
                             const std::vector<cplx>& chis);

struct TailPoint {
  double radius = 0.0;
  double p_hat = 0.0;
  double std_error = 0.0;
  long n_pos = 0;
};

// Conditional tail P(diam(loop through marked edge) >= R | edge in a loop),
// diameter in lattice units (L-infinity over the loop's vertices).
std::vector<TailPoint> loop_diameter_tail(const KasteleynFactor& factor,
                                          int marked_edge,
                                          const std::vector<double>& radii,
                                          long samples, uint64_t seed,
                                          int threads = 1);

}  // namespace ddtau
