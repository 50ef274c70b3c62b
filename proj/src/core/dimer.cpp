#include "core/dimer.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace ddtau {

namespace {

int vertex_neighbors(const LatticeDomain& d, int id, int out[4]) {
  int x = d.vx(id), y = d.vy(id);
  int k = 0;
  if (x + 1 < d.cols()) out[k++] = d.vid(x + 1, y);
  if (x - 1 >= 0) out[k++] = d.vid(x - 1, y);
  if (y + 1 < d.rows()) out[k++] = d.vid(x, y + 1);
  if (y - 1 >= 0) out[k++] = d.vid(x, y - 1);
  return k;
}

void enumerate_rec(const LatticeDomain& d, std::vector<int>& black_of_white,
                   std::vector<char>& black_used, size_t wi,
                   std::vector<Matching>& out) {
  if (wi == d.whites.size()) {
    out.push_back(Matching{black_of_white});
    return;
  }
  int w = d.whites[wi];
  int nbr[4];
  int k = vertex_neighbors(d, w, nbr);
  for (int i = 0; i < k; ++i) {
    int bi = d.black_index[nbr[i]];
    if (black_used[bi]) continue;
    black_used[bi] = 1;
    black_of_white[wi] = bi;
    enumerate_rec(d, black_of_white, black_used, wi + 1, out);
    black_used[bi] = 0;
  }
}

}  // namespace

std::vector<Matching> enumerate_matchings(const LatticeDomain& d) {
  if (d.vertex_count() > kEnumerationVertexGuard)
    throw guard_error("enumerate_matchings: domain exceeds the vertex guard");
  std::vector<Matching> out;
  std::vector<int> bw(d.whites.size(), -1);
  std::vector<char> used(d.blacks.size(), 0);
  enumerate_rec(d, bw, used, 0, out);
  return out;
}

MatchingSampler::MatchingSampler(const KasteleynFactor& factor)
    : factor_(&factor), dom_(&factor.domain()), size_(factor.size()) {
  require(factor.dense_inverse_available(),
          "sampler: domain too large for exact sampling");
  buf_.resize(size_, size_);
  black_at_row_.resize(size_);
  row_of_black_.resize(size_);
  white_at_col_.resize(size_);
  col_of_white_.resize(size_);
}

void MatchingSampler::refresh(int active) {
  Eigen::MatrixXd sub(active, active);
  for (int c = 0; c < active; ++c) {
    int w = dom_->whites[white_at_col_[c]];
    for (int r = 0; r < active; ++r) {
      int b = dom_->blacks[black_at_row_[r]];
      int e = dom_->edge_between(w, b);
      sub(c, r) = e < 0 ? 0.0 : dom_->edge(e).sign;  // rows whites, cols blacks
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sub);
  buf_.topLeftCorner(active, active) = lu.inverse();
}

Matching MatchingSampler::sample(Rng& rng) {
  const auto& d = *dom_;
  buf_ = factor_->dense_inverse();
  for (int i = 0; i < size_; ++i) {
    black_at_row_[i] = i;
    row_of_black_[i] = i;
    white_at_col_[i] = i;
    col_of_white_[i] = i;
  }

  Matching m;
  m.black_of_white.assign(size_, -1);
  int active = size_;
  for (int wi = 0; wi < size_; ++wi) {
    int w = d.whites[wi];
    int col = col_of_white_[wi];
    int nbr[4];
    int k = vertex_neighbors(d, w, nbr);

    double p[4];
    int cand[4];
    int nc = 0;
    bool refreshed = false;
    while (true) {
      nc = 0;
      double sum = 0.0;
      for (int i = 0; i < k; ++i) {
        int bi = d.black_index[nbr[i]];
        if (row_of_black_[bi] >= active) continue;  // already matched
        int e = d.edge_between(w, nbr[i]);
        double val =
            std::abs(d.edge(e).sign * buf_(row_of_black_[bi], col));
        cand[nc] = bi;
        p[nc] = val;
        ++nc;
        sum += val;
      }
      if (std::abs(sum - 1.0) <= 1e-6) break;
      if (refreshed) {
        if (sum <= 1e-12)
          throw singular_error("sampler: dead end (conditional mass vanished)");
        break;  // accept the normalized draw after an honest refresh
      }
      refresh(active);
      refreshed = true;
    }

    double sum = 0.0;
    for (int i = 0; i < nc; ++i) sum += p[i];
    if (sum <= 0.0)
      throw singular_error("sampler: dead end (no available partner)");
    double u = rng.uniform() * sum;
    int pick = nc - 1;
    double acc = 0.0;
    for (int i = 0; i < nc; ++i) {
      acc += p[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    int bi = cand[pick];
    m.black_of_white[wi] = bi;

    // remove row(b)/col(w) from the running inverse
    int row = row_of_black_[bi];
    double pivot = buf_(row, col);
    if (pivot == 0.0)
      throw singular_error("sampler: zero pivot (inconsistent draw)");
    auto block = buf_.topLeftCorner(active, active);
    Eigen::VectorXd u_col = block.col(col);
    Eigen::RowVectorXd v_row = block.row(row);
    block.noalias() -= (u_col / pivot) * v_row;

    int last = active - 1;
    if (row != last) {
      buf_.row(row).head(active) = buf_.row(last).head(active);
      int moved = black_at_row_[last];
      black_at_row_[row] = moved;
      row_of_black_[moved] = row;
    }
    black_at_row_[last] = bi;
    row_of_black_[bi] = last;
    if (col != last) {
      buf_.col(col).head(active) = buf_.col(last).head(active);
      int moved = white_at_col_[last];
      white_at_col_[col] = moved;
      col_of_white_[moved] = col;
    }
    white_at_col_[last] = wi;
    col_of_white_[wi] = last;
    --active;
  }
  return m;
}

Matching sample_matching(const KasteleynFactor& factor, uint64_t seed) {
  MatchingSampler s(factor);
  Rng rng(seed);
  return s.sample(rng);
}

std::vector<int> canonical_cycle(std::vector<int> cycle) {
  auto it = std::min_element(cycle.begin(), cycle.end());
  std::rotate(cycle.begin(), it, cycle.end());
  if (cycle.size() > 2 && cycle[1] > cycle.back())
    std::reverse(cycle.begin() + 1, cycle.end());
  return cycle;
}

LoopEnsemble superpose(const LatticeDomain& d, const Matching& m1,
                       const Matching& m2) {
  const size_t W = d.whites.size();
  require(m1.black_of_white.size() == W && m2.black_of_white.size() == W,
          "superpose: matchings come from different domains");
  std::vector<int> white_of_black2(d.blacks.size(), -1);
  for (size_t wi = 0; wi < W; ++wi) white_of_black2[m2.black_of_white[wi]] = wi;

  LoopEnsemble out;
  std::vector<char> seen(W, 0);
  for (size_t w0 = 0; w0 < W; ++w0) {
    if (seen[w0]) continue;
    if (m1.black_of_white[w0] == m2.black_of_white[w0]) {
      seen[w0] = 1;
      int e = d.edge_between(d.whites[w0], d.blacks[m1.black_of_white[w0]]);
      out.doubled_edges.push_back(e);
      continue;
    }
    std::vector<int> cycle;
    size_t w = w0;
    do {
      seen[w] = 1;
      cycle.push_back(d.whites[w]);
      int b = m1.black_of_white[w];
      cycle.push_back(d.blacks[b]);
      w = white_of_black2[b];
    } while (w != w0);
    out.loops.push_back(canonical_cycle(std::move(cycle)));
  }
  return out;
}

TwistLookup::TwistLookup(const LatticeDomain& dom, const Representation& r)
    : rep(&r) {
  (void)dom;
  for (size_t c = 0; c < r.cuts.size(); ++c)
    for (const auto& cr : r.cuts[c].crossings)
      by_edge.emplace(cr.edge, std::make_pair(static_cast<int>(c),
                                              cr.black_left));
}

double holonomy_trace(const LatticeDomain& d, const TwistLookup& tw,
                      const std::vector<int>& loop) {
  std::vector<int> cyc = canonical_cycle(loop);
  Mat2 P = Mat2::Identity();
  const size_t L = cyc.size();
  for (size_t i = 0; i < L; ++i) {
    int u = cyc[i], v = cyc[(i + 1) % L];
    int e = d.edge_between(u, v);
    auto it = tw.by_edge.find(e);
    if (it == tw.by_edge.end()) continue;
    const Mat2& N = tw.rep->nilpotents[it->second.first];
    bool black_left = it->second.second;
    bool into_black = d.is_black(v);
    // white->black transport is (Id+N) when the black endpoint is on the left
    // of the cut; every other case is the matching inverse. Factors compose by
    // right multiplication (sections carry a right action), which is the
    // order the twisted determinant expands in.
    double s = (into_black == black_left) ? 1.0 : -1.0;
    P = P * (Mat2::Identity() + s * N);
  }
  return P.trace();
}

double loop_product(const LatticeDomain& d, const TwistLookup& tw,
                    const LoopEnsemble& ens) {
  double prod = 1.0;
  for (const auto& loop : ens.loops) prod *= 0.5 * holonomy_trace(d, tw, loop);
  return prod;
}

namespace {

template <typename Fn>
void run_tasks(long count, int threads, Fn&& per_task) {
  threads = std::max(1, threads);
  if (threads == 1 || count < 2 * threads) {
    for (long i = 0; i < count; ++i) per_task(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  long chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    long lo = t * chunk, hi = std::min(count, (t + 1) * chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi, t] {
      for (long i = lo; i < hi; ++i) per_task(i, t);
    });
  }
  for (auto& th : pool) th.join();
}

McResult summarize(const std::vector<double>& values) {
  McResult r;
  r.samples = static_cast<long>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= r.samples;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = r.samples > 1 ? var / (r.samples - 1) : 0.0;
  r.mean = mean;
  r.std_error = std::sqrt(var / r.samples);
  return r;
}

}  // namespace

McResult mc_correlator(const TwistedOperator& op, long samples, uint64_t seed,
                       int threads) {
  require(samples >= 2, "mc_correlator: need at least 2 samples");
  const auto& d = op.domain();
  const auto& factor = *op.factor();
  factor.dense_inverse();  // build the shared cache up front
  TwistLookup tw(d, op.rep());

  std::vector<double> values(samples);
  threads = std::max(1, threads);
  std::vector<std::unique_ptr<MatchingSampler>> samplers;
  for (int t = 0; t < threads; ++t)
    samplers.push_back(std::make_unique<MatchingSampler>(factor));

  run_tasks(samples, threads, [&](long i, int t) {
    Rng rng = Rng::for_task(seed, static_cast<uint64_t>(i));
    Matching m1 = samplers[t]->sample(rng);
    Matching m2 = samplers[t]->sample(rng);
    values[i] = loop_product(d, tw, superpose(d, m1, m2));
  });
  McResult res = summarize(values);
  res.values = std::move(values);
  return res;
}

double oracle_correlator(const LatticeDomain& d, const Representation& rep) {
  auto all = enumerate_matchings(d);
  require(!all.empty(), "oracle_correlator: no matchings");
  TwistLookup tw(d, rep);
  double acc = 0.0;
  for (const auto& m1 : all)
    for (const auto& m2 : all) acc += loop_product(d, tw, superpose(d, m1, m2));
  return acc / (static_cast<double>(all.size()) * all.size());
}

cplx oracle_correlator_rank1(const LatticeDomain& d, const Representation& rep,
                             const std::vector<cplx>& chis) {
  require(chis.size() == rep.cuts.size(), "rank1 oracle: one scalar per cut");
  auto all = enumerate_matchings(d);
  require(!all.empty(), "rank1 oracle: no matchings");
  TwistLookup tw(d, rep);
  cplx acc = 0.0;
  for (const auto& m : all) {
    cplx w = 1.0;
    for (size_t wi = 0; wi < m.black_of_white.size(); ++wi) {
      int e = d.edge_between(d.whites[wi], d.blacks[m.black_of_white[wi]]);
      auto it = tw.by_edge.find(e);
      if (it == tw.by_edge.end()) continue;
      cplx chi = chis[it->second.first];
      w *= it->second.second ? chi : 1.0 / chi;
    }
    acc += w;
  }
  return acc / static_cast<double>(all.size());
}

std::vector<TailPoint> loop_diameter_tail(const KasteleynFactor& factor,
                                          int marked_edge,
                                          const std::vector<double>& radii,
                                          long samples, uint64_t seed,
                                          int threads) {
  const auto& d = factor.domain();
  require(marked_edge >= 0 &&
              marked_edge < static_cast<int>(d.edges.size()),
          "loop_diameter_tail: marked edge not in domain");
  factor.dense_inverse();
  const auto& me = d.edge(marked_edge);
  int w = d.is_black(me.u) ? me.v : me.u;
  int b = d.is_black(me.u) ? me.u : me.v;
  int wi = d.white_index[w], bi = d.black_index[b];

  threads = std::max(1, threads);
  std::vector<std::unique_ptr<MatchingSampler>> samplers;
  for (int t = 0; t < threads; ++t)
    samplers.push_back(std::make_unique<MatchingSampler>(factor));

  // diameter of the loop through the marked edge, or -1 if the edge is not in
  // a loop for this sample
  std::vector<double> diam(samples, -1.0);
  run_tasks(samples, threads, [&](long i, int t) {
    Rng rng = Rng::for_task(seed, static_cast<uint64_t>(i));
    Matching m1 = samplers[t]->sample(rng);
    Matching m2 = samplers[t]->sample(rng);
    bool in1 = m1.black_of_white[wi] == bi;
    bool in2 = m2.black_of_white[wi] == bi;
    if (in1 == in2) return;  // absent or doubled
    auto ens = superpose(d, m1, m2);
    for (const auto& loop : ens.loops) {
      if (std::find(loop.begin(), loop.end(), w) == loop.end()) continue;
      int xmin = d.cols(), xmax = 0, ymin = d.rows(), ymax = 0;
      for (int id : loop) {
        xmin = std::min(xmin, d.vx(id));
        xmax = std::max(xmax, d.vx(id));
        ymin = std::min(ymin, d.vy(id));
        ymax = std::max(ymax, d.vy(id));
      }
      diam[i] = std::max(xmax - xmin, ymax - ymin);
      return;
    }
  });

  long n_pos = 0;
  for (double v : diam)
    if (v >= 0.0) ++n_pos;
  if (n_pos < 8)
    throw guard_error(
        "loop_diameter_tail: too few positive samples (marked edge rarely in "
        "a loop)");

  std::vector<TailPoint> out;
  for (double R : radii) {
    long hits = 0;
    for (double v : diam)
      if (v >= R) ++hits;
    TailPoint p;
    p.radius = R;
    p.n_pos = n_pos;
    p.p_hat = static_cast<double>(hits) / n_pos;
    p.std_error = std::sqrt(std::max(0.0, p.p_hat * (1.0 - p.p_hat)) / n_pos);
    out.push_back(p);
  }
  return out;
}

}  // namespace ddtau
