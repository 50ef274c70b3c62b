#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "core/dimer.hpp"

using namespace ddtau;

namespace {

Mat2 upper(double s) {
  Mat2 N;
  N << 0, s, 0, 0;
  return N;
}
Mat2 lower(double s) {
  Mat2 N;
  N << 0, 0, s, 0;
  return N;
}

}  // namespace

TEST_CASE("enumeration basics") {
  CHECK(enumerate_matchings(build_domain(1, 1, 1.0)).size() == 2);
  CHECK(enumerate_matchings(build_domain(2, 2, 1.0)).size() == 36);
  LatticeDomain d46 = build_domain(2, 3, 1.0);
  CHECK(enumerate_matchings(d46).size() ==
        static_cast<size_t>(count_matchings(d46)));
  CHECK_THROWS_AS(enumerate_matchings(build_domain(4, 4, 1.0)), guard_error);
}

TEST_CASE("sampler determinism and support") {
  LatticeDomain d = build_domain(1, 1, 1.0);
  auto factor = factorize(d);
  Matching a = sample_matching(*factor, 42);
  Matching b = sample_matching(*factor, 42);
  CHECK(a == b);
  // the 2x2 grid has exactly two matchings; both appear
  std::set<std::vector<int>> seen;
  for (uint64_t s = 0; s < 20; ++s)
    seen.insert(sample_matching(*factor, s).black_of_white);
  CHECK(seen.size() == 2);
}

TEST_CASE("sampler uniformity on the 4x4 grid") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);
  auto all = enumerate_matchings(d);
  REQUIRE(all.size() == 36);
  std::map<std::vector<int>, int> index;
  for (size_t i = 0; i < all.size(); ++i) index[all[i].black_of_white] = i;

  MatchingSampler sampler(*factor);
  const long S = 36000;
  std::vector<long> counts(36, 0);
  for (long i = 0; i < S; ++i) {
    Rng rng = Rng::for_task(987654321ULL, i);
    Matching m = sampler.sample(rng);
    auto it = index.find(m.black_of_white);
    REQUIRE(it != index.end());
    counts[it->second]++;
  }
  double expected = static_cast<double>(S) / 36.0;
  double chi2 = 0.0;
  for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-square with 35 dof: mean 35, sd sqrt(70); 4 sigma gate
  CHECK(chi2 < 35.0 + 4.0 * std::sqrt(70.0));
}

TEST_CASE("edge probabilities partition the event at each white vertex") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);
  for (int wi = 0; wi < factor->size(); ++wi) {
    int w = d.whites[wi];
    double sum = 0.0;
    int x = d.vx(w), y = d.vy(w);
    const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (auto& dir : dirs) {
      int nx = x + dir[0], ny = y + dir[1];
      if (nx < 0 || nx >= d.cols() || ny < 0 || ny >= d.rows()) continue;
      sum += edge_probability(*factor, d.edge_between(w, d.vid(nx, ny)));
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("edge probability matches enumeration frequency") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);
  auto all = enumerate_matchings(d);
  int e = d.edge_between(d.vid(0, 0), d.vid(1, 0));  // corner edge
  const auto& ed = d.edge(e);
  int w = d.is_black(ed.u) ? ed.v : ed.u;
  int b = d.is_black(ed.u) ? ed.u : ed.v;
  long with_edge = 0;
  for (const auto& m : all)
    if (m.black_of_white[d.white_index[w]] == d.black_index[b]) ++with_edge;
  CHECK(edge_probability(*factor, e) ==
        doctest::Approx(with_edge / 36.0).epsilon(1e-10));
}

TEST_CASE("superposition structure") {
  LatticeDomain d = build_domain(1, 1, 1.0);
  auto all = enumerate_matchings(d);
  REQUIRE(all.size() == 2);

  SUBCASE("equal matchings give only doubled edges") {
    LoopEnsemble e = superpose(d, all[0], all[0]);
    CHECK(e.loops.empty());
    CHECK(e.doubled_edges.size() == 2);
  }

  SUBCASE("horizontal + vertical matchings give one 4-cycle") {
    LoopEnsemble e = superpose(d, all[0], all[1]);
    REQUIRE(e.loops.size() == 1);
    CHECK(e.loops[0].size() == 4);
    CHECK(e.doubled_edges.empty());
  }
}

TEST_CASE("superposition partitions the vertex set (random 8x8 pairs)") {
  LatticeDomain d = build_domain(4, 4, 1.0);
  auto factor = factorize(d);
  MatchingSampler sampler(*factor);
  for (uint64_t s = 0; s < 8; ++s) {
    Rng rng = Rng::for_task(5150, s);
    Matching m1 = sampler.sample(rng);
    Matching m2 = sampler.sample(rng);
    LoopEnsemble e = superpose(d, m1, m2);
    std::vector<int> hits(d.vertex_count(), 0);
    for (const auto& loop : e.loops) {
      CHECK(loop.size() >= 4);
      CHECK(loop.size() % 2 == 0);
      for (int v : loop) hits[v]++;
    }
    for (int ei : e.doubled_edges) {
      hits[d.edge(ei).u]++;
      hits[d.edge(ei).v]++;
    }
    for (int v = 0; v < d.vertex_count(); ++v) CHECK(hits[v] == 1);
  }
}

TEST_CASE("holonomy traces") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  Representation rep =
      make_representation(d, {build_cut(d, 1, 1)}, {upper(0.7)});
  TwistLookup tw(d, rep);

  SUBCASE("loop avoiding every cut has trace 2") {
    std::vector<int> loop = {d.vid(2, 2), d.vid(3, 2), d.vid(3, 3),
                             d.vid(2, 3)};
    CHECK(holonomy_trace(d, tw, loop) == 2.0);
  }

  SUBCASE("crossing one cut twice in opposite directions gives trace 2") {
    // 4-cycle around the face directly below the puncture face crosses the
    // vertical cut segment twice
    std::vector<int> loop = {d.vid(1, 0), d.vid(2, 0), d.vid(2, 1),
                             d.vid(1, 1)};
    CHECK(holonomy_trace(d, tw, loop) == doctest::Approx(2.0).epsilon(1e-15));
  }

  SUBCASE("winding once around the puncture gives trace 2 (unipotent)") {
    std::vector<int> loop = {d.vid(1, 1), d.vid(2, 1), d.vid(2, 2),
                             d.vid(1, 2)};
    CHECK(holonomy_trace(d, tw, loop) == doctest::Approx(2.0).epsilon(1e-15));
  }

  SUBCASE("rotation and reversal invariance is exact") {
    std::vector<int> loop = {d.vid(1, 1), d.vid(2, 1), d.vid(2, 2),
                             d.vid(1, 2)};
    std::vector<int> rotated = {loop[2], loop[3], loop[0], loop[1]};
    std::vector<int> reversed(loop.rbegin(), loop.rend());
    double t = holonomy_trace(d, tw, loop);
    CHECK(holonomy_trace(d, tw, rotated) == t);
    CHECK(holonomy_trace(d, tw, reversed) == t);
  }
}

TEST_CASE("mc correlator exactness for trivial and single-puncture reps") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);

  SUBCASE("trivial rep: mean exactly 1, zero variance") {
    Representation rep =
        make_representation(d, {build_cut(d, 1, 1)}, {Mat2::Zero()});
    McResult r = mc_correlator(assemble(d, rep, factor), 50, 1, 1);
    CHECK(r.mean == 1.0);
    CHECK(r.std_error == 0.0);
  }

  SUBCASE("single puncture: every term is 1 by unipotency") {
    Representation rep =
        make_representation(d, {build_cut(d, 1, 1)}, {upper(0.5)});
    McResult r = mc_correlator(assemble(d, rep, factor), 50, 1, 1);
    CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(r.std_error <= 1e-13);
  }
}

TEST_CASE("mc correlator approaches the determinant") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);
  Representation rep = make_representation(
      d, {build_cut(d, 0, 1), build_cut(d, 2, 2)}, {upper(0.4), lower(0.4)});
  TwistedOperator op = assemble(d, rep, factor);
  double det = op.det_ratio();
  McResult r = mc_correlator(op, 4000, 777, 1);
  CHECK(std::abs(r.mean - det) <= 3.0 * r.std_error);
  CHECK(r.std_error > 0.0);
}

TEST_CASE("mc correlator is deterministic and thread-count independent") {
  LatticeDomain d = build_domain(2, 2, 1.0);
  auto factor = factorize(d);
  Representation rep = make_representation(
      d, {build_cut(d, 0, 1), build_cut(d, 2, 2)}, {upper(0.4), lower(0.4)});
  TwistedOperator op = assemble(d, rep, factor);
  McResult one = mc_correlator(op, 600, 31337, 1);
  McResult two = mc_correlator(op, 600, 31337, 3);
  CHECK(one.mean == two.mean);
  CHECK(one.std_error == two.std_error);
}

TEST_CASE("oracle correlator special values") {
  LatticeDomain d = build_domain(1, 1, 1.0);
  SUBCASE("trivial rep") {
    Representation rep =
        make_representation(d, {build_cut(d, 0, 0)}, {Mat2::Zero()});
    CHECK(oracle_correlator(d, rep) == 1.0);
  }
  SUBCASE("single central puncture, any N") {
    for (double s : {0.2, 0.9}) {
      Representation rep =
          make_representation(d, {build_cut(d, 0, 0)}, {upper(s)});
      CHECK(oracle_correlator(d, rep) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("loop diameter tail") {
  LatticeDomain d = build_domain(8, 8, 1.0);  // 16x16
  auto factor = factorize(d);
  int edge = d.edge_between(d.vid(7, 0), d.vid(8, 0));
  auto tail = loop_diameter_tail(*factor, edge, {2, 4, 8, 100}, 600, 99, 1);
  REQUIRE(tail.size() == 4);
  // weakly decreasing in R, and zero beyond the domain diameter
  for (size_t i = 0; i + 1 < tail.size(); ++i)
    CHECK(tail[i].p_hat >= tail[i + 1].p_hat);
  CHECK(tail.back().p_hat == 0.0);
  CHECK(tail[0].n_pos > 0);
  CHECK_THROWS_AS(
      loop_diameter_tail(*factor, edge, {2}, 4, 99, 1), guard_error);
}
