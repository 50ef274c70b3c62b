#include <doctest.h>

#include <cmath>

#include "core/sle.hpp"

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

TEST_CASE("evolve is deterministic given the seed") {
  SleOptions opt;
  opt.step = 5e-4;
  opt.horizon = 0.02;
  std::vector<cplx> lam{cplx(-1.0, 1.0), cplx(1.0, 1.0)};
  SlePath a = evolve(lam, 17, opt);
  SlePath b = evolve(lam, 17, opt);
  REQUIRE(a.times.size() == b.times.size());
  for (size_t i = 0; i < a.times.size(); ++i) {
    CHECK(a.driver[i] == b.driver[i]);
    CHECK(a.lambda[i] == b.lambda[i]);
  }
}

TEST_CASE("zero-kappa flow is the deterministic hull flow") {
  SleOptions opt;
  opt.kappa = 0.0;  // driver frozen at the seed
  opt.step = 1e-3;
  opt.horizon = 0.05;
  std::vector<cplx> lam{cplx(0.5, 1.2)};
  SlePath p = evolve(lam, 5, opt);
  // (Lambda - Z)^2 - 4t is conserved by the exact flow
  cplx c0 = lam[0] * lam[0];
  for (size_t i = 0; i < p.times.size(); ++i) {
    cplx c = p.lambda[i][0] * p.lambda[i][0] - 4.0 * p.times[i];
    CHECK(std::abs(c - c0) <= 1e-9);
  }
  // hull growth pulls bulk points toward the real axis
  CHECK(p.lambda.back()[0].imag() < lam[0].imag());
}

TEST_CASE("one-step mean displacement matches the drift") {
  SleOptions opt;
  opt.step = 1e-4;
  opt.horizon = 1e-4;  // a single step
  std::vector<cplx> lam{cplx(0.0, 2.0)};
  const long P = 10000;
  cplx sum = 0.0;
  double sum_sq = 0.0;
  std::vector<cplx> moves(P);
  for (long i = 0; i < P; ++i) {
    SlePath p = evolve(lam, 1000 + i, opt);
    moves[i] = p.lambda.back()[0] - lam[0];
    sum += moves[i];
  }
  cplx mean = sum / static_cast<double>(P);
  for (long i = 0; i < P; ++i) sum_sq += std::norm(moves[i] - mean);
  double se = std::sqrt(sum_sq / (P - 1) / P);
  cplx expected = 2.0 * opt.step / (lam[0] - 0.0);
  CHECK(std::abs(mean - expected) <= 3.0 * se + 1e-8);
}

TEST_CASE("stopping and window flags") {
  std::vector<cplx> lam{cplx(0.0, 1.0)};
  SleOptions opt;
  opt.step = 5e-4;
  opt.horizon = 0.05;

  SUBCASE("r_min stop") {
    opt.r_min = 0.999;  // triggers at once
    SlePath p = evolve(lam, 3, opt);
    CHECK(p.hit_r_min);
    CHECK(p.stop_time < opt.horizon);
  }

  SUBCASE("window escape") {
    opt.window_margin = 1e-6;
    SlePath p = evolve(lam, 3, opt);
    CHECK(p.driver_escaped);
  }

  SUBCASE("oversized step is rejected") {
    opt.step = 0.5;
    CHECK_THROWS_AS(evolve(lam, 3, opt), invalid_argument_error);
  }
}

TEST_CASE("martingale statistic: trivial representation is exactly flat") {
  SchlesingerState ref =
      solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)}, {Mat2::Zero(), Mat2::Zero()},
               1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.01;
  MartingaleResult r = martingale_statistic(ref, 50, 11, opt, 1);
  CHECK(r.mean_re.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.mean_im.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.se_re.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.discarded == 0);
  CHECK(r.m_start == Mat2c::Identity());
}

TEST_CASE("martingale statistic: single puncture short run") {
  SchlesingerState ref = solve_to({cplx(0.0, 1.0)}, {upper(0.25)}, 1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.02;
  MartingaleResult r = martingale_statistic(ref, 400, 2024, opt, 1);
  CHECK(r.discard_fraction < 0.01);
  CHECK(r.worst_sigma() <= 3.0);
  CHECK(r.max_det_dev <= 1e-6);
  CHECK(r.max_trace_sq <= 1e-8);
  // tau stays trivial for one puncture, so M = Y0(Z_t)
  CHECK(std::abs(std::exp(ref.log_tau) - 1.0) <= 1e-9);
}

TEST_CASE("martingale statistic: two punctures, drift within 3 sigma") {
  SchlesingerState ref = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                  {upper(0.2), lower(0.2)}, 1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.02;
  MartingaleResult r = martingale_statistic(ref, 500, 31415, opt, 1);
  CHECK(r.discard_fraction < 0.01);
  CHECK(r.worst_sigma() <= 3.0);
  CHECK(r.max_det_dev <= 1e-6);
}

TEST_CASE("stderr shrinks like one over sqrt(paths)") {
  SchlesingerState ref = solve_to({cplx(0.0, 1.0)}, {upper(0.3)}, 1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.02;
  MartingaleResult small = martingale_statistic(ref, 250, 7, opt, 1);
  MartingaleResult big = martingale_statistic(ref, 1000, 7, opt, 1);
  double se_small = small.se_re.maxCoeff() + small.se_im.maxCoeff();
  double se_big = big.se_re.maxCoeff() + big.se_im.maxCoeff();
  double ratio = se_small / se_big;  // expect about 2
  CHECK(ratio > 1.4);
  CHECK(ratio < 2.8);
}

TEST_CASE("discarded paths are counted") {
  SchlesingerState ref = solve_to({cplx(0.0, 1.0)}, {upper(0.2)}, 1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.02;
  opt.window_margin = 0.35;  // a visible fraction of drivers escapes
  MartingaleResult r = martingale_statistic(ref, 100, 5, opt, 1);
  CHECK(r.discarded > 0);
  CHECK(r.paths_used + r.discarded == 100);
  CHECK(r.discard_fraction > 0.02);

  opt.window_margin = 1e-4;  // every path escapes immediately
  CHECK_THROWS_AS(martingale_statistic(ref, 10, 5, opt, 1), guard_error);
}

TEST_CASE("martingale rows are deterministic across thread counts") {
  SchlesingerState ref = solve_to({cplx(0.0, 1.0)}, {upper(0.2)}, 1e-3);
  SleOptions opt;
  opt.step = 1e-3;
  opt.horizon = 0.01;
  MartingaleResult a = martingale_statistic(ref, 60, 99, opt, 1);
  MartingaleResult b = martingale_statistic(ref, 60, 99, opt, 3);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.mean_re == b.mean_re);
  for (size_t i = 0; i < a.rows.size(); ++i)
    for (int k = 0; k < 18; ++k) CHECK(a.rows[i][k] == b.rows[i][k]);
}
