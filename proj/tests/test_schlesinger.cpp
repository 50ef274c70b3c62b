#include <doctest.h>

#include <cmath>

#include "core/schlesinger.hpp"

using namespace ddtau;

namespace {

constexpr double kTau = 6.283185307179586476925287;

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

double mat_dev(const Mat2c& a, const Mat2c& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("boundary initialization") {
  SchlesingerState st = init_boundary({0.0}, {upper(1.0)}, 1e-3);
  // A = (i/2pi) N
  CHECK(st.A[0](0, 1) == cplx(0.0, 1.0 / kTau));
  CHECK(st.A[0](0, 0) == cplx(0.0, 0.0));
  CHECK(st.log_tau == cplx(0.0, 0.0));
  // conj(A) = -A at the boundary, so the commutator term vanishes
  Mat2c comm = st.A[0] * st.A[0].conjugate() - st.A[0].conjugate() * st.A[0];
  CHECK(comm.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(init_boundary({0.0, 0.0}, {upper(1), upper(1)}, 1e-3),
                  invalid_argument_error);
  CHECK_THROWS_AS(init_boundary({1.0, 0.0}, {upper(1), upper(1)}, 1e-3),
                  invalid_argument_error);
  Mat2 notnil;
  notnil << 0, 1, 1, 0;
  CHECK_THROWS_AS(init_boundary({0.0}, {notnil}, 1e-3),
                  invalid_argument_error);
}

TEST_CASE("zero-length deformation is the identity") {
  SchlesingerState st =
      init_boundary({-1.0, 1.0}, {upper(0.2), lower(0.2)}, 1e-3);
  SchlesingerState moved = deform_one(st, 0, {st.lambda[0]});
  CHECK(moved.log_tau == st.log_tau);
  CHECK(mat_dev(moved.A[0], st.A[0]) == 0.0);
}

TEST_CASE("single puncture: residue constant, log tau zero") {
  SchlesingerState st = init_boundary({0.0}, {upper(0.4)}, 1e-3);
  SchlesingerState up = deform_one(st, 0, {cplx(0.0, 1.0)});
  CHECK(mat_dev(up.A[0], st.A[0]) <= 1e-12);
  CHECK(std::abs(up.log_tau) <= 1e-12);
  SchlesingerState wander =
      deform_one(up, 0, {cplx(0.7, 1.3), cplx(-0.4, 0.6), cplx(0.0, 1.0)});
  CHECK(mat_dev(wander.A[0], st.A[0]) <= 1e-10);
  CHECK(std::abs(log_tau(wander)) <= 1e-8);
}

TEST_CASE("closedness: contractible loop returns the state") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.25), lower(0.25)}, 1e-3);
  ConservationStats cons;
  SchlesingerState looped = deform_one(
      st, 0,
      {cplx(-0.6, 1.3), cplx(-0.6, 0.7), cplx(-1.4, 0.7), cplx(-1.0, 1.0)},
      SchlesingerOptions{}, &cons);
  for (int k = 0; k < 2; ++k) CHECK(mat_dev(looped.A[k], st.A[k]) <= 1e-7);
  CHECK(std::abs(looped.log_tau - st.log_tau) <= 1e-7);
  CHECK(cons.worst() <= 1e-8);
}

TEST_CASE("conservation along generic deformations") {
  SchlesingerState st =
      solve_to({cplx(-1.0, 1.0), cplx(0.5, 0.8), cplx(1.5, 1.2)},
               {upper(0.3), lower(0.2), upper(0.15)}, 1e-3);
  ConservationStats cons = st.conservation();
  CHECK(cons.max_trace <= 1e-8);
  CHECK(cons.max_trace_sq <= 1e-8);
  CHECK(cons.max_residue_sum <= 1e-8);
  CHECK(std::abs(st.log_tau.imag()) <= 1e-7);
}

TEST_CASE("solve_to at the lift height returns the boundary state") {
  double eps = 1e-3;
  SchlesingerState st = solve_to({cplx(-1.0, eps), cplx(1.0, eps)},
                                 {upper(0.2), lower(0.2)}, eps);
  CHECK(st.log_tau == cplx(0.0, 0.0));
  CHECK(st.A[0](0, 1) == cplx(0.0, 0.2 / kTau));
}

TEST_CASE("solve_to sorts punctures with their generators") {
  SchlesingerState a = solve_to({cplx(1.0, 1.0), cplx(-1.0, 1.0)},
                                {lower(0.2), upper(0.2)}, 1e-3);
  SchlesingerState b = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                {upper(0.2), lower(0.2)}, 1e-3);
  CHECK(a.lambda[0] == b.lambda[0]);
  CHECK(mat_dev(a.A[0], b.A[0]) == 0.0);
  CHECK(std::abs(a.log_tau - b.log_tau) == 0.0);
}

TEST_CASE("n=1 tau is trivial anywhere") {
  SchlesingerState st = solve_to({cplx(0.0, 1.0)}, {upper(0.5)}, 1e-3);
  CHECK(std::abs(log_tau(st)) <= 1e-8);
}

TEST_CASE("reflected labeling gives the same tau") {
  // symmetric configuration; swapping which puncture carries which generator
  // is a reflection symmetry of the correlator
  SchlesingerState ab = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.2), lower(0.2)}, 1e-3);
  SchlesingerState ba = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {lower(0.2), upper(0.2)}, 1e-3);
  CHECK(std::abs(log_tau(ab) - log_tau(ba)) <= 1e-8);
  CHECK(std::abs(log_tau(ab)) > 1e-5);  // non-degenerate configuration
}

TEST_CASE("pinching factorization trend") {
  auto joint = [&](double M) {
    return log_tau(solve_to({cplx(-0.5 * M, 1.0), cplx(-0.5 * M + 1.3, 0.9),
                             cplx(0.5 * M, 1.1)},
                            {upper(0.3), lower(0.3), upper(0.25)}, 1e-3));
  };
  double cluster_a = log_tau(solve_to({cplx(0.0, 1.0), cplx(1.3, 0.9)},
                                      {upper(0.3), lower(0.3)}, 1e-3));
  double cluster_b = 0.0;  // single puncture
  double e10 = std::abs(joint(10.0) - cluster_a - cluster_b);
  double e40 = std::abs(joint(40.0) - cluster_a - cluster_b);
  CHECK(e40 < e10);
  CHECK(e10 < 0.1);
}

TEST_CASE("fundamental solution basics") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.3), lower(0.3)}, 1e-3);
  double R0 = contour_base_point(st);

  SUBCASE("non-encircling excursion returns to the start value") {
    std::vector<cplx> contour = {cplx(R0, 0), cplx(R0, 0.3 * R0),
                                 cplx(0.7 * R0, 0.3 * R0), cplx(0.7 * R0, 0),
                                 cplx(R0, 0)};
    double det_err = 0.0;
    ContourOptions opt;
    opt.det_error = &det_err;
    Mat2c Y_end = fundamental_solution(st, contour, opt);
    Mat2c Y_start = fundamental_solution(st, {cplx(R0, 0), cplx(R0, 0)});
    CHECK(mat_dev(Y_end.inverse() * Y_start, Mat2c::Identity()) <= 1e-8);
    CHECK(det_err <= 1e-9);
  }

  SUBCASE("unit determinant along a long contour") {
    double det_err = 0.0;
    ContourOptions opt;
    opt.det_error = &det_err;
    fundamental_solution(st, {cplx(R0, 0), cplx(0.01, 0.0)}, opt);
    CHECK(det_err <= 1e-9);
  }

  SUBCASE("contour through a puncture is rejected") {
    std::vector<cplx> bad = {cplx(R0, 0), cplx(R0, 1.0), cplx(-2.0, 1.0)};
    CHECK_THROWS_AS(fundamental_solution(st, bad), collision_error);
  }
}

TEST_CASE("closed form for one puncture at i") {
  double s = 0.2;
  SchlesingerState st = solve_to({cplx(0.0, 1.0)}, {upper(s)}, 1e-3);
  double R0 = contour_base_point(st);
  // approach z = 0 along the positive real axis
  Mat2c Y = fundamental_solution(st, {cplx(R0, 0), cplx(0.0, 0.0)});
  Mat2c expected = Mat2c::Identity();
  expected(0, 1) = 0.5 * s;  // Id + N/2
  CHECK(mat_dev(Y, expected) <= 1e-6);
}

TEST_CASE("monodromy") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.2), lower(0.2)}, 1e-3);

  SUBCASE("trivial representation gives the identity") {
    SchlesingerState triv = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                     {Mat2::Zero(), Mat2::Zero()}, 1e-3);
    for (int k = 0; k < 2; ++k)
      CHECK(mat_dev(monodromy(triv, k), Mat2c::Identity()) <= 1e-9);
  }

  SUBCASE("fresh states have unipotent monodromy traces") {
    for (int k = 0; k < 2; ++k) {
      Mat2c M = monodromy(st, k);
      CHECK(std::abs(M.trace() - 2.0) <= 1e-5);
      CHECK(std::abs(M.determinant() - 1.0) <= 1e-9);
    }
  }

  SUBCASE("monodromy entries are close to Id + N near the boundary") {
    SchlesingerState low = solve_to({cplx(-1.0, 0.05), cplx(1.0, 0.05)},
                                    {upper(0.2), lower(0.2)}, 1e-3);
    Mat2c M0 = monodromy(low, 0);
    Mat2c plus = Mat2c::Identity() + low.N[0].cast<cplx>();
    Mat2c minus = Mat2c::Identity() - low.N[0].cast<cplx>();
    CHECK(mat_dev(M0, plus) <= 0.08);  // access-path conjugation remains
    CHECK(mat_dev(M0, plus) < mat_dev(M0, minus) / 3.0);
  }

  SUBCASE("isomonodromy: matrices are constant along deformations") {
    ContourOptions opt;
    opt.base_point = 1.2 * contour_base_point(st);
    Mat2c m0_before = monodromy(st, 0, opt);
    Mat2c m1_before = monodromy(st, 1, opt);
    SchlesingerState moved =
        deform_one(st, 0, {cplx(-1.3, 1.2), cplx(-1.5, 0.7)});
    Mat2c m0_after = monodromy(moved, 0, opt);
    Mat2c m1_after = monodromy(moved, 1, opt);
    CHECK(mat_dev(m0_before, m0_after) <= 1e-6);
    CHECK(mat_dev(m1_before, m1_after) <= 1e-6);
  }
}

TEST_CASE("robin identity") {
  SUBCASE("single puncture: both sides vanish") {
    SchlesingerState st = solve_to({cplx(0.0, 1.0)}, {upper(0.4)}, 1e-3);
    auto [lhs, rhs] = robin_check(st, 0);
    CHECK(std::abs(lhs) <= 1e-7);
    CHECK(std::abs(rhs) <= 1e-12);
  }

  SUBCASE("two punctures: finite difference matches Tr(A R)") {
    SchlesingerState st = solve_to({cplx(-0.8, 1.1), cplx(0.9, 0.7)},
                                   {upper(0.3), lower(0.25)}, 1e-3);
    auto [lhs, rhs] = robin_check(st, 0, 1e-4);
    CHECK(std::abs(lhs - rhs) <= 1e-5);
    CHECK(std::abs(rhs) > 1e-6);  // non-trivial derivative
  }

  SUBCASE("rhs is invariant under global conjugation") {
    SchlesingerState st = solve_to({cplx(-0.8, 1.1), cplx(0.9, 0.7)},
                                   {upper(0.3), lower(0.25)}, 1e-3);
    cplx rhs = variation_prediction(st, 0);
    Mat2c G;
    G << 1.0, 0.5, -0.5, 0.75;
    SchlesingerState conj = st;
    for (auto& A : conj.A) A = G * A * G.inverse();
    CHECK(std::abs(variation_prediction(conj, 0) - rhs) <= 1e-12);
  }
}

TEST_CASE("variation prediction matches tau differences") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.25), lower(0.25)}, 1e-3);
  cplx T = variation_prediction(st, 0);
  double h = 1e-3;
  for (cplx d : {cplx(h, 0), cplx(0, h)}) {
    SchlesingerState plus = deform_one(st, 0, {st.lambda[0] + d});
    double dlog = plus.log_tau.real() - st.log_tau.real();
    double pred = 2.0 * std::real(d * T);
    CHECK(std::abs(dlog - pred) <= 1e-6);
  }
}

TEST_CASE("moebius invariance") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.25), lower(0.25)}, 1e-3);
  double base = log_tau(st);

  SUBCASE("identity map") {
    CHECK(std::abs(log_tau(mobius_image(st, 1, 0, 0, 1)) - base) <= 1e-12);
  }
  SUBCASE("scaling by two") {
    CHECK(std::abs(log_tau(mobius_image(st, 2, 0, 0, 1)) - base) <= 1e-6);
  }
  SUBCASE("unit translation") {
    CHECK(std::abs(log_tau(mobius_image(st, 1, 1, 0, 1)) - base) <= 1e-6);
  }
  SUBCASE("orientation-reversing maps are rejected") {
    CHECK_THROWS_AS(mobius_image(st, 1, 0, 0, -1), invalid_argument_error);
  }
}

TEST_CASE("collision guard on deformations") {
  SchlesingerState st = solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                                 {upper(0.2), lower(0.2)}, 1e-3);
  CHECK_THROWS_AS(deform_one(st, 0, {cplx(1.0, 1.0)}), collision_error);
}

TEST_CASE("state json carries the expected fields") {
  SchlesingerState st = solve_to({cplx(0.0, 1.0)}, {upper(0.3)}, 1e-3);
  std::string j = state_to_json(st);
  for (const char* key : {"\"lambdas\"", "\"A_real\"", "\"A_imag\"",
                          "\"log_tau\"", "\"Ns\"", "\"eps\""})
    CHECK(j.find(key) != std::string::npos);
}

TEST_CASE("eps refinement is stable") {
  auto lt = [&](double eps) {
    return log_tau(solve_to({cplx(-1.0, 1.0), cplx(1.0, 1.0)},
                            {upper(0.2), lower(0.2)}, eps));
  };
  CHECK(std::abs(lt(1e-3) - lt(5e-4)) < 1e-5);
}
