#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "ddtau.h"

namespace {

std::string capi_tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "ddtau_tests" / "capi";
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("c api: domain lifecycle and counts") {
  ddt_domain* d = nullptr;
  REQUIRE(ddt_domain_create(2, 2, 1.0, &d) == DDT_OK);
  int v = 0, b = 0, w = 0, f = 0;
  CHECK(ddt_domain_counts(d, &v, &b, &w, &f) == DDT_OK);
  CHECK(v == 16);
  CHECK(b == 8);
  CHECK(w == 8);
  CHECK(f == 9);
  int ok = 0;
  CHECK(ddt_domain_validate(d, &ok) == DDT_OK);
  CHECK(ok == 1);
  double count = 0;
  CHECK(ddt_count_matchings(d, &count) == DDT_OK);
  CHECK(count == 36.0);
  ddt_domain_free(d);
}

TEST_CASE("c api: invalid arguments set an error message") {
  ddt_domain* d = nullptr;
  CHECK(ddt_domain_create(0, 1, 1.0, &d) == DDT_EINVAL);
  CHECK(std::strlen(ddt_last_error()) > 0);
}

TEST_CASE("c api: twisted determinant matches the trivial expectations") {
  ddt_domain* d = nullptr;
  REQUIRE(ddt_domain_create(2, 2, 1.0, &d) == DDT_OK);
  ddt_rep* r = nullptr;
  REQUIRE(ddt_rep_create(&r) == DDT_OK);
  double N0[4] = {0, 0, 0, 0};
  REQUIRE(ddt_rep_add_cut(r, d, 1, 1, N0) == DDT_OK);
  ddt_op* op = nullptr;
  REQUIRE(ddt_op_create(d, r, &op) == DDT_OK);
  double val = 0, cond = 0;
  CHECK(ddt_op_det_ratio(op, &val, &cond) == DDT_OK);
  CHECK(val == 1.0);

  double chi_re = std::cos(0.4), chi_im = std::sin(0.4);
  double vre = 0, vim = 0;
  CHECK(ddt_op_det_ratio_rank1(op, &chi_re, &chi_im, 1, &vre, &vim) == DDT_OK);
  CHECK(std::isfinite(vre));

  double p = 0;
  CHECK(ddt_op_edge_probability(op, 0, 0, 1, 0, &p) == DDT_OK);
  CHECK(p > 0.0);
  CHECK(p < 1.0);

  double mean = 0, se = 0;
  CHECK(ddt_op_mc_correlator(op, 100, 5, 1, &mean, &se) == DDT_OK);
  CHECK(mean == 1.0);

  ddt_op_free(op);
  ddt_rep_free(r);
  ddt_domain_free(d);
}

TEST_CASE("c api: two punctures with a deformed cut keep the determinant") {
  ddt_domain* d = nullptr;
  REQUIRE(ddt_domain_create(2, 2, 1.0, &d) == DDT_OK);
  ddt_rep* r = nullptr;
  REQUIRE(ddt_rep_create(&r) == DDT_OK);
  double N1[4] = {0, 0.3, 0, 0};
  double N2[4] = {0, 0, 0.3, 0};
  REQUIRE(ddt_rep_add_cut(r, d, 0, 1, N1) == DDT_OK);
  REQUIRE(ddt_rep_add_cut(r, d, 2, 2, N2) == DDT_OK);
  ddt_op* op = nullptr;
  REQUIRE(ddt_op_create(d, r, &op) == DDT_OK);
  double base = 0;
  REQUIRE(ddt_op_det_ratio(op, &base, nullptr) == DDT_OK);
  ddt_op_free(op);

  // zigzag homotopic deformation of the first cut
  int faces[] = {0, 1, 1, 1, 1, 0};
  REQUIRE(ddt_rep_deform_cut(r, d, 0, faces, 3) == DDT_OK);
  REQUIRE(ddt_op_create(d, r, &op) == DDT_OK);
  double deformed = 0;
  REQUIRE(ddt_op_det_ratio(op, &deformed, nullptr) == DDT_OK);
  CHECK(std::abs(deformed - base) <= 1e-12);

  // crossing the other cut's face is rejected and leaves the rep intact
  int bad[] = {0, 1, 1, 1, 2, 1};
  CHECK(ddt_rep_deform_cut(r, d, 0, bad, 3) != DDT_OK);
  double again = 0;
  ddt_op* op2 = nullptr;
  REQUIRE(ddt_op_create(d, r, &op2) == DDT_OK);
  REQUIRE(ddt_op_det_ratio(op2, &again, nullptr) == DDT_OK);
  CHECK(again == deformed);

  char* json = nullptr;
  REQUIRE(ddt_domain_to_json(d, r, &json) == DDT_OK);
  CHECK(std::string(json).find("\"cuts\"") != std::string::npos);
  ddt_string_free(json);

  ddt_op_free(op);
  ddt_op_free(op2);
  ddt_rep_free(r);
  ddt_domain_free(d);
}

TEST_CASE("c api: inverse entry lookup") {
  ddt_domain* d = nullptr;
  REQUIRE(ddt_domain_create(1, 1, 1.0, &d) == DDT_OK);
  ddt_rep* r = nullptr;
  REQUIRE(ddt_rep_create(&r) == DDT_OK);
  ddt_op* op = nullptr;
  REQUIRE(ddt_op_create(d, r, &op) == DDT_OK);
  double v = 0;
  // on the 2x2 grid |K^{-1}(b,w)| = 1/2 across each edge
  REQUIRE(ddt_op_inverse_entry(op, 0, 0, 1, 0, &v) == DDT_OK);
  CHECK(std::abs(std::abs(v) - 0.5) <= 1e-12);
  CHECK(ddt_op_inverse_entry(op, 1, 0, 0, 0, &v) == DDT_EINVAL);
  ddt_op_free(op);
  ddt_rep_free(r);
  ddt_domain_free(d);
}

TEST_CASE("c api: tau state") {
  double lre[2] = {-1.0, 1.0};
  double lim[2] = {1.0, 1.0};
  double Ns[8] = {0, 0.2, 0, 0, 0, 0, 0.2, 0};
  ddt_state* s = nullptr;
  REQUIRE(ddt_state_solve(lre, lim, Ns, 2, 1e-3, 1e-10, &s) == DDT_OK);
  double re = 0, im = 0;
  CHECK(ddt_state_log_tau(s, &re, &im) == DDT_OK);
  CHECK(std::abs(im) <= 1e-7);
  CHECK(std::abs(re) > 1e-5);

  double Mre[4], Mim[4];
  CHECK(ddt_state_monodromy(s, 0, Mre, Mim) == DDT_OK);
  CHECK(std::abs(Mre[0] + Mre[3] - 2.0) <= 1e-5);  // unipotent trace

  char* json = nullptr;
  CHECK(ddt_state_to_json(s, &json) == DDT_OK);
  CHECK(std::string(json).find("log_tau") != std::string::npos);
  ddt_string_free(json);
  ddt_state_free(s);
}

TEST_CASE("c api: run a whole experiment from config json") {
  std::string out = capi_tmp_dir();
  std::string cfg = std::string(R"({"experiment":"oracle","cases":2,"seed":9,)") +
                    "\"out_dir\":\"" + out + "\"}";
  char* summary = nullptr;
  REQUIRE(ddt_run_experiment(cfg.c_str(), &summary) == DDT_OK);
  std::string s(summary);
  ddt_string_free(summary);
  CHECK(s.find("\"pass\"") != std::string::npos);
  CHECK(std::filesystem::exists(out + "/oracle.csv"));
}

TEST_CASE("c api: version") { CHECK(ddt_version() >= 100); }
