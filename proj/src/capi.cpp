#include "ddtau.h"

#include <cstring>
#include <string>

#include "core/dimer.hpp"
#include "core/experiments.hpp"
#include "core/kasteleyn.hpp"
#include "core/lattice.hpp"
#include "core/schlesinger.hpp"

namespace {

thread_local std::string g_last_error;

int set_error(int code, const char* what) {
  g_last_error = what ? what : "unknown error";
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return DDT_OK;
  } catch (const ddtau::invalid_argument_error& e) {
    return set_error(DDT_EINVAL, e.what());
  } catch (const ddtau::singular_error& e) {
    return set_error(DDT_ESINGULAR, e.what());
  } catch (const ddtau::overflow_error& e) {
    return set_error(DDT_EOVERFLOW, e.what());
  } catch (const ddtau::collision_error& e) {
    return set_error(DDT_ECOLLISION, e.what());
  } catch (const ddtau::guard_error& e) {
    return set_error(DDT_EGUARD, e.what());
  } catch (const ddtau::io_error& e) {
    return set_error(DDT_EIO, e.what());
  } catch (const std::exception& e) {
    return set_error(DDT_EINTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct ddt_domain {
  ddtau::LatticeDomain dom;
};

struct ddt_rep {
  std::vector<ddtau::CutPath> cuts;
  std::vector<ddtau::Mat2> Ns;
};

struct ddt_op {
  std::shared_ptr<ddtau::KasteleynFactor> factor;
  std::unique_ptr<ddtau::TwistedOperator> op;
};

struct ddt_state {
  ddtau::SchlesingerState state;
};

extern "C" {

const char* ddt_last_error(void) { return g_last_error.c_str(); }
void ddt_string_free(char* s) { delete[] s; }
unsigned ddt_version(void) { return 100; }

int ddt_domain_create(int m, int n, double delta, ddt_domain** out) {
  return guarded([&] {
    auto* d = new ddt_domain{ddtau::build_domain(m, n, delta)};
    *out = d;
  });
}

void ddt_domain_free(ddt_domain* d) { delete d; }

int ddt_domain_validate(const ddt_domain* d, int* ok) {
  return guarded([&] { *ok = ddtau::validate_kasteleyn(d->dom) ? 1 : 0; });
}

int ddt_domain_counts(const ddt_domain* d, int* vertices, int* blacks,
                      int* whites, int* bounded_faces) {
  return guarded([&] {
    if (vertices) *vertices = d->dom.vertex_count();
    if (blacks) *blacks = static_cast<int>(d->dom.blacks.size());
    if (whites) *whites = static_cast<int>(d->dom.whites.size());
    if (bounded_faces) *bounded_faces = d->dom.face_count();
  });
}

int ddt_domain_to_json(const ddt_domain* d, const ddt_rep* rep,
                       char** json_out) {
  return guarded([&] {
    ddtau::Representation r;
    if (rep) r = ddtau::make_representation(d->dom, rep->cuts, rep->Ns);
    *json_out = dup_string(ddtau::domain_to_json(d->dom, rep ? &r : nullptr));
  });
}

int ddt_count_matchings(const ddt_domain* d, double* count) {
  return guarded([&] { *count = ddtau::count_matchings(d->dom); });
}

int ddt_rep_create(ddt_rep** out) {
  return guarded([&] { *out = new ddt_rep; });
}

void ddt_rep_free(ddt_rep* r) { delete r; }

int ddt_rep_add_cut(ddt_rep* r, const ddt_domain* d, int face_x, int face_y,
                    const double N[4]) {
  return guarded([&] {
    ddtau::Mat2 Nm;
    Nm << N[0], N[1], N[2], N[3];
    ddtau::check_nilpotent(Nm);
    r->cuts.push_back(ddtau::build_cut(d->dom, face_x, face_y));
    r->Ns.push_back(Nm);
    ddtau::make_representation(d->dom, r->cuts, r->Ns);  // disjointness check
  });
}

int ddt_rep_deform_cut(ddt_rep* r, const ddt_domain* d, int cut_index,
                       const int* faces_xy, int n_faces) {
  return guarded([&] {
    ddtau::require(cut_index >= 0 &&
                       cut_index < static_cast<int>(r->cuts.size()),
                   "deform_cut: index out of range");
    std::vector<std::pair<int, int>> faces;
    for (int i = 0; i < n_faces; ++i)
      faces.emplace_back(faces_xy[2 * i], faces_xy[2 * i + 1]);
    auto deformed = ddtau::deform_cut(d->dom, r->cuts[cut_index], faces);
    auto saved = r->cuts[cut_index];
    r->cuts[cut_index] = deformed;
    try {
      ddtau::make_representation(d->dom, r->cuts, r->Ns);
    } catch (...) {
      r->cuts[cut_index] = saved;
      throw;
    }
  });
}

int ddt_op_create(const ddt_domain* d, const ddt_rep* r, ddt_op** out) {
  return guarded([&] {
    auto* op = new ddt_op;
    op->factor = ddtau::factorize(d->dom);
    op->op = std::make_unique<ddtau::TwistedOperator>(
        d->dom, ddtau::make_representation(d->dom, r->cuts, r->Ns),
        op->factor);
    *out = op;
  });
}

void ddt_op_free(ddt_op* op) { delete op; }

int ddt_op_det_ratio(ddt_op* op, double* value, double* cond_estimate) {
  return guarded([&] {
    ddtau::DetRatioInfo info;
    *value = op->op->det_ratio(&info);
    if (cond_estimate) *cond_estimate = info.cond_estimate;
  });
}

int ddt_op_det_ratio_rank1(ddt_op* op, const double* chi_re,
                           const double* chi_im, int n_chi, double* out_re,
                           double* out_im) {
  return guarded([&] {
    std::vector<ddtau::cplx> chis;
    for (int i = 0; i < n_chi; ++i) chis.emplace_back(chi_re[i], chi_im[i]);
    ddtau::cplx v = op->op->det_ratio_rank1(chis);
    *out_re = v.real();
    *out_im = v.imag();
  });
}

int ddt_op_inverse_entry(ddt_op* op, int black_x, int black_y, int white_x,
                         int white_y, double* value) {
  return guarded([&] {
    const auto& dom = op->op->domain();
    int b = dom.vid(black_x, black_y);
    int w = dom.vid(white_x, white_y);
    *value = op->op->inverse_entries({{b, w}}).front();
  });
}

int ddt_op_edge_probability(ddt_op* op, int x1, int y1, int x2, int y2,
                            double* p) {
  return guarded([&] {
    const auto& dom = op->op->domain();
    int e = dom.edge_between(dom.vid(x1, y1), dom.vid(x2, y2));
    ddtau::require(e >= 0, "edge_probability: edge not in domain");
    *p = ddtau::edge_probability(*op->factor, e);
  });
}

int ddt_op_mc_correlator(ddt_op* op, long samples, uint64_t seed, int threads,
                         double* mean, double* std_error) {
  return guarded([&] {
    auto res = ddtau::mc_correlator(*op->op, samples, seed, threads);
    *mean = res.mean;
    *std_error = res.std_error;
  });
}

int ddt_state_solve(const double* lambda_re, const double* lambda_im,
                    const double* Ns, int n, double eps, double rtol,
                    ddt_state** out) {
  return guarded([&] {
    std::vector<ddtau::cplx> targets;
    std::vector<ddtau::Mat2> gens;
    for (int k = 0; k < n; ++k) {
      targets.emplace_back(lambda_re[k], lambda_im[k]);
      ddtau::Mat2 N;
      N << Ns[4 * k], Ns[4 * k + 1], Ns[4 * k + 2], Ns[4 * k + 3];
      gens.push_back(N);
    }
    ddtau::SchlesingerOptions opt;
    if (rtol > 0.0) opt.rtol = rtol;
    auto* s = new ddt_state{ddtau::solve_to(targets, gens, eps, opt)};
    *out = s;
  });
}

void ddt_state_free(ddt_state* s) { delete s; }

int ddt_state_log_tau(const ddt_state* s, double* re, double* im) {
  return guarded([&] {
    *re = s->state.log_tau.real();
    if (im) *im = s->state.log_tau.imag();
  });
}

int ddt_state_monodromy(const ddt_state* s, int k, double* M_re,
                        double* M_im) {
  return guarded([&] {
    ddtau::Mat2c M = ddtau::monodromy(s->state, k);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        M_re[2 * i + j] = M(i, j).real();
        if (M_im) M_im[2 * i + j] = M(i, j).imag();
      }
  });
}

int ddt_state_to_json(const ddt_state* s, char** json_out) {
  return guarded([&] { *json_out = dup_string(ddtau::state_to_json(s->state)); });
}

int ddt_run_experiment(const char* config_json, char** summary_json_out) {
  return guarded([&] {
    auto cfg = ddtau::config_from_json(config_json);
    auto result = ddtau::run_experiment(cfg);
    ddtau::emit_report(result, cfg);
    nlohmann::json j = result.summary;
    j["experiment"] = result.name;
    j["pass"] = result.pass;
    if (summary_json_out) *summary_json_out = dup_string(j.dump(2));
  });
}

}  // extern "C"
