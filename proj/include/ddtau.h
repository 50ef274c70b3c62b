/* ddtau — double-dimer topological correlators and isomonodromic
 * tau-functions on half-plane lattice domains.
 *
 * C interface: opaque handles + integer status codes. All functions return
 * DDT_OK (0) on success; on failure they return a nonzero status and leave a
 * message retrievable via ddt_last_error() (thread-local). Strings returned
 * through char** are heap-allocated; release them with ddt_string_free.
 */
#ifndef DDTAU_H
#define DDTAU_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ddt_domain ddt_domain;
typedef struct ddt_rep ddt_rep;
typedef struct ddt_op ddt_op;
typedef struct ddt_state ddt_state;

enum ddt_status {
  DDT_OK = 0,
  DDT_EINVAL = 1,    /* invalid argument / precondition violated */
  DDT_ESINGULAR = 2, /* singular matrix, no matchings, assertion surfaced */
  DDT_EOVERFLOW = 3, /* value outside representable range */
  DDT_ECOLLISION = 4,/* path or puncture collision */
  DDT_EGUARD = 5,    /* guard exceeded (enumeration size, step budget, ...) */
  DDT_EIO = 6,       /* file i/o failure */
  DDT_EINTERNAL = 7
};

const char* ddt_last_error(void);
void ddt_string_free(char* s);
unsigned ddt_version(void);

/* --- lattice domains: 2m x 2n grid with Kasteleyn signs, mesh delta --- */
int ddt_domain_create(int m, int n, double delta, ddt_domain** out);
void ddt_domain_free(ddt_domain* d);
int ddt_domain_validate(const ddt_domain* d, int* ok);
int ddt_domain_counts(const ddt_domain* d, int* vertices, int* blacks,
                      int* whites, int* bounded_faces);
int ddt_domain_to_json(const ddt_domain* d, const ddt_rep* rep_or_null,
                       char** json_out);
int ddt_count_matchings(const ddt_domain* d, double* count);

/* --- representations: punctures (faces) with branch cuts and unipotent
 *     generators Id + N (N passed row-major: n00,n01,n10,n11) --- */
int ddt_rep_create(ddt_rep** out);
void ddt_rep_free(ddt_rep* r);
int ddt_rep_add_cut(ddt_rep* r, const ddt_domain* d, int face_x, int face_y,
                    const double N[4]);
/* replace cut k by a homotopic dual path; faces_xy = fx0,fy0,fx1,fy1,... */
int ddt_rep_deform_cut(ddt_rep* r, const ddt_domain* d, int cut_index,
                       const int* faces_xy, int n_faces);

/* --- twisted operator --- */
int ddt_op_create(const ddt_domain* d, const ddt_rep* r, ddt_op** out);
void ddt_op_free(ddt_op* op);
int ddt_op_det_ratio(ddt_op* op, double* value, double* cond_estimate);
/* one unit-modulus scalar (re,im) per cut */
int ddt_op_det_ratio_rank1(ddt_op* op, const double* chi_re,
                           const double* chi_im, int n_chi, double* out_re,
                           double* out_im);
int ddt_op_inverse_entry(ddt_op* op, int black_x, int black_y, int white_x,
                         int white_y, double* value);
int ddt_op_edge_probability(ddt_op* op, int x1, int y1, int x2, int y2,
                            double* p);
int ddt_op_mc_correlator(ddt_op* op, long samples, uint64_t seed, int threads,
                         double* mean, double* std_error);

/* --- isomonodromic tau-function states --- */
int ddt_state_solve(const double* lambda_re, const double* lambda_im,
                    const double* Ns, int n, double eps, double rtol,
                    ddt_state** out);
void ddt_state_free(ddt_state* s);
int ddt_state_log_tau(const ddt_state* s, double* re, double* im);
int ddt_state_monodromy(const ddt_state* s, int k, double* M_re, double* M_im);
int ddt_state_to_json(const ddt_state* s, char** json_out);

/* --- experiment harness ---
 * config_json follows the CLI configuration schema; output files are written
 * under the configured out_dir and a JSON summary (including "pass") is
 * returned. */
int ddt_run_experiment(const char* config_json, char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif /* DDTAU_H */
