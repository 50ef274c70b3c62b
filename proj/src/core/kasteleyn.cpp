#include "core/kasteleyn.hpp"

#include <cholmod.h>

#include <cmath>
#include <unordered_map>

namespace ddtau {

struct KasteleynFactor::Cholmod {
  cholmod_common common;
  cholmod_factor* factor = nullptr;
  // Pinned copies of the normal-equation CSC arrays viewed by `matrix`.
  std::vector<int> Ap, Ai;
  std::vector<double> Ax;
  cholmod_sparse matrix{};

  ~Cholmod() {
    if (factor) cholmod_free_factor(&factor, &common);
    cholmod_finish(&common);
  }
};

KasteleynFactor::KasteleynFactor(const LatticeDomain& dom) : dom_(&dom) {
  size_ = static_cast<int>(dom.whites.size());
  require(dom.whites.size() == dom.blacks.size(),
          "kasteleyn: black/white counts differ");

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(dom.edges.size());
  for (const auto& e : dom.edges) {
    int b = dom.is_black(e.u) ? e.u : e.v;
    int w = dom.is_black(e.u) ? e.v : e.u;
    trips.emplace_back(dom.white_index[w], dom.black_index[b], e.sign);
  }
  K_.resize(size_, size_);
  K_.setFromTriplets(trips.begin(), trips.end());
  K_.makeCompressed();
  Kt_ = K_.transpose();
  Kt_.makeCompressed();

  Eigen::SparseMatrix<double> A = (Kt_ * K_).eval();
  A.makeCompressed();

  ch_ = std::make_unique<Cholmod>();
  cholmod_start(&ch_->common);
  ch_->Ap.assign(A.outerIndexPtr(), A.outerIndexPtr() + A.cols() + 1);
  ch_->Ai.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
  ch_->Ax.assign(A.valuePtr(), A.valuePtr() + A.nonZeros());
  cholmod_sparse& As = ch_->matrix;
  As.nrow = A.rows();
  As.ncol = A.cols();
  As.nzmax = A.nonZeros();
  As.p = ch_->Ap.data();
  As.i = ch_->Ai.data();
  As.x = ch_->Ax.data();
  As.nz = nullptr;
  As.z = nullptr;
  As.stype = -1;  // symmetric, lower triangle of the CSC storage
  As.itype = CHOLMOD_INT;
  As.xtype = CHOLMOD_REAL;
  As.dtype = CHOLMOD_DOUBLE;
  As.sorted = 1;
  As.packed = 1;

  ch_->factor = cholmod_analyze(&As, &ch_->common);
  if (!ch_->factor || cholmod_factorize(&As, ch_->factor, &ch_->common) == 0 ||
      ch_->common.status == CHOLMOD_NOT_POSDEF) {
    throw singular_error("kasteleyn: matrix is singular (no matchings)");
  }
}

KasteleynFactor::~KasteleynFactor() = default;

double KasteleynFactor::log_abs_det() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (log_abs_det_) return *log_abs_det_;
  cholmod_common* cc = &ch_->common;
  cholmod_factor* copy = cholmod_copy_factor(ch_->factor, cc);
  // simplicial LL' exposes the Cholesky diagonal directly
  cholmod_change_factor(CHOLMOD_REAL, /*ll=*/1, /*super=*/0, /*packed=*/1,
                        /*monotonic=*/1, copy, cc);
  const int* p = static_cast<const int*>(copy->p);
  const int* ri = static_cast<const int*>(copy->i);
  const double* x = static_cast<const double*>(copy->x);
  double log_det_normal = 0.0;
  bool ok = true;
  for (size_t j = 0; j < copy->n; ++j) {
    if (ri[p[j]] != static_cast<int>(j) || x[p[j]] <= 0.0) {
      ok = false;
      break;
    }
    log_det_normal += 2.0 * std::log(x[p[j]]);
  }
  cholmod_free_factor(&copy, cc);
  if (!ok) throw singular_error("kasteleyn: factor diagonal not positive");
  log_abs_det_ = 0.5 * log_det_normal;  // det(K^T K) = det(K)^2
  return *log_abs_det_;
}

Eigen::VectorXd KasteleynFactor::solve(const Eigen::VectorXd& rhs) const {
  std::lock_guard<std::mutex> lock(mu_);
  cholmod_common* cc = &ch_->common;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(size_);
  Eigen::VectorXd r = rhs;
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::VectorXd g = Kt_ * r;
    cholmod_dense b{};
    b.nrow = static_cast<size_t>(size_);
    b.ncol = 1;
    b.d = static_cast<size_t>(size_);
    b.nzmax = static_cast<size_t>(size_);
    b.x = g.data();
    b.xtype = CHOLMOD_REAL;
    b.dtype = CHOLMOD_DOUBLE;
    cholmod_dense* sol = cholmod_solve(CHOLMOD_A, ch_->factor, &b, cc);
    if (!sol) throw singular_error("kasteleyn: solve failed");
    Eigen::Map<const Eigen::VectorXd> dx(static_cast<double*>(sol->x), size_);
    x += dx;
    cholmod_free_dense(&sol, cc);
    r = rhs - K_ * x;
    if (r.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  return x;
}

Eigen::VectorXd KasteleynFactor::solve_white_unit(int white_idx) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(size_);
  e[white_idx] = 1.0;
  return solve(e);
}

double KasteleynFactor::kentry(int white_idx, int black_idx) const {
  int w = dom_->whites[white_idx];
  int b = dom_->blacks[black_idx];
  int e = dom_->edge_between(w, b);
  return e < 0 ? 0.0 : dom_->edge(e).sign;
}

const Eigen::MatrixXd& KasteleynFactor::dense_inverse() const {
  require(dense_inverse_available(),
          "kasteleyn: domain too large for the dense inverse cache");
  std::lock_guard<std::mutex> lock(mu_);
  if (!dense_inv_) {
    Eigen::MatrixXd dense = Eigen::MatrixXd(K_);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
    double min_diag = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (min_diag == 0.0)
      throw singular_error("kasteleyn: matrix is singular (no matchings)");
    dense_inv_ = lu.inverse();
  }
  return *dense_inv_;
}

std::shared_ptr<KasteleynFactor> factorize(const LatticeDomain& dom) {
  return std::make_shared<KasteleynFactor>(dom);
}

double count_matchings(const KasteleynFactor& factor) {
  double ld = factor.log_abs_det();
  if (ld > std::log(9.0e15))
    throw overflow_error("count_matchings: count exceeds exact integer range");
  double value = std::exp(ld);
  double rounded = std::round(value);
  if (std::abs(value - rounded) > 1e-6 * std::max(1.0, rounded))
    throw singular_error("count_matchings: |det K| is not close to an integer");
  return rounded;
}

double count_matchings(const LatticeDomain& dom) {
  require(validate_kasteleyn(dom), "count_matchings: invalid Kasteleyn signs");
  KasteleynFactor f(dom);
  return count_matchings(f);
}

double edge_probability(const KasteleynFactor& factor, int edge_index) {
  const auto& dom = factor.domain();
  require(edge_index >= 0 && edge_index < static_cast<int>(dom.edges.size()),
          "edge_probability: edge not in domain");
  const auto& e = dom.edge(edge_index);
  int b = dom.is_black(e.u) ? e.u : e.v;
  int w = dom.is_black(e.u) ? e.v : e.u;
  int bi = dom.black_index[b], wi = dom.white_index[w];
  double kinv;
  if (factor.dense_inverse_available()) {
    kinv = factor.dense_inverse()(bi, wi);
  } else {
    kinv = factor.solve_white_unit(wi)[bi];
  }
  return std::abs(e.sign * kinv);
}

TwistedOperator::TwistedOperator(const LatticeDomain& dom, Representation rep,
                                 std::shared_ptr<KasteleynFactor> factor)
    : dom_(&dom), rep_(std::move(rep)), factor_(std::move(factor)) {
  if (!factor_) factor_ = factorize(dom);
  for (size_t c = 0; c < rep_.cuts.size(); ++c)
    for (const auto& cr : rep_.cuts[c].crossings) {
      require(cr.edge >= 0 && cr.edge < static_cast<int>(dom.edges.size()),
              "assemble: cut references an edge outside the domain");
      twists_.push_back({cr.edge, static_cast<int>(c), cr.black_left});
    }
}

TwistedOperator assemble(const LatticeDomain& dom, Representation rep,
                         std::shared_ptr<KasteleynFactor> factor) {
  return TwistedOperator(dom, std::move(rep), std::move(factor));
}

Mat2 TwistedOperator::jump_white_to_black(const Twist& t) const {
  const Mat2& N = rep_.nilpotents[t.cut];
  return t.black_left ? Mat2(Mat2::Identity() + N)
                      : Mat2(Mat2::Identity() - N);
}

Eigen::MatrixXd TwistedOperator::cross_inverse() const {
  const int c = static_cast<int>(twists_.size());
  const auto& dom = *dom_;
  Eigen::MatrixXd kinv(c, c);
  std::unordered_map<int, Eigen::VectorXd> columns;  // by white index
  std::vector<int> bi(c), wi(c);
  for (int e = 0; e < c; ++e) {
    const auto& ed = dom.edge(twists_[e].edge);
    int b = dom.is_black(ed.u) ? ed.u : ed.v;
    int w = dom.is_black(ed.u) ? ed.v : ed.u;
    bi[e] = dom.black_index[b];
    wi[e] = dom.white_index[w];
  }
  for (int e = 0; e < c; ++e) {
    auto it = columns.find(wi[e]);
    if (it == columns.end())
      it = columns.emplace(wi[e], factor_->solve_white_unit(wi[e])).first;
    for (int ep = 0; ep < c; ++ep) kinv(ep, e) = it->second[bi[ep]];
  }
  return kinv;
}

namespace {

template <typename Scalar>
double cond1_impl(const Eigen::PartialPivLU<
                      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& lu,
                  double norm1, int n) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (n == 0) return 1.0;
  Vec x = Vec::Constant(n, Scalar(1.0 / n));
  double est = 0.0;
  int last_j = -1;
  for (int iter = 0; iter < 5; ++iter) {
    Vec y = lu.solve(x);
    est = y.template lpNorm<1>();
    Vec xi(n);
    for (int i = 0; i < n; ++i) {
      double a = std::abs(y[i]);
      xi[i] = a == 0.0 ? Scalar(1) : Scalar(y[i] / a);
    }
    Vec z = lu.adjoint().solve(xi);
    int j = 0;
    double zmax = 0.0;
    for (int i = 0; i < n; ++i)
      if (std::abs(z[i]) > zmax) {
        zmax = std::abs(z[i]);
        j = i;
      }
    if (j == last_j || zmax <= std::abs(z.dot(x))) break;
    last_j = j;
    x = Vec::Zero(n);
    x[j] = Scalar(1);
  }
  return est * norm1;
}

}  // namespace

double cond1_estimate(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu,
                      double norm1) {
  return cond1_impl<double>(lu, norm1, static_cast<int>(lu.rows()));
}
double cond1_estimate(const Eigen::PartialPivLU<Eigen::MatrixXcd>& lu,
                      double norm1) {
  return cond1_impl<cplx>(lu, norm1, static_cast<int>(lu.rows()));
}

double TwistedOperator::det_ratio(DetRatioInfo* info) const {
  const int c = static_cast<int>(twists_.size());
  if (info) {
    *info = DetRatioInfo{};
    info->twisted_edges = c;
  }
  if (c == 0) return 1.0;

  Eigen::MatrixXd kinv = cross_inverse();
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(2 * c, 2 * c);
  const auto& dom = *dom_;
  for (int e = 0; e < c; ++e) {
    const auto& ed = dom.edge(twists_[e].edge);
    Mat2 block = ed.sign * (jump_white_to_black(twists_[e]) - Mat2::Identity());
    for (int ep = 0; ep < c; ++ep)
      D.block<2, 2>(2 * ep, 2 * e) += kinv(ep, e) * block;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(D);
  double det = lu.determinant();
  if (!std::isfinite(det))
    throw singular_error("det_ratio: non-finite block determinant");
  if (info) {
    info->cond_estimate =
        cond1_estimate(lu, D.cwiseAbs().colwise().sum().maxCoeff());
    info->ill_conditioned = info->cond_estimate > 1e12;
  }
  return det;
}

cplx TwistedOperator::det_ratio_rank1(const std::vector<cplx>& chis,
                                      DetRatioInfo* info) const {
  require(chis.size() == rep_.cuts.size(),
          "det_ratio_rank1: one scalar per cut");
  for (const auto& chi : chis)
    require(std::abs(std::abs(chi) - 1.0) <= 1e-12,
            "det_ratio_rank1: scalars must have unit modulus");
  const int c = static_cast<int>(twists_.size());
  if (info) {
    *info = DetRatioInfo{};
    info->twisted_edges = c;
  }
  if (c == 0) return 1.0;

  Eigen::MatrixXd kinv = cross_inverse();
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Identity(c, c);
  const auto& dom = *dom_;
  for (int e = 0; e < c; ++e) {
    const auto& ed = dom.edge(twists_[e].edge);
    cplx chi = chis[twists_[e].cut];
    if (!twists_[e].black_left) chi = 1.0 / chi;
    cplx factor = ed.sign * (chi - 1.0);
    for (int ep = 0; ep < c; ++ep) D(ep, e) += kinv(ep, e) * factor;
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(D);
  cplx det = lu.determinant();
  if (!std::isfinite(std::abs(det)))
    throw singular_error("det_ratio_rank1: non-finite block determinant");
  if (info) {
    info->cond_estimate = cond1_estimate(
        lu, D.cwiseAbs().colwise().sum().maxCoeff());
    info->ill_conditioned = info->cond_estimate > 1e12;
  }
  return det;
}

std::vector<double> TwistedOperator::inverse_entries(
    const std::vector<std::pair<int, int>>& pairs) const {
  const auto& dom = *dom_;
  std::vector<double> out;
  out.reserve(pairs.size());
  std::unordered_map<int, Eigen::VectorXd> columns;
  for (auto [b, w] : pairs) {
    require(b >= 0 && b < dom.vertex_count() && dom.is_black(b),
            "inverse_entries: first vertex must be black");
    require(w >= 0 && w < dom.vertex_count() && !dom.is_black(w),
            "inverse_entries: second vertex must be white");
    int wi = dom.white_index[w];
    auto it = columns.find(wi);
    if (it == columns.end())
      it = columns.emplace(wi, factor_->solve_white_unit(wi)).first;
    out.push_back(it->second[dom.black_index[b]]);
  }
  return out;
}

}  // namespace ddtau
