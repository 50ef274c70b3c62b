#include "core/schlesinger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "core/dopri5.hpp"

namespace ddtau {

namespace {

constexpr double kPi = 3.141592653589793238462643;

Mat2c commutator(const Mat2c& a, const Mat2c& b) { return a * b - b * a; }

struct FullConfig {
  // punctures + mirrors, packed as [0..n) upper, [n..2n) conjugates
  std::vector<cplx> lam, vel;
  std::vector<Mat2c> A;
};

// Schlesinger right-hand side for piecewise-linear puncture tracks.
class SchlesingerRhs {
 public:
  SchlesingerRhs(int n) : n_(n), cfg_() {
    cfg_.lam.resize(2 * n);
    cfg_.vel.resize(2 * n);
    cfg_.A.resize(2 * n);
  }

  // segment data: lambda_k(s) = p0 + s*(p1-p0), s in [0,1]
  std::vector<cplx> seg_from, seg_to;

  void positions(double s, std::vector<cplx>& lam, std::vector<cplx>& vel) const {
    for (int k = 0; k < n_; ++k) {
      cplx d = seg_to[k] - seg_from[k];
      lam[k] = seg_from[k] + s * d;
      vel[k] = d;
      lam[n_ + k] = std::conj(lam[k]);
      vel[n_ + k] = std::conj(d);
    }
  }

  void operator()(double s, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
    const int n = n_;
    positions(s, cfg_.lam, cfg_.vel);
    for (int k = 0; k < n; ++k) {
      cfg_.A[k] << y[4 * k], y[4 * k + 1], y[4 * k + 2], y[4 * k + 3];
      cfg_.A[n + k] = cfg_.A[k].conjugate();
    }
    dy.setZero();
    for (int i = 0; i < n; ++i) {
      // dA_i = -sum_{J != i} [A_i, A_J] d(lambda_i - lambda_J)/(lambda_i - lambda_J)
      Mat2c dAi = Mat2c::Zero();
      for (int J = 0; J < 2 * n; ++J) {
        if (J == i) continue;
        cplx dl = cfg_.vel[i] - cfg_.vel[J];
        if (dl == 0.0) continue;
        dAi -= commutator(cfg_.A[i], cfg_.A[J]) * (dl / (cfg_.lam[i] - cfg_.lam[J]));
      }
      dy[4 * i] = dAi(0, 0);
      dy[4 * i + 1] = dAi(0, 1);
      dy[4 * i + 2] = dAi(1, 0);
      dy[4 * i + 3] = dAi(1, 1);
    }
    cplx dtau = 0.0;
    for (int I = 0; I < 2 * n; ++I)
      for (int J = I + 1; J < 2 * n; ++J) {
        cplx dl = cfg_.vel[I] - cfg_.vel[J];
        if (dl == 0.0) continue;
        dtau += (cfg_.A[I] * cfg_.A[J]).trace() * (dl / (cfg_.lam[I] - cfg_.lam[J]));
      }
    dy[4 * n] = dtau;
  }

  // minimal distance between distinct punctures (self-mirror pairs excluded)
  double min_separation(double s) const {
    std::vector<cplx> lam(2 * n_), vel(2 * n_);
    positions(s, lam, vel);
    double d = std::numeric_limits<double>::infinity();
    for (int I = 0; I < 2 * n_; ++I)
      for (int J = I + 1; J < 2 * n_; ++J) {
        if (J == I + n_) continue;  // mirror of itself
        d = std::min(d, std::abs(lam[I] - lam[J]));
      }
    return d;
  }

  int n() const { return n_; }

 private:
  int n_;
  FullConfig cfg_;
};

Eigen::VectorXcd pack(const SchlesingerState& st) {
  const int n = st.count();
  Eigen::VectorXcd y(4 * n + 1);
  for (int k = 0; k < n; ++k) {
    y[4 * k] = st.A[k](0, 0);
    y[4 * k + 1] = st.A[k](0, 1);
    y[4 * k + 2] = st.A[k](1, 0);
    y[4 * k + 3] = st.A[k](1, 1);
  }
  y[4 * n] = st.log_tau;
  return y;
}

void unpack(const Eigen::VectorXcd& y, SchlesingerState& st) {
  const int n = st.count();
  for (int k = 0; k < n; ++k)
    st.A[k] << y[4 * k], y[4 * k + 1], y[4 * k + 2], y[4 * k + 3];
  st.log_tau = y[4 * n];
}

ConservationStats conservation_of(const Eigen::VectorXcd& y, int n) {
  ConservationStats c;
  Mat2c sum = Mat2c::Zero();
  for (int k = 0; k < n; ++k) {
    Mat2c A;
    A << y[4 * k], y[4 * k + 1], y[4 * k + 2], y[4 * k + 3];
    c.max_trace = std::max(c.max_trace, std::abs(A.trace()));
    c.max_trace_sq = std::max(c.max_trace_sq, std::abs((A * A).trace()));
    sum += A + A.conjugate();
  }
  c.max_residue_sum = sum.cwiseAbs().maxCoeff();
  c.max_im_dlogtau = std::abs(std::imag(y[4 * n]));
  return c;
}

}  // namespace

ConservationStats SchlesingerState::conservation() const {
  return conservation_of(pack(*this), count());
}

double SchlesingerState::diameter() const {
  double d = 0.0;
  const int n = count();
  std::vector<cplx> all;
  for (const auto& l : lambda) {
    all.push_back(l);
    all.push_back(std::conj(l));
  }
  for (size_t i = 0; i < all.size(); ++i)
    for (size_t j = i + 1; j < all.size(); ++j)
      d = std::max(d, std::abs(all[i] - all[j]));
  if (n == 1) d = std::max(d, 2.0 * std::abs(lambda[0]));
  return d;
}

SchlesingerState init_boundary(const std::vector<double>& xs,
                               const std::vector<Mat2>& Ns, double eps) {
  require(!xs.empty(), "init_boundary: need at least one puncture");
  require(xs.size() == Ns.size(), "init_boundary: one generator per puncture");
  require(eps > 0.0, "init_boundary: eps must be positive");
  for (size_t i = 0; i + 1 < xs.size(); ++i)
    require(xs[i] < xs[i + 1], "init_boundary: xs must be strictly increasing");
  for (const auto& N : Ns) check_nilpotent(N);

  SchlesingerState st;
  st.eps0 = eps;
  for (size_t k = 0; k < xs.size(); ++k) {
    st.lambda.push_back(cplx(xs[k], eps));
    st.N.push_back(Ns[k]);
    st.A.push_back((cplx(0.0, 1.0) / (2.0 * kPi)) * Ns[k].cast<cplx>());
  }
  st.log_tau = 0.0;
  return st;
}

SchlesingerState deform(const SchlesingerState& state, const DeformPath& path,
                        const SchlesingerOptions& opt,
                        ConservationStats* track) {
  const int n = state.count();
  require(!path.knots.empty(), "deform: empty path");
  for (const auto& knot : path.knots) {
    require(static_cast<int>(knot.size()) == n, "deform: knot arity mismatch");
    for (const auto& l : knot)
      require(l.imag() > 0.0, "deform: punctures must stay in the upper half-plane");
  }
  for (int k = 0; k < n; ++k)
    require(std::abs(path.knots[0][k] - state.lambda[k]) <= 1e-12 *
                std::max(1.0, std::abs(state.lambda[k])),
            "deform: path must start at the current configuration");

  double d_min = opt.d_min_factor * std::max(state.diameter(), 1e-6);
  SchlesingerRhs rhs(n);
  Eigen::VectorXcd y = pack(state);
  ConservationStats stats;

  OdeOptions ode;
  ode.rtol = opt.rtol;
  ode.atol = opt.atol;

  for (size_t seg = 0; seg + 1 < path.knots.size(); ++seg) {
    rhs.seg_from = path.knots[seg];
    rhs.seg_to = path.knots[seg + 1];
    bool moves = false;
    for (int k = 0; k < n; ++k)
      if (rhs.seg_to[k] != rhs.seg_from[k]) moves = true;
    if (!moves) continue;

    auto cap = [&](double s, const Eigen::VectorXcd&) {
      double h = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k) {
        cplx v = rhs.seg_to[k] - rhs.seg_from[k];
        double speed = std::abs(v);
        if (speed == 0.0) continue;
        cplx pos = rhs.seg_from[k] + s * v;
        double yk = pos.imag();
        if (yk < opt.boundary_cap_factor * std::max(state.eps0, 1e-12))
          h = std::min(h, 0.25 * yk / speed);
      }
      return h;
    };
    auto monitor = [&](double s, const Eigen::VectorXcd& ys) {
      if (rhs.min_separation(s) < d_min)
        throw collision_error("deform: puncture collision (min separation under guard)");
      stats.merge(conservation_of(ys, n));
    };
    if (rhs.min_separation(0.0) < d_min)
      throw collision_error("deform: path starts below the separation guard");
    integrate_dopri5(rhs, y, 0.0, 1.0, ode, cap, monitor);
  }

  SchlesingerState out = state;
  out.lambda = path.knots.back();
  unpack(y, out);
  if (track) track->merge(stats);
  return out;
}

SchlesingerState deform_one(const SchlesingerState& state, int k,
                            const std::vector<cplx>& waypoints,
                            const SchlesingerOptions& opt,
                            ConservationStats* track) {
  require(k >= 0 && k < state.count(), "deform_one: index out of range");
  DeformPath p;
  p.knots.push_back(state.lambda);
  for (const auto& w : waypoints) {
    auto knot = p.knots.back();
    knot[k] = w;
    p.knots.push_back(knot);
  }
  return deform(state, p, opt, track);
}

SchlesingerState solve_to(std::vector<cplx> targets, std::vector<Mat2> Ns,
                          double eps, const SchlesingerOptions& opt,
                          ConservationStats* track) {
  require(!targets.empty() && targets.size() == Ns.size(),
          "solve_to: targets/generators mismatch");
  const int n = static_cast<int>(targets.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return targets[a].real() < targets[b].real();
  });
  std::vector<double> xs(n);
  std::vector<Mat2> Ns_sorted(n);
  std::vector<cplx> tg(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = targets[order[i]].real();
    Ns_sorted[i] = Ns[order[i]];
    tg[i] = targets[order[i]];
    require(tg[i].imag() > 0.0, "solve_to: targets must lie in the upper half-plane");
  }
  for (int i = 0; i + 1 < n; ++i)
    if (!(xs[i] < xs[i + 1]))
      throw collision_error(
          "solve_to: default vertical transport needs distinct real parts");

  SchlesingerState st = init_boundary(xs, Ns_sorted, eps);
  for (int i = 0; i < n; ++i) {
    if (std::abs(tg[i] - st.lambda[i]) == 0.0) continue;
    st = deform_one(st, i, {tg[i]}, opt, track);
  }
  return st;
}

double log_tau(const SchlesingerState& state) {
  double im = std::abs(state.log_tau.imag());
  if (im > 1e-7)
    throw singular_error("log_tau: imaginary residue " + std::to_string(im) +
                         " exceeds 1e-7");
  return state.log_tau.real();
}

namespace {

// Regular part of A(z) at lambda_k over the full configuration:
// R_k = sum_{J != k} A_J / (lambda_k - lambda_J). With this orientation
// d log tau = Tr(A_k R_k) dlambda_k + (mirror term), matching both the
// tau 1-form and the finite-difference probe.
Mat2c robin_sum(const SchlesingerState& st, int k) {
  const int n = st.count();
  Mat2c R = Mat2c::Zero();
  for (int j = 0; j < n; ++j) {
    if (j != k) R += st.A[j] / (st.lambda[k] - st.lambda[j]);
    R += st.A[j].conjugate() / (st.lambda[k] - std::conj(st.lambda[j]));
  }
  return R;
}

}  // namespace

cplx variation_prediction(const SchlesingerState& state, int k) {
  require(k >= 0 && k < state.count(), "variation_prediction: bad index");
  return (state.A[k] * robin_sum(state, k)).trace();
}

std::pair<cplx, cplx> robin_check(const SchlesingerState& state, int k,
                                  double h, const SchlesingerOptions& opt) {
  require(k >= 0 && k < state.count(), "robin_check: bad index");
  require(h > 0.0, "robin_check: step must be positive");
  auto shifted = [&](cplx dz) {
    SchlesingerState s =
        deform_one(state, k, {state.lambda[k] + dz}, opt, nullptr);
    return s.log_tau;
  };
  cplx fx = shifted(cplx(h, 0.0)) - shifted(cplx(-h, 0.0));
  cplx fy = shifted(cplx(0.0, h)) - shifted(cplx(0.0, -h));
  // d log tau = 2 Re(T dlambda) when the mirror moves conjugately
  cplx lhs = fx / (4.0 * h) - cplx(0.0, 1.0) * (fy / (4.0 * h));
  return {lhs, variation_prediction(state, k)};
}

double contour_base_point(const SchlesingerState& state) {
  return std::max(100.0 * state.diameter(), 10.0);
}

namespace {

double point_segment_distance(cplx p, cplx a, cplx b) {
  cplx ab = b - a;
  double len2 = std::norm(ab);
  if (len2 == 0.0) return std::abs(p - a);
  double t = std::clamp(((p - a) * std::conj(ab)).real() / len2, 0.0, 1.0);
  return std::abs(p - (a + t * ab));
}

// Y0(z0) = Id - B/z0 + (B^2 - D)/(2 z0^2) + O(z0^-3) with B = sum A_I lam_I,
// D = sum A_I lam_I^2; keeps det Y0 = 1 + O(z0^-3) at the contour start.
Mat2c asymptotic_start(const std::vector<Mat2c>& A, const std::vector<cplx>& lam,
                       cplx z0) {
  Mat2c B = Mat2c::Zero(), D = Mat2c::Zero();
  for (size_t I = 0; I < A.size(); ++I) {
    B += A[I] * lam[I];
    D += A[I] * (lam[I] * lam[I]);
  }
  return Mat2c::Identity() - B / z0 + (B * B - D) / (2.0 * z0 * z0);
}

}  // namespace

Mat2c fundamental_solution(const SchlesingerState& state,
                           const std::vector<cplx>& contour,
                           const ContourOptions& opt) {
  const int n = state.count();
  require(contour.size() >= 2, "fundamental_solution: contour needs >= 2 points");
  cplx z0 = contour.front();
  require(std::abs(z0.imag()) <= 1e-12 * std::max(1.0, std::abs(z0)) &&
              z0.real() > 0.0,
          "fundamental_solution: contour must start on the positive real axis");
  require(z0.real() >= 100.0 * state.diameter() - 1e-9,
          "fundamental_solution: base point too close to the configuration");

  std::vector<cplx> lam(2 * n);
  std::vector<Mat2c> A(2 * n);
  for (int k = 0; k < n; ++k) {
    lam[k] = state.lambda[k];
    lam[n + k] = std::conj(state.lambda[k]);
    A[k] = state.A[k];
    A[n + k] = state.A[k].conjugate();
  }
  double d_min = opt.d_min >= 0.0 ? opt.d_min : 1e-3 * state.diameter();
  for (size_t s = 0; s + 1 < contour.size(); ++s)
    for (int I = 0; I < 2 * n; ++I)
      if (point_segment_distance(lam[I], contour[s], contour[s + 1]) < d_min)
        throw collision_error("fundamental_solution: contour too close to a puncture");

  Mat2c Y = asymptotic_start(A, lam, z0);

  OdeOptions ode;
  ode.rtol = opt.rtol;
  ode.atol = opt.atol;
  double det_err = 0.0;
  Eigen::VectorXcd y(4);
  for (size_t s = 0; s + 1 < contour.size(); ++s) {
    cplx za = contour[s], zb = contour[s + 1];
    if (za == zb) continue;
    y << Y(0, 0), Y(0, 1), Y(1, 0), Y(1, 1);
    auto rhs = [&](double t, const Eigen::VectorXcd& v, Eigen::VectorXcd& dv) {
      cplx z = za + t * (zb - za);
      Mat2c Az = Mat2c::Zero();
      for (int I = 0; I < 2 * n; ++I) Az += A[I] / (z - lam[I]);
      Mat2c M;
      M << v[0], v[1], v[2], v[3];
      Mat2c dM = (zb - za) * (Az * M);
      dv << dM(0, 0), dM(0, 1), dM(1, 0), dM(1, 1);
    };
    integrate_dopri5(rhs, y, 0.0, 1.0, ode);
    Y << y[0], y[1], y[2], y[3];
    det_err = std::max(det_err, std::abs(Y.determinant() - 1.0));
  }
  if (opt.det_error) *opt.det_error = det_err;
  return Y;
}

namespace {

double winding_number(const std::vector<cplx>& poly, cplx p) {
  double total = 0.0;
  for (size_t i = 0; i + 1 < poly.size(); ++i) {
    cplx a = poly[i] - p, b = poly[i + 1] - p;
    total += std::arg(b / a);
  }
  return total / (2.0 * kPi);
}

}  // namespace

Mat2c monodromy(const SchlesingerState& state, int k,
                const ContourOptions& opt) {
  const int n = state.count();
  require(k >= 0 && k < n, "monodromy: index out of range");
  double R0 = opt.base_point > 0.0 ? opt.base_point : contour_base_point(state);
  double xk = state.lambda[k].real(), yk = state.lambda[k].imag();

  double dx_min = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j)
    if (j != k) dx_min = std::min(dx_min, std::abs(state.lambda[j].real() - xk));
  double w = n > 1 ? 0.45 * std::min(dx_min, 4.0 * yk) : 0.75 * yk;
  double y_lo = 0.5 * yk, y_hi = 1.5 * yk;

  std::vector<cplx> loop = {cplx(R0, 0.0),
                            cplx(xk + w, 0.0),
                            cplx(xk + w, y_lo),
                            cplx(xk + w, y_hi),
                            cplx(xk - w, y_hi),
                            cplx(xk - w, y_lo),
                            cplx(xk + w, y_lo),
                            cplx(xk + w, 0.0),
                            cplx(R0, 0.0)};

  // the closed part of the contour must wind once around lambda_k only
  std::vector<cplx> closed(loop.begin() + 2, loop.begin() + 7);
  for (int j = 0; j < n; ++j) {
    double target = j == k ? 1.0 : 0.0;
    double wj = winding_number(closed, state.lambda[j]);
    require(std::abs(wj - target) < 0.25,
            "monodromy: loop does not isolate the requested puncture");
    require(std::abs(winding_number(closed, std::conj(state.lambda[j]))) < 0.25,
            "monodromy: loop winds around a mirror puncture");
  }

  ContourOptions copt = opt;
  double det_err = 0.0;
  if (!copt.det_error) copt.det_error = &det_err;
  Mat2c Y_end = fundamental_solution(state, loop, copt);
  std::vector<Mat2c> A;
  std::vector<cplx> lam;
  for (int j = 0; j < n; ++j) {
    A.push_back(state.A[j]);
    lam.push_back(state.lambda[j]);
    A.push_back(state.A[j].conjugate());
    lam.push_back(std::conj(state.lambda[j]));
  }
  Mat2c Y_start = asymptotic_start(A, lam, cplx(R0, 0.0));
  return Y_end.inverse() * Y_start;
}

SchlesingerState mobius_image(const SchlesingerState& state, double a, double b,
                              double c, double d,
                              const SchlesingerOptions& opt,
                              ConservationStats* track) {
  require(a * d - b * c > 0.0, "mobius_image: need ad - bc > 0");
  std::vector<cplx> images;
  for (const auto& l : state.lambda) {
    cplx den = c * l + d;
    require(std::abs(den) > 1e-9, "mobius_image: image too close to infinity");
    cplx img = (a * l + b) / den;
    require(img.imag() > 1e-12, "mobius_image: image left the upper half-plane");
    images.push_back(img);
  }
  for (size_t i = 0; i < images.size(); ++i)
    for (size_t j = i + 1; j < images.size(); ++j)
      require(std::abs(images[i] - images[j]) > 1e-9,
              "mobius_image: images collide");
  return solve_to(images, state.N, state.eps0, opt, track);
}

std::string state_to_json(const SchlesingerState& st) {
  nlohmann::json j;
  j["eps"] = st.eps0;
  j["log_tau"] = {st.log_tau.real(), st.log_tau.imag()};
  j["lambdas"] = nlohmann::json::array();
  j["A_real"] = nlohmann::json::array();
  j["A_imag"] = nlohmann::json::array();
  j["Ns"] = nlohmann::json::array();
  for (int k = 0; k < st.count(); ++k) {
    j["lambdas"].push_back({st.lambda[k].real(), st.lambda[k].imag()});
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array(),
                   nn = nlohmann::json::array();
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 2; ++col) {
        re.push_back(st.A[k](r, col).real());
        im.push_back(st.A[k](r, col).imag());
        nn.push_back(st.N[k](r, col));
      }
    j["A_real"].push_back(re);
    j["A_imag"].push_back(im);
    j["Ns"].push_back(nn);
  }
  return j.dump(2);
}

}  // namespace ddtau
