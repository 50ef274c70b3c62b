#include "core/sle.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <thread>

#include "core/rng.hpp"

namespace ddtau {

namespace {

double min_config_distance(const std::vector<cplx>& lambdas) {
  double d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < lambdas.size(); ++i) {
    d = std::min(d, std::abs(lambdas[i]));  // distance to the seed at 0
    for (size_t j = i + 1; j < lambdas.size(); ++j)
      d = std::min(d, std::abs(lambdas[i] - lambdas[j]));
  }
  return d;
}

uint64_t splitmix_path_seed(uint64_t master, long index) {
  uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(index) + 1));
  return splitmix64(x);
}

}  // namespace

SlePath evolve(const std::vector<cplx>& lambdas, uint64_t seed,
               const SleOptions& opt) {
  require(!lambdas.empty(), "sle: need at least one puncture");
  for (const auto& l : lambdas)
    require(l.imag() > 0.0, "sle: punctures must lie in the upper half-plane");
  double mind = min_config_distance(lambdas);
  require(opt.step <= 1e-3 * mind * mind,
          "sle: step too large for the configuration (h <= 1e-3 d_min^2)");
  require(opt.horizon > 0.0 && opt.step > 0.0, "sle: bad step/horizon");

  double r_min = opt.r_min;
  double min_im = std::numeric_limits<double>::infinity();
  double min_re = std::numeric_limits<double>::infinity(), max_re = -min_re;
  double max_im = 0.0;
  for (const auto& l : lambdas) {
    min_im = std::min(min_im, l.imag());
    max_im = std::max(max_im, l.imag());
    min_re = std::min(min_re, l.real());
    max_re = std::max(max_re, l.real());
  }
  if (r_min <= 0.0) r_min = 0.05 * min_im;
  double margin = opt.window_margin;
  if (margin <= 0.0) margin = std::max(0.5 * (max_re - min_re), 1.5 * max_im);
  const double win_lo = min_re - margin, win_hi = max_re + margin;

  Rng rng(seed);
  SlePath p;
  p.times.push_back(0.0);
  p.driver.push_back(0.0);
  p.lambda.push_back(lambdas);

  double Z = 0.0;
  std::vector<cplx> L = lambdas;
  const double sqkh = std::sqrt(opt.kappa * opt.step);
  long nsteps = static_cast<long>(std::ceil(opt.horizon / opt.step - 1e-12));
  for (long j = 0; j < nsteps; ++j) {
    double h = std::min(opt.step, opt.horizon - j * opt.step);
    // driver refreshed at the start of the step, constant across it
    Z += sqkh * rng.gaussian();
    if (Z < win_lo || Z > win_hi) {
      p.driver_escaped = true;
      break;
    }
    for (auto& lam : L) {
      double remaining = h;
      while (remaining > 0.0) {
        double d2 = std::norm(lam - Z);
        double dt = std::min(remaining, 0.0125 * d2);
        cplx k1 = 2.0 / (lam - Z);
        cplx k2 = 2.0 / (lam + dt * k1 - Z);
        lam += 0.5 * dt * (k1 + k2);
        remaining -= dt;
        if (!(lam.imag() > 0.0))
          throw singular_error("sle: trajectory left the upper half-plane");
      }
    }
    p.times.push_back((j + 1) * opt.step);
    p.driver.push_back(Z);
    p.lambda.push_back(L);
    bool stop = false;
    for (const auto& lam : L)
      if (std::abs(lam - Z) < r_min) stop = true;
    if (stop) {
      p.hit_r_min = true;
      break;
    }
  }
  p.stop_time = p.times.back();
  return p;
}

double MartingaleResult::worst_sigma(double floor_abs) const {
  double worst = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      worst = std::max(worst, std::abs(mean_re(r, c)) /
                                  std::max(se_re(r, c), floor_abs / 3.0));
      worst = std::max(worst, std::abs(mean_im(r, c)) /
                                  std::max(se_im(r, c), floor_abs / 3.0));
    }
  return worst;
}

MartingaleResult martingale_statistic(const SchlesingerState& reference,
                                      long paths, uint64_t seed,
                                      const SleOptions& opt, int threads) {
  require(paths >= 2, "martingale_statistic: need at least 2 paths");
  MartingaleResult res;
  res.paths_requested = paths;
  res.mean_re.setZero();
  res.mean_im.setZero();
  res.se_re.setZero();
  res.se_im.setZero();

  for (const auto& A : reference.A)
    res.max_trace_sq =
        std::max(res.max_trace_sq, std::abs((A * A).trace()));

  // slack over the fresh-state base point: the flow spreads the punctures a
  // little, and every evaluation must stay a valid base point for its state
  double R0 = 1.25 * contour_base_point(reference);
  ContourOptions copt;
  double det_err0 = 0.0;
  copt.det_error = &det_err0;
  Mat2c Y0 = fundamental_solution(reference, {cplx(R0, 0.0), cplx(0.0, 0.0)},
                                  copt);
  cplx tau0 = std::exp(reference.log_tau);
  Mat2c M0 = tau0 * Y0;
  res.m_start = M0;
  res.max_det_dev = std::abs(M0.determinant() - tau0 * tau0);

  struct PathOut {
    bool used = false;
    Mat2c dM = Mat2c::Zero();
    std::array<double, 18> row{};
    double det_dev = 0.0;
    ConservationStats cons;
  };
  std::vector<PathOut> out(paths);

  auto run_one = [&](long i) {
    PathOut& po = out[i];
    SlePath path = evolve(reference.lambda, splitmix_path_seed(seed, i), opt);
    po.row[0] = static_cast<double>(i);
    po.row[1] = path.stop_time;
    if (path.driver_escaped) return;
    try {
      // thin the trajectory to a checkpoint grid (endpoint always kept)
      DeformPath dp;
      long steps = static_cast<long>(path.lambda.size());
      long stride = std::max<long>(1, steps / std::max(1, opt.checkpoints));
      for (long s = 0; s < steps; s += stride) dp.knots.push_back(path.lambda[s]);
      if (dp.knots.back() != path.lambda.back())
        dp.knots.push_back(path.lambda.back());

      SchlesingerOptions sopt;
      SchlesingerState end = deform(reference, dp, sopt, &po.cons);
      double ZT = path.driver.back();
      ContourOptions ce;
      double det_err = 0.0;
      ce.det_error = &det_err;
      Mat2c YT = fundamental_solution(end, {cplx(R0, 0.0), cplx(ZT, 0.0)}, ce);
      cplx tauT = std::exp(end.log_tau);
      Mat2c MT = tauT * YT;
      po.det_dev = std::abs(MT.determinant() - tauT * tauT);
      po.dM = MT - M0;
      po.used = true;
      for (int k = 0; k < 4; ++k) {
        po.row[2 + 2 * k] = M0(k / 2, k % 2).real();
        po.row[3 + 2 * k] = M0(k / 2, k % 2).imag();
        po.row[10 + 2 * k] = MT(k / 2, k % 2).real();
        po.row[11 + 2 * k] = MT(k / 2, k % 2).imag();
      }
    } catch (const collision_error&) {
      po.used = false;
    } catch (const guard_error&) {
      po.used = false;
    }
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (long i = 0; i < paths; ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    long chunk = (paths + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      long lo = t * chunk, hi = std::min(paths, (t + 1) * chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (long i = lo; i < hi; ++i) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  long used = 0;
  Eigen::Matrix2d sum_re = Eigen::Matrix2d::Zero(),
                  sum_im = Eigen::Matrix2d::Zero();
  for (const auto& po : out) {
    if (!po.used) continue;
    ++used;
    res.max_det_dev = std::max(res.max_det_dev, po.det_dev);
    res.conservation.merge(po.cons);
    sum_re += po.dM.real();
    sum_im += po.dM.imag();
    res.rows.push_back(po.row);
  }
  if (used < 2)
    throw guard_error("martingale_statistic: fewer than 2 usable paths");
  res.paths_used = used;
  res.discarded = paths - used;
  res.discard_fraction = static_cast<double>(res.discarded) / paths;
  res.mean_re = sum_re / used;
  res.mean_im = sum_im / used;

  Eigen::Matrix2d var_re = Eigen::Matrix2d::Zero(),
                  var_im = Eigen::Matrix2d::Zero();
  for (const auto& po : out) {
    if (!po.used) continue;
    Eigen::Matrix2d dre = po.dM.real() - res.mean_re;
    Eigen::Matrix2d dim = po.dM.imag() - res.mean_im;
    var_re += dre.cwiseProduct(dre);
    var_im += dim.cwiseProduct(dim);
  }
  if (used > 1) {
    res.se_re = (var_re / (used - 1) / used).cwiseSqrt();
    res.se_im = (var_im / (used - 1) / used).cwiseSqrt();
  }
  return res;
}

}  // namespace ddtau
