#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "core/common.hpp"

namespace ddtau {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  // 0: choose from the interval
  long max_steps = 4000000;
};

// Dormand-Prince 5(4) embedded pair with standard PI-free step control.
// `rhs(s, y, dy)` evaluates the derivative; `cap(s, y)` bounds the next step
// size (return +inf for no cap); `on_accept(s, y)` observes accepted states.
template <typename Rhs, typename Cap, typename Observer>
void integrate_dopri5(Rhs&& rhs, Eigen::VectorXcd& y, double s0, double s1,
                      const OdeOptions& opt, Cap&& cap, Observer&& on_accept) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113,
                          a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                          c5 = 8.0 / 9;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double span = s1 - s0;
  if (span <= 0.0) return;
  const long n = y.size();
  Eigen::VectorXcd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n),
      ynew(n);

  double s = s0;
  double h = opt.h_init > 0.0 ? opt.h_init : span / 100.0;
  rhs(s, y, k1);
  long steps = 0;
  while (s < s1) {
    if (++steps > opt.max_steps)
      throw guard_error("ode: step budget exhausted");
    h = std::min(h, s1 - s);
    h = std::min(h, cap(s, y));
    if (!(h > 1e-14 * std::max(1.0, std::abs(span))))
      throw guard_error("ode: step size collapsed");

    yt = y + h * a21 * k1;
    rhs(s + c2 * h, yt, k2);
    yt = y + h * (a31 * k1 + a32 * k2);
    rhs(s + c3 * h, yt, k3);
    yt = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(s + c4 * h, yt, k4);
    yt = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(s + c5 * h, yt, k5);
    yt = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(s + h, yt, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(s + h, ynew, k7);

    double err = 0.0;
    for (long i = 0; i < n; ++i) {
      cplx e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                    e6 * k6[i] + e7 * k7[i]);
      double sc = opt.atol +
                  opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      double q = std::abs(e) / sc;
      err += q * q;
    }
    err = std::sqrt(err / n);

    if (err <= 1.0) {
      s += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      on_accept(s, y);
    }
    double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 10.0;
    h *= std::min(10.0, std::max(0.2, fac));
  }
}

template <typename Rhs>
void integrate_dopri5(Rhs&& rhs, Eigen::VectorXcd& y, double s0, double s1,
                      const OdeOptions& opt = {}) {
  integrate_dopri5(
      std::forward<Rhs>(rhs), y, s0, s1, opt,
      [](double, const Eigen::VectorXcd&) {
        return std::numeric_limits<double>::infinity();
      },
      [](double, const Eigen::VectorXcd&) {});
}

}  // namespace ddtau
