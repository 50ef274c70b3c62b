#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace ddtau {

using cplx = std::complex<double>;

// Error taxonomy shared by the C API (mapped to status codes there).
struct invalid_argument_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct singular_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct overflow_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct collision_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct guard_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_argument_error(msg);
}

}  // namespace ddtau
