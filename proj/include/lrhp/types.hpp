#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lrhp {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using VectorXf = Vector<float>;

using TokenId = std::int32_t;

/// Coarse failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  parse,
  validation,
  invalid_request,
  io,
  corruption,
  version,
  divergence,
  undefined,
};

const char* category_name(ErrorCategory c);
int exit_code(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) { throw Error(c, what); }

inline void require(bool cond, ErrorCategory c, const std::string& what) {
  if (!cond) fail(c, what);
}

inline void require(bool cond, ErrorCategory c, const char* what) {
  if (!cond) fail(c, what);
}

}  // namespace lrhp
