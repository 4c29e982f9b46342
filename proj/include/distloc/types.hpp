#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace distloc {

using Scalar = double;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Raised when a matrix the algorithms require to be invertible is not.
/// Runs abort on these rather than regularizing silently.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the bearings model when the geometry has no defined bearing.
class SingularGeometryError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline Mat symmetrized(const Mat& m) {
  return (0.5 * (m + m.transpose())).eval();
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Throws NumericalError naming `context` when the factorization fails.
Mat spd_inverse(const Mat& m, const std::string& context = "matrix");

/// Cholesky solve against an SPD matrix.
Mat spd_solve(const Mat& m, const Mat& rhs, const std::string& context = "matrix");

/// Deterministic normal/uniform source: mt19937_64 feeding an explicit
/// Box-Muller transform, so a seed fixes the draw sequence independent of
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Scalar normal();
  Vec normal_vec(int n);
  Scalar uniform();  // [0, 1)
  Scalar uniform(Scalar lo, Scalar hi);
  int uniform_int(int lo, int hi);  // inclusive bounds

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  Scalar spare_ = 0.0;
};

/// Stable sub-seed derivation for independent streams (runs, model setup).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace distloc
