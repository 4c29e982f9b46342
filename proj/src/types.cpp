#include "distloc/types.hpp"

#include <cmath>

namespace distloc {

Mat spd_inverse(const Mat& m, const std::string& context) {
  Eigen::LLT<Mat> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("singular or non-positive-definite " + context);
  }
  Mat inv = llt.solve(Mat::Identity(m.rows(), m.cols()));
  return symmetrized(inv);
}

Mat spd_solve(const Mat& m, const Mat& rhs, const std::string& context) {
  Eigen::LLT<Mat> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("singular or non-positive-definite " + context);
  }
  return llt.solve(rhs);
}

Scalar Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0,1] so the log is finite, u2 in [0,1).
  const Scalar u1 = (static_cast<Scalar>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  const Scalar u2 = static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53;
  const Scalar r = std::sqrt(-2.0 * std::log(u1));
  const Scalar t = 2.0 * M_PI * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Vec Rng::normal_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Scalar Rng::uniform() {
  return static_cast<Scalar>(engine_() >> 11) * 0x1.0p-53;
}

Scalar Rng::uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 mix of the combined value
  std::uint64_t x = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace distloc
