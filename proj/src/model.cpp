#include "distloc/model.hpp"

#include <cmath>
#include <stdexcept>

namespace distloc {

MotionModel build_cv_model(Scalar tau, Scalar sigma_x) {
  if (tau < 0.0) throw std::invalid_argument("build_cv_model: tau must be non-negative");
  if (sigma_x < 0.0) throw std::invalid_argument("build_cv_model: sigma_x must be non-negative");
  MotionModel m;
  m.tau = tau;
  m.sigma_x = sigma_x;
  m.A = Mat::Identity(4, 4);
  m.A(0, 1) = tau;
  m.A(2, 3) = tau;
  m.B = Mat::Zero(4, 2);
  m.B(0, 0) = 0.5 * tau * tau;
  m.B(1, 0) = tau;
  m.B(2, 1) = 0.5 * tau * tau;
  m.B(3, 1) = tau;
  m.Qtilde = sigma_x * sigma_x * Mat::Identity(2, 2);
  m.b = Vec::Zero(4);
  return m;
}

MotionModel build_scalar_model(Scalar a, Scalar b_gain, Scalar qtilde) {
  MotionModel m;
  m.sigma_x = std::sqrt(qtilde);
  m.A = Mat::Constant(1, 1, a);
  m.B = Mat::Constant(1, 1, b_gain);
  m.Qtilde = Mat::Constant(1, 1, qtilde);
  m.b = Vec::Zero(1);
  return m;
}

std::vector<int> position_components(int state_dim) {
  if (state_dim == 1) return {0};
  if (state_dim >= 2 && state_dim % 2 == 0) {
    std::vector<int> idx;
    for (int i = 0; i < state_dim; i += 2) idx.push_back(i);
    return idx;
  }
  throw std::invalid_argument("position_components: unsupported state dimension");
}

Mat free_component_mask(int state_dim) {
  const auto idx = position_components(state_dim);
  Mat mask = Mat::Zero(state_dim, static_cast<int>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) mask(idx[c], static_cast<int>(c)) = 1.0;
  return mask;
}

ObservationModel make_position_observer(Scalar alpha, Scalar sigma_y, int state_dim) {
  if (sigma_y <= 0.0) throw std::invalid_argument("make_position_observer: sigma_y must be positive");
  const auto idx = position_components(state_dim);
  ObservationModel obs;
  obs.kind = ObservationModel::Kind::Linear;
  obs.C = Mat::Zero(static_cast<int>(idx.size()), state_dim);
  for (std::size_t r = 0; r < idx.size(); ++r) obs.C(static_cast<int>(r), idx[r]) = alpha;
  obs.d = Vec::Zero(static_cast<int>(idx.size()));
  obs.R = sigma_y * sigma_y * Mat::Identity(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
  return obs;
}

ObservationModel make_bearings_observer(Scalar sigma_w) {
  if (sigma_w <= 0.0) throw std::invalid_argument("make_bearings_observer: sigma_w must be positive");
  ObservationModel obs;
  obs.kind = ObservationModel::Kind::Bearings;
  obs.sigma_w = sigma_w;
  obs.R = Mat::Constant(1, 1, sigma_w * sigma_w);
  return obs;
}

Vec observation_mean(const ObservationModel& obs, const Vec& x_local) {
  if (obs.kind == ObservationModel::Kind::Linear) {
    return obs.C * x_local + obs.d;
  }
  const Scalar x1 = x_local(0);
  const Scalar x3 = x_local(2);
  if (x1 == 0.0 && x3 == 0.0) {
    throw SingularGeometryError("bearing undefined: target at node origin");
  }
  return Vec::Constant(1, std::atan2(x1, x3));
}

Vec observe(const ObservationModel& obs, const Vec& x_local, Rng& rng) {
  Vec y = observation_mean(obs, x_local);
  if (obs.kind == ObservationModel::Kind::Linear) {
    // R is diagonal in every scenario we build; draw componentwise.
    for (int i = 0; i < y.size(); ++i) y(i) += std::sqrt(obs.R(i, i)) * rng.normal();
  } else {
    y(0) += obs.sigma_w * rng.normal();
  }
  return y;
}

std::vector<Vec> simulate_target(const MotionModel& model, int steps, const Vec& x0, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("simulate_target: steps must be >= 1");
  // PSD square root of Qtilde so degenerate noise (sigma_x = 0) is exact.
  Eigen::SelfAdjointEigenSolver<Mat> es(model.Qtilde);
  const Mat noise_root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::vector<Vec> traj;
  traj.reserve(steps);
  Vec x = x0;
  for (int n = 0; n < steps; ++n) {
    x = model.A * x + model.b + model.B * (noise_root * rng.normal_vec(model.noise_dim()));
    traj.push_back(x);
  }
  return traj;
}

std::vector<Vec> simulate_target(const MotionModel& model, int steps, const Vec& x0,
                                 std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return simulate_target(model, steps, x0, rng);
}

Linearization linearize_observation(const ObservationModel& obs, const Vec& mu_pred) {
  if (obs.kind == ObservationModel::Kind::Linear) {
    return {obs.C, obs.d};
  }
  const Scalar x1 = mu_pred(0);
  const Scalar x3 = mu_pred(2);
  const Scalar r2 = x1 * x1 + x3 * x3;
  if (r2 == 0.0) {
    throw SingularGeometryError("bearing linearization undefined: predicted mean at node origin");
  }
  Mat C = Mat::Zero(1, mu_pred.size());
  C(0, 0) = x3 / r2;
  C(0, 2) = -x1 / r2;
  Vec d = Vec::Constant(1, std::atan2(x1, x3)) - C * mu_pred;
  return {C, d};
}

TransitionLin linearize_transition(const MotionModel& model, const Vec& /*mu_filt*/) {
  return {model.A, model.b};
}

TransitionLin linearize_transition(const std::function<Vec(const Vec&)>& phi,
                                   const std::function<Mat(const Vec&)>& jac,
                                   const Vec& mu_filt) {
  Mat A_eff = jac(mu_filt);
  Vec b_eff = phi(mu_filt) - A_eff * mu_filt;
  return {A_eff, b_eff};
}

}  // namespace distloc
