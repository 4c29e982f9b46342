#pragma once

#include "distloc/types.hpp"

#include <functional>
#include <vector>

namespace distloc {

/// Linear Gaussian transition x_n = A x_{n-1} + b + B v_n with v ~ N(0, Qtilde).
struct MotionModel {
  Mat A;
  Mat B;
  Mat Qtilde;
  Vec b;
  Scalar tau = 0.0;
  Scalar sigma_x = 0.0;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int noise_dim() const { return static_cast<int>(B.cols()); }

  /// Full-state process noise covariance Q = B Qtilde B^T (may be singular).
  Mat process_noise() const { return B * Qtilde * B.transpose(); }
};

/// Constant-velocity model on [x, vx, y, vy] with driving noise on the
/// accelerations. Throws std::invalid_argument for tau < 0 or sigma_x < 0;
/// tau = 0 degenerates to the identity (test use only).
MotionModel build_cv_model(Scalar tau, Scalar sigma_x);

/// One-dimensional model with scalar A, B, Qtilde (chain benchmark).
MotionModel build_scalar_model(Scalar a, Scalar b_gain, Scalar qtilde);

struct ObservationModel {
  enum class Kind { Linear, Bearings };
  Kind kind = Kind::Linear;
  Mat C;             // Linear only
  Vec d;             // Linear only, defaults to zero
  Mat R;             // noise covariance, both kinds
  Scalar sigma_w = 0.0;  // Bearings noise std (R = [sigma_w^2])

  int obs_dim() const { return static_cast<int>(R.rows()); }
};

/// Indices of the position components inside the state vector:
/// {0, 2, ...} for interleaved position/velocity states, {0} for scalar.
std::vector<int> position_components(int state_dim);

/// Selection matrix E (state_dim x p) whose columns pick the free (position)
/// components of a localization offset.
Mat free_component_mask(int state_dim);

/// y = alpha * positions(x) + noise, the linear observer used throughout.
ObservationModel make_position_observer(Scalar alpha, Scalar sigma_y, int state_dim);

/// y = atan2(x(0), x(2)) + noise. Defined for the 4-dimensional state.
ObservationModel make_bearings_observer(Scalar sigma_w);

/// Noise-free measurement h(x). Throws SingularGeometryError for a bearings
/// model when the target sits exactly at the node origin; elsewhere the
/// two-argument arctangent resolves the quadrant.
Vec observation_mean(const ObservationModel& obs, const Vec& x_local);

/// One noisy measurement of a local-frame state.
Vec observe(const ObservationModel& obs, const Vec& x_local, Rng& rng);

/// Sequence x_1..x_steps from x0 under the motion model; deterministic given
/// the generator state.
std::vector<Vec> simulate_target(const MotionModel& model, int steps, const Vec& x0, Rng& rng);
std::vector<Vec> simulate_target(const MotionModel& model, int steps, const Vec& x0,
                                 std::uint64_t rng_seed);

struct Linearization {
  Mat C_eff;
  Vec d_eff;
};

/// First-order expansion of the measurement function about mu_pred:
/// h(x) ~= C_eff x + d_eff. Linear models pass through unchanged.
Linearization linearize_observation(const ObservationModel& obs, const Vec& mu_pred);

struct TransitionLin {
  Mat A_eff;
  Vec b_eff;
};

/// Identity pass-through for the built-in linear transition.
TransitionLin linearize_transition(const MotionModel& model, const Vec& mu_filt);

/// General form for a smooth map phi with Jacobian jac:
/// A_eff = jac(mu), b_eff = phi(mu) - A_eff mu. Exact for affine maps.
TransitionLin linearize_transition(const std::function<Vec(const Vec&)>& phi,
                                   const std::function<Mat(const Vec&)>& jac,
                                   const Vec& mu_filt);

}  // namespace distloc
