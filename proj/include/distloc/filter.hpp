#pragma once

#include "distloc/messaging.hpp"
#include "distloc/model.hpp"
#include "distloc/network.hpp"
#include "distloc/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace distloc {

/// Per-node filtering state in information form. After update(),
/// Sigma = M^-1 and mu = M^-1 z; covariances are re-symmetrized after
/// every inversion.
struct NodeFilterState {
  Vec mu;
  Mat Sigma;
  Vec mu_pred;
  Mat Sigma_pred;
  Mat Sigma_pred_inv;
  Mat M;
  Vec z;
};

NodeFilterState make_prior_state(const Vec& mu0, Scalar kappa);

/// mu_pred = A mu + b, Sigma_pred = A Sigma A^T + Q.
void predict(NodeFilterState& s, const Mat& A_eff, const Vec& b_eff, const Mat& Q);

/// Information-form update with the node's own terms plus the round-K
/// triples received from its neighbors. Throws NumericalError when the
/// posterior precision is singular.
void update(NodeFilterState& s, const LocalTerms& local,
            const std::vector<const MessageTriple*>& from_neighbors);

struct NonlinearTransition {
  std::function<Vec(const Vec&)> phi;
  std::function<Mat(const Vec&)> jacobian;
};

/// One filtering time step for the whole network: per-node predict, local
/// term computation (with linearization in EKF mode), K synchronous message
/// rounds, per-node update. Owns one NodeFilterState per node.
class NetworkFilter {
 public:
  enum class Mode { Linear, Ekf };

  NetworkFilter(Topology topology, MotionModel motion, std::vector<ObservationModel> observers,
                std::vector<Vec> mu0, Scalar kappa, int rounds, Mode mode = Mode::Linear);

  void set_transition(NonlinearTransition transition) { transition_ = std::move(transition); }

  /// Advances time by one step with observations y (local frames) under the
  /// current localization estimates.
  void step(const std::vector<Vec>& y, const LocalizationParams& theta);

  const Topology& topology() const { return topology_; }
  const MotionModel& motion() const { return motion_; }
  int rounds() const { return rounds_; }
  long steps_done() const { return steps_done_; }

  const NodeFilterState& node(int r) const { return states_[r]; }
  /// Filtered state at the previous time step (what the estimators need).
  const NodeFilterState& previous(int r) const { return previous_[r]; }
  const MessageBoard& board() const { return board_; }
  const LocalTerms& local_terms(int r) const { return local_[r]; }
  /// Effective transition used in the last predict (EKF Jacobian or A).
  const Mat& transition_matrix(int r) const { return A_eff_[r]; }
  const Vec& transition_offset(int r) const { return b_eff_[r]; }

 private:
  Topology topology_;
  MotionModel motion_;
  Mat Q_;
  std::vector<ObservationModel> observers_;
  Mode mode_;
  int rounds_;
  long steps_done_ = 0;
  std::optional<NonlinearTransition> transition_;
  std::vector<NodeFilterState> states_;
  std::vector<NodeFilterState> previous_;
  std::vector<LocalTerms> local_;
  std::vector<Mat> A_eff_;
  std::vector<Vec> b_eff_;
  MessageBoard board_;
};

/// Forward moments kept per step for smoothing and likelihood work.
struct ForwardMoments {
  Vec mu;
  Mat Sigma;
  Vec mu_pred;
  Mat Sigma_pred;
};

struct SmoothedMoments {
  Vec mu;
  Mat Sigma;
};

/// Standard backward recursion over a stored forward pass (time-invariant
/// transition). forward[n].Sigma_pred is the covariance predicted *into*
/// step n.
std::vector<SmoothedMoments> rts_smooth(const std::vector<ForwardMoments>& forward, const Mat& A);

/// Full-network stacked-model Kalman filter in one reference node's frame,
/// with a log-likelihood accumulator. Test/oracle privilege: it sees every
/// observation model and offsets all nodes via path sums of theta. Linear
/// observation models only.
class CentralizedFilter {
 public:
  CentralizedFilter(Topology topology, MotionModel motion,
                    std::vector<ObservationModel> observers, int reference, const Vec& mu0_ref,
                    Scalar kappa);

  void step(const std::vector<Vec>& y, const LocalizationParams& theta);

  int reference() const { return reference_; }
  Scalar last_log_likelihood() const { return last_loglik_; }
  Scalar total_log_likelihood() const { return total_loglik_; }
  const Vec& mu() const { return current_.mu; }
  const Mat& Sigma() const { return current_.Sigma; }
  const std::vector<ForwardMoments>& history() const { return history_; }

 private:
  Topology topology_;
  MotionModel motion_;
  Mat Q_;
  std::vector<ObservationModel> observers_;
  int reference_;
  std::vector<std::vector<int>> paths_;  // reference -> each node
  ForwardMoments current_;
  std::vector<ForwardMoments> history_;
  Scalar last_loglik_ = 0.0;
  Scalar total_loglik_ = 0.0;
};

}  // namespace distloc
