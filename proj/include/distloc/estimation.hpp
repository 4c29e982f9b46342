#pragma once

#include "distloc/filter.hpp"
#include "distloc/messaging.hpp"
#include "distloc/network.hpp"
#include "distloc/types.hpp"

#include <optional>
#include <vector>

namespace distloc {

/// gamma_n = gamma0 for n <= hold_until, then gamma0 (n - hold_until)^-decay.
/// decay_exponent in (0.5, 1] keeps sum(gamma) = inf, sum(gamma^2) < inf.
struct StepSchedule {
  Scalar gamma0 = 1e-2;
  long hold_until = 0;
  Scalar decay_exponent = 0.8;
};

Scalar step_size(const StepSchedule& schedule, long n);

/// Whether the M-step applies at time n; statistics accumulate regardless.
inline bool burn_in_gate(long n, long burn_in) { return n > burn_in; }

/// Gradient intermediates for one directed edge (r,j), all state_dim x p.
struct RmlEdgeState {
  Mat mu_dot;
  Mat mu_dot_pred;
  Mat z_dot;
};

RmlEdgeState make_rml_state(int state_dim, int free_dim);

/// One recursion of the per-edge derivative states against node r's filter
/// quantities and the round-K message from j, returning the likelihood
/// gradient in free coordinates. Mutates the derivative states.
Vec rml_gradient_step(RmlEdgeState& edge, const NodeFilterState& node_r, const Mat& A_eff,
                      const MessageTriple& from_j, const Mat& mask);

/// Running sufficient statistics for one directed edge (r,j).
struct EmEdgeState {
  Mat H;
  Vec h;
  Vec S1;
  Mat S2;
  Vec S3;
};

EmEdgeState make_em_state(int state_dim);

/// Covariance of the backward conditional p(x_{n-1} | Y_{1:n-1}, x_n),
/// (Sigma_prev^-1 + A^T Q^-1 A)^-1, evaluated in downdate form so a
/// singular process noise Q is handled whenever A Sigma A^T + Q is
/// invertible. Throws NumericalError otherwise.
Mat em_sigma_tilde(const Mat& Sigma_prev, const Mat& A, const Mat& Q);

/// Node-level pieces of the backward conditional shared by every edge of
/// node r at time n: gain = Sigma_tilde A^T Q^-1 = Sigma_prev A^T
/// Sigma_pred^-1 and the constant part of the conditional mean.
struct EmNodeContext {
  Mat gain;
  Vec mean_shift;  // mu_prev - gain * mu_pred
};

EmNodeContext em_node_context(const NodeFilterState& now, const NodeFilterState& prev,
                              const Mat& A_eff);

/// One recursion of H, h and the running statistics S1..S3 with step size
/// gamma. theta_rj is the current estimate entering the mddot correction.
void em_stats_step(EmEdgeState& edge, const EmNodeContext& ctx, const Vec& mu_now,
                   const MessageTriple& from_j, const Vec& theta_rj, Scalar gamma);

/// Masked M-step: solves (E^T S2 E) f = E^T (S3 - S1) and embeds through
/// the mask. Returns nullopt when the masked subsystem is (near) singular;
/// callers retain the previous estimate and count the skip.
std::optional<Vec> em_mstep(const Vec& S1, const Mat& S2, const Vec& S3, const Mat& mask);

/// Drives the per-edge estimators over a network filter, one call per time
/// step after NetworkFilter::step. Owns all edge states; writes only
/// theta^{r,j} entries through the mask.
class EstimatorBank {
 public:
  enum class Kind { None, Rml, Em };

  EstimatorBank(Kind kind, const Topology& t, const Mat& mask, StepSchedule schedule,
                long burn_in);

  void update(long n, const NetworkFilter& filter, LocalizationParams& theta);

  long skipped_msteps() const { return skipped_msteps_; }

 private:
  Kind kind_;
  Mat mask_;
  StepSchedule schedule_;
  long burn_in_;
  std::vector<RmlEdgeState> rml_;
  std::vector<EmEdgeState> em_;
  long skipped_msteps_ = 0;
};

struct OfflineEmDiagnostics {
  long skipped_msteps = 0;
};

/// One batch EM iteration in the distributed-statistics form: a forward
/// filter pass at fixed theta_p, per-node backward smoothing, then the
/// masked per-edge normal-equation solve. Linear observation models only.
LocalizationParams offline_em_iteration(const Topology& t, const MotionModel& motion,
                                        const std::vector<ObservationModel>& observers,
                                        const std::vector<std::vector<Vec>>& observations,
                                        const LocalizationParams& theta_p,
                                        const std::vector<Vec>& mu0, Scalar kappa, int rounds,
                                        OfflineEmDiagnostics* diag = nullptr);

/// Classical batch EM over the reference-node model: smooths in one frame,
/// solves per-node offsets exactly, and rebuilds edge parameters from
/// offset differences. Monotone in the reference-node batch likelihood.
LocalizationParams centralized_em_iteration(const Topology& t, const MotionModel& motion,
                                            const std::vector<ObservationModel>& observers,
                                            const std::vector<std::vector<Vec>>& observations,
                                            const LocalizationParams& theta_p, int reference,
                                            const Vec& mu0_ref, Scalar kappa);

/// Batch log-likelihood of the observations under the reference-node
/// stacked model at fixed theta.
Scalar batch_log_likelihood(const Topology& t, const MotionModel& motion,
                            const std::vector<ObservationModel>& observers,
                            const std::vector<std::vector<Vec>>& observations,
                            const LocalizationParams& theta, int reference, const Vec& mu0_ref,
                            Scalar kappa);

}  // namespace distloc
