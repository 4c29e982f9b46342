#include "distloc/estimation.hpp"

#include <cmath>
#include <stdexcept>

namespace distloc {

Scalar step_size(const StepSchedule& schedule, long n) {
  if (n < 1) throw std::invalid_argument("step_size: n must be >= 1");
  if (n <= schedule.hold_until) return schedule.gamma0;
  return schedule.gamma0 *
         std::pow(static_cast<Scalar>(n - schedule.hold_until), -schedule.decay_exponent);
}

RmlEdgeState make_rml_state(int state_dim, int free_dim) {
  RmlEdgeState s;
  s.mu_dot = Mat::Zero(state_dim, free_dim);
  s.mu_dot_pred = Mat::Zero(state_dim, free_dim);
  s.z_dot = Mat::Zero(state_dim, free_dim);
  return s;
}

Vec rml_gradient_step(RmlEdgeState& edge, const NodeFilterState& node_r, const Mat& A_eff,
                      const MessageTriple& from_j, const Mat& mask) {
  edge.mu_dot_pred = A_eff * edge.mu_dot;
  edge.z_dot = node_r.Sigma_pred_inv * edge.mu_dot_pred - from_j.m * mask;
  edge.mu_dot = node_r.Sigma * edge.z_dot;  // Sigma = M^-1
  Vec grad = -edge.mu_dot_pred.transpose() * (node_r.Sigma_pred_inv * node_r.mu_pred);
  grad += edge.z_dot.transpose() * node_r.mu;  // mu = M^-1 z
  grad += mask.transpose() * (from_j.mdot - from_j.mddot);
  return grad;
}

EmEdgeState make_em_state(int state_dim) {
  EmEdgeState s;
  s.H = Mat::Zero(state_dim, state_dim);
  s.h = Vec::Zero(state_dim);
  s.S1 = Vec::Zero(state_dim);
  s.S2 = Mat::Zero(state_dim, state_dim);
  s.S3 = Vec::Zero(state_dim);
  return s;
}

Mat em_sigma_tilde(const Mat& Sigma_prev, const Mat& A, const Mat& Q) {
  const Mat pred = symmetrized(A * Sigma_prev * A.transpose() + Q);
  const Mat gain = Sigma_prev * A.transpose() *
                   spd_inverse(pred, "A Sigma A^T + Q (is Q singular with A = 0?)");
  return symmetrized(Sigma_prev - gain * A * Sigma_prev);
}

EmNodeContext em_node_context(const NodeFilterState& now, const NodeFilterState& prev,
                              const Mat& A_eff) {
  EmNodeContext ctx;
  ctx.gain = prev.Sigma * A_eff.transpose() * now.Sigma_pred_inv;
  ctx.mean_shift = prev.mu - ctx.gain * now.mu_pred;
  return ctx;
}

void em_stats_step(EmEdgeState& edge, const EmNodeContext& ctx, const Vec& mu_now,
                   const MessageTriple& from_j, const Vec& theta_rj, Scalar gamma) {
  const Vec h_carry = edge.H * ctx.mean_shift + edge.h;  // needs H_{n-1}
  edge.H = gamma * from_j.m.transpose() + (1.0 - gamma) * edge.H * ctx.gain;
  edge.h = (1.0 - gamma) * h_carry;
  edge.S1 = edge.H * mu_now + edge.h;
  edge.S2 = gamma * from_j.m + (1.0 - gamma) * edge.S2;
  edge.S3 = gamma * (from_j.mdot - from_j.mddot + from_j.m * theta_rj) + (1.0 - gamma) * edge.S3;
}

std::optional<Vec> em_mstep(const Vec& S1, const Mat& S2, const Vec& S3, const Mat& mask) {
  const Mat normal = symmetrized(mask.transpose() * S2 * mask);
  Eigen::SelfAdjointEigenSolver<Mat> es(normal);
  const Scalar lambda_max = es.eigenvalues().maxCoeff();
  const Scalar lambda_min = es.eigenvalues().minCoeff();
  if (!(lambda_min > 1e-12 * std::max(1.0, lambda_max))) {
    return std::nullopt;
  }
  const Vec rhs = mask.transpose() * (S3 - S1);
  const Vec free = es.eigenvectors() *
                   (es.eigenvectors().transpose() * rhs).cwiseQuotient(es.eigenvalues());
  return mask * free;
}

EstimatorBank::EstimatorBank(Kind kind, const Topology& t, const Mat& mask,
                             StepSchedule schedule, long burn_in)
    : kind_(kind), mask_(mask), schedule_(schedule), burn_in_(burn_in) {
  const int state_dim = static_cast<int>(mask.rows());
  const int free_dim = static_cast<int>(mask.cols());
  if (kind_ == Kind::Rml) {
    rml_.resize(t.num_directed_edges());
    for (auto& s : rml_) s = make_rml_state(state_dim, free_dim);
  } else if (kind_ == Kind::Em) {
    em_.resize(t.num_directed_edges());
    for (auto& s : em_) s = make_em_state(state_dim);
  }
}

void EstimatorBank::update(long n, const NetworkFilter& filter, LocalizationParams& theta) {
  if (kind_ == Kind::None) return;
  const Topology& t = filter.topology();
  const Scalar gamma = step_size(schedule_, n);

  if (kind_ == Kind::Rml) {
    for (const auto& [r, j] : t.directed_edges()) {
      const int idx = t.directed_edge_index(r, j);
      const MessageTriple& from_j = filter.board().at(t, j, r);
      const Vec grad =
          rml_gradient_step(rml_[idx], filter.node(r), filter.transition_matrix(r), from_j, mask_);
      theta.set_free(r, j, theta.free_at(r, j) + gamma * grad);
    }
    return;
  }

  std::vector<EmNodeContext> ctx(t.num_nodes());
  for (int r = 0; r < t.num_nodes(); ++r) {
    ctx[r] = em_node_context(filter.node(r), filter.previous(r), filter.transition_matrix(r));
  }
  for (const auto& [r, j] : t.directed_edges()) {
    const int idx = t.directed_edge_index(r, j);
    const MessageTriple& from_j = filter.board().at(t, j, r);
    em_stats_step(em_[idx], ctx[r], filter.node(r).mu, from_j, theta.at(r, j), gamma);
    if (!burn_in_gate(n, burn_in_)) continue;
    const auto next = em_mstep(em_[idx].S1, em_[idx].S2, em_[idx].S3, mask_);
    if (next) {
      theta.set(r, j, *next);
    } else {
      ++skipped_msteps_;
    }
  }
}

namespace {

struct BatchPass {
  std::vector<std::vector<ForwardMoments>> forward;        // [node][step]
  std::vector<std::vector<MessageTriple>> triples;         // [step][directed edge]
};

BatchPass forward_pass(const Topology& t, const MotionModel& motion,
                       const std::vector<ObservationModel>& observers,
                       const std::vector<std::vector<Vec>>& observations,
                       const LocalizationParams& theta_p, const std::vector<Vec>& mu0,
                       Scalar kappa, int rounds) {
  NetworkFilter filter(t, motion, observers, mu0, kappa, rounds);
  BatchPass pass;
  pass.forward.resize(t.num_nodes());
  for (const auto& y : observations) {
    filter.step(y, theta_p);
    for (int r = 0; r < t.num_nodes(); ++r) {
      const NodeFilterState& s = filter.node(r);
      pass.forward[r].push_back({s.mu, s.Sigma, s.mu_pred, s.Sigma_pred});
    }
    std::vector<MessageTriple> step_triples;
    step_triples.reserve(t.num_directed_edges());
    for (const auto& [i, j] : t.directed_edges()) step_triples.push_back(filter.board().at(t, i, j));
    pass.triples.push_back(std::move(step_triples));
  }
  return pass;
}

}  // namespace

LocalizationParams offline_em_iteration(const Topology& t, const MotionModel& motion,
                                        const std::vector<ObservationModel>& observers,
                                        const std::vector<std::vector<Vec>>& observations,
                                        const LocalizationParams& theta_p,
                                        const std::vector<Vec>& mu0, Scalar kappa, int rounds,
                                        OfflineEmDiagnostics* diag) {
  const Mat& mask = theta_p.mask();
  const BatchPass pass =
      forward_pass(t, motion, observers, observations, theta_p, mu0, kappa, rounds);
  std::vector<std::vector<SmoothedMoments>> smoothed(t.num_nodes());
  for (int r = 0; r < t.num_nodes(); ++r) smoothed[r] = rts_smooth(pass.forward[r], motion.A);

  LocalizationParams theta_next = theta_p;
  const long T = static_cast<long>(observations.size());
  for (const auto& [r, j] : t.directed_edges()) {
    const int in_idx = t.directed_edge_index(j, r);
    Mat S2 = Mat::Zero(theta_p.state_dim(), theta_p.state_dim());
    Vec S1 = Vec::Zero(theta_p.state_dim());
    Vec S3 = Vec::Zero(theta_p.state_dim());
    for (long n = 0; n < T; ++n) {
      const MessageTriple& from_j = pass.triples[n][in_idx];
      S2 += from_j.m;
      S1 += from_j.m.transpose() * smoothed[r][n].mu;
      S3 += from_j.mdot - from_j.mddot + from_j.m * theta_p.at(r, j);
    }
    const auto next = em_mstep(S1, S2, S3, mask);
    if (next) {
      theta_next.set(r, j, *next);
    } else if (diag) {
      ++diag->skipped_msteps;
    }
  }
  return theta_next;
}

LocalizationParams centralized_em_iteration(const Topology& t, const MotionModel& motion,
                                            const std::vector<ObservationModel>& observers,
                                            const std::vector<std::vector<Vec>>& observations,
                                            const LocalizationParams& theta_p, int reference,
                                            const Vec& mu0_ref, Scalar kappa) {
  const Mat& mask = theta_p.mask();
  CentralizedFilter filter(t, motion, observers, reference, mu0_ref, kappa);
  for (const auto& y : observations) filter.step(y, theta_p);
  const auto smoothed = rts_smooth(filter.history(), motion.A);

  // Exact per-node M-step for the offsets theta^{ref,v}, then edge
  // parameters as offset differences (path-consistent by construction).
  const long T = static_cast<long>(observations.size());
  std::vector<Vec> offsets(t.num_nodes(), Vec::Zero(theta_p.state_dim()));
  for (int v = 0; v < t.num_nodes(); ++v) {
    if (v == reference) continue;
    const Mat Rinv = spd_inverse(observers[v].R, "observation noise covariance");
    const Mat F = observers[v].C.transpose() * Rinv * observers[v].C;
    Mat S2 = Mat::Zero(theta_p.state_dim(), theta_p.state_dim());
    Vec rhs = Vec::Zero(theta_p.state_dim());
    for (long n = 0; n < T; ++n) {
      const Vec Fdot = observers[v].C.transpose() * Rinv * (observations[n][v] - observers[v].d);
      S2 += F;
      rhs += Fdot - F * smoothed[n].mu;
    }
    // rhs here already carries S3 - S1; reuse the masked solve with S1 = 0.
    const auto next = em_mstep(Vec::Zero(theta_p.state_dim()), S2, rhs, mask);
    if (next) offsets[v] = *next;
  }
  LocalizationParams theta_next = theta_p;
  for (const auto& [a, b] : t.directed_edges()) {
    theta_next.set(a, b, offsets[b] - offsets[a]);
  }
  return theta_next;
}

Scalar batch_log_likelihood(const Topology& t, const MotionModel& motion,
                            const std::vector<ObservationModel>& observers,
                            const std::vector<std::vector<Vec>>& observations,
                            const LocalizationParams& theta, int reference, const Vec& mu0_ref,
                            Scalar kappa) {
  CentralizedFilter filter(t, motion, observers, reference, mu0_ref, kappa);
  for (const auto& y : observations) filter.step(y, theta);
  return filter.total_log_likelihood();
}

}  // namespace distloc
