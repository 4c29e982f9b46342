#include "distloc/filter.hpp"

#include <cmath>
#include <stdexcept>

namespace distloc {

NodeFilterState make_prior_state(const Vec& mu0, Scalar kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("prior: kappa must be positive");
  const int dim = static_cast<int>(mu0.size());
  NodeFilterState s;
  s.mu = mu0;
  s.Sigma = kappa * Mat::Identity(dim, dim);
  s.mu_pred = mu0;
  s.Sigma_pred = s.Sigma;
  s.Sigma_pred_inv = (1.0 / kappa) * Mat::Identity(dim, dim);
  s.M = s.Sigma_pred_inv;
  s.z = s.M * mu0;
  return s;
}

void predict(NodeFilterState& s, const Mat& A_eff, const Vec& b_eff, const Mat& Q) {
  s.mu_pred = A_eff * s.mu + b_eff;
  s.Sigma_pred = symmetrized(A_eff * s.Sigma * A_eff.transpose() + Q);
  s.Sigma_pred_inv = spd_inverse(s.Sigma_pred, "predicted covariance");
}

void update(NodeFilterState& s, const LocalTerms& local,
            const std::vector<const MessageTriple*>& from_neighbors) {
  Mat M = s.Sigma_pred_inv + local.F;
  Vec z = s.Sigma_pred_inv * s.mu_pred + local.Fdot;
  for (const MessageTriple* msg : from_neighbors) {
    M += msg->m;
    z += msg->mdot - msg->mddot;
  }
  s.M = symmetrized(M);
  s.z = z;
  s.Sigma = spd_inverse(s.M, "posterior precision");
  s.mu = s.Sigma * z;
}

namespace {

Scalar wrap_angle(Scalar a) { return std::remainder(a, 2.0 * M_PI); }

}  // namespace

NetworkFilter::NetworkFilter(Topology topology, MotionModel motion,
                             std::vector<ObservationModel> observers, std::vector<Vec> mu0,
                             Scalar kappa, int rounds, Mode mode)
    : topology_(std::move(topology)),
      motion_(std::move(motion)),
      Q_(motion_.process_noise()),
      observers_(std::move(observers)),
      mode_(mode),
      rounds_(rounds) {
  const int n = topology_.num_nodes();
  if (static_cast<int>(observers_.size()) != n) {
    throw std::invalid_argument("network filter: need one observation model per node");
  }
  if (static_cast<int>(mu0.size()) != n) {
    throw std::invalid_argument("network filter: need one prior mean per node");
  }
  if (rounds_ < 1) throw std::invalid_argument("network filter: rounds must be >= 1");
  states_.reserve(n);
  for (int r = 0; r < n; ++r) states_.push_back(make_prior_state(mu0[r], kappa));
  previous_ = states_;
  local_.resize(n);
  A_eff_.resize(n);
  b_eff_.resize(n);
}

void NetworkFilter::step(const std::vector<Vec>& y, const LocalizationParams& theta) {
  const int n = topology_.num_nodes();
  if (static_cast<int>(y.size()) != n) {
    throw std::invalid_argument("network filter: need one observation per node");
  }
  previous_ = states_;

  for (int r = 0; r < n; ++r) {
    if (mode_ == Mode::Ekf && transition_) {
      const TransitionLin lin =
          linearize_transition(transition_->phi, transition_->jacobian, states_[r].mu);
      A_eff_[r] = lin.A_eff;
      b_eff_[r] = lin.b_eff;
    } else {
      A_eff_[r] = motion_.A;
      b_eff_[r] = motion_.b;
    }
    predict(states_[r], A_eff_[r], b_eff_[r], Q_);
  }

  for (int r = 0; r < n; ++r) {
    const ObservationModel& obs = observers_[r];
    if (mode_ == Mode::Linear) {
      local_[r] = make_local_terms(obs.C, obs.d, obs.R, y[r]);
      continue;
    }
    const Linearization lin = linearize_observation(obs, states_[r].mu_pred);
    if (obs.kind == ObservationModel::Kind::Bearings) {
      // Fold the wrapped innovation back into the effective measurement so
      // a bearing crossing the +-pi cut does not act as a 2*pi outlier.
      const Vec predicted = observation_mean(obs, states_[r].mu_pred);
      Vec resid = y[r] - predicted;
      resid(0) = wrap_angle(resid(0));
      const Vec y_eff = resid + lin.C_eff * states_[r].mu_pred;
      local_[r] = make_local_terms(lin.C_eff, Vec::Zero(y_eff.size()), obs.R, y_eff);
    } else {
      local_[r] = make_local_terms(lin.C_eff, lin.d_eff, obs.R, y[r]);
    }
  }

  board_ = init_messages(topology_, local_, theta);
  run_rounds(board_, topology_, rounds_, local_, theta);

  for (int r = 0; r < n; ++r) {
    std::vector<const MessageTriple*> incoming;
    incoming.reserve(topology_.neighbors(r).size());
    for (int j : topology_.neighbors(r)) incoming.push_back(&board_.at(topology_, j, r));
    update(states_[r], local_[r], incoming);
  }
  ++steps_done_;
}

std::vector<SmoothedMoments> rts_smooth(const std::vector<ForwardMoments>& forward,
                                        const Mat& A) {
  if (forward.empty()) return {};
  const int T = static_cast<int>(forward.size());
  std::vector<SmoothedMoments> smoothed(T);
  smoothed[T - 1] = {forward[T - 1].mu, forward[T - 1].Sigma};
  for (int n = T - 2; n >= 0; --n) {
    const Mat gain = forward[n].Sigma * A.transpose() *
                     spd_inverse(forward[n + 1].Sigma_pred, "predicted covariance (smoother)");
    smoothed[n].mu = forward[n].mu + gain * (smoothed[n + 1].mu - forward[n + 1].mu_pred);
    smoothed[n].Sigma = symmetrized(
        forward[n].Sigma +
        gain * (smoothed[n + 1].Sigma - forward[n + 1].Sigma_pred) * gain.transpose());
  }
  return smoothed;
}

CentralizedFilter::CentralizedFilter(Topology topology, MotionModel motion,
                                     std::vector<ObservationModel> observers, int reference,
                                     const Vec& mu0_ref, Scalar kappa)
    : topology_(std::move(topology)),
      motion_(std::move(motion)),
      Q_(motion_.process_noise()),
      observers_(std::move(observers)),
      reference_(reference) {
  for (const auto& obs : observers_) {
    if (obs.kind != ObservationModel::Kind::Linear) {
      throw std::invalid_argument("centralized filter: linear observation models only");
    }
  }
  paths_.reserve(topology_.num_nodes());
  for (int v = 0; v < topology_.num_nodes(); ++v) {
    paths_.push_back(shortest_path(topology_, reference_, v));
  }
  const int dim = static_cast<int>(mu0_ref.size());
  current_.mu = mu0_ref;
  current_.Sigma = kappa * Mat::Identity(dim, dim);
  current_.mu_pred = mu0_ref;
  current_.Sigma_pred = current_.Sigma;
}

void CentralizedFilter::step(const std::vector<Vec>& y, const LocalizationParams& theta) {
  const int n = topology_.num_nodes();
  const int dim = motion_.state_dim();
  current_.mu_pred = motion_.A * current_.mu + motion_.b;
  current_.Sigma_pred = symmetrized(motion_.A * current_.Sigma * motion_.A.transpose() + Q_);

  int total_rows = 0;
  for (const auto& obs : observers_) total_rows += obs.obs_dim();
  Mat C = Mat::Zero(total_rows, dim);
  Vec offset = Vec::Zero(total_rows);
  Vec stacked = Vec::Zero(total_rows);
  Mat R = Mat::Zero(total_rows, total_rows);
  int row = 0;
  for (int v = 0; v < n; ++v) {
    const int rows = observers_[v].obs_dim();
    const Vec theta_rv = path_sum(theta, paths_[v]);
    C.block(row, 0, rows, dim) = observers_[v].C;
    offset.segment(row, rows) = observers_[v].C * theta_rv + observers_[v].d;
    stacked.segment(row, rows) = y[v];
    R.block(row, row, rows, rows) = observers_[v].R;
    row += rows;
  }

  const Vec innovation = stacked - C * current_.mu_pred - offset;
  const Mat S = symmetrized(C * current_.Sigma_pred * C.transpose() + R);
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("centralized filter: singular innovation covariance");
  }
  const Mat gain = current_.Sigma_pred * C.transpose() * llt.solve(Mat::Identity(total_rows, total_rows));
  current_.mu = current_.mu_pred + gain * innovation;
  current_.Sigma = symmetrized((Mat::Identity(dim, dim) - gain * C) * current_.Sigma_pred);

  Scalar logdet = 0.0;
  for (int i = 0; i < total_rows; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  last_loglik_ = -0.5 * (innovation.dot(llt.solve(innovation)) + logdet +
                         total_rows * std::log(2.0 * M_PI));
  total_loglik_ += last_loglik_;
  history_.push_back(current_);
}

}  // namespace distloc
