#include "distloc/messaging.hpp"

#include <stdexcept>

namespace distloc {

LocalTerms make_local_terms(const Mat& C_eff, const Vec& d_eff, const Mat& R, const Vec& y) {
  const Mat CtRinv = C_eff.transpose() * spd_inverse(R, "observation noise covariance");
  return {CtRinv * C_eff, CtRinv * (y - d_eff)};
}

MessageBoard init_messages(const Topology& t, const std::vector<LocalTerms>& local,
                           const LocalizationParams& theta) {
  if (static_cast<int>(local.size()) != t.num_nodes()) {
    throw std::invalid_argument("init_messages: need local terms for every node");
  }
  MessageBoard board;
  board.current_.resize(t.num_directed_edges());
  for (int e = 0; e < t.num_directed_edges(); ++e) {
    const auto [i, j] = t.directed_edges()[e];
    board.current_[e].m = local[i].F;
    board.current_[e].mdot = local[i].Fdot;
    board.current_[e].mddot = local[i].F * theta.at(j, i);
  }
  board.first_ = board.current_;
  board.round_ = 1;
  return board;
}

void run_rounds(MessageBoard& board, const Topology& t, int K,
                const std::vector<LocalTerms>& local, const LocalizationParams& theta) {
  if (K < 1) throw std::invalid_argument("run_rounds: K must be >= 1");
  if (board.round_ != 1) throw std::invalid_argument("run_rounds: board must be at round 1");
  std::vector<MessageTriple> next(t.num_directed_edges());
  for (int k = 2; k <= K; ++k) {
    for (int e = 0; e < t.num_directed_edges(); ++e) {
      const auto [i, j] = t.directed_edges()[e];
      Mat m = local[i].F;
      Vec mdot = local[i].Fdot;
      Vec mddot_sum = Vec::Zero(theta.state_dim());
      for (int p : t.neighbors(i)) {
        if (p == j) continue;
        const MessageTriple& in = board.current_[t.directed_edge_index(p, i)];
        m += in.m;
        mdot += in.mdot;
        mddot_sum += in.mddot;
      }
      next[e].m = std::move(m);
      next[e].mdot = std::move(mdot);
      next[e].mddot = next[e].m * theta.at(j, i) + mddot_sum;
    }
    board.current_.swap(next);
  }
  board.round_ = K;
}

AggregateSums aggregate(const MessageBoard& board, const Topology& t, int r,
                        const LocalTerms& local_r) {
  AggregateSums sums;
  sums.F_total = local_r.F;
  sums.Fdot_total = local_r.Fdot;
  sums.Ftheta_total = Vec::Zero(local_r.F.rows());
  for (int j : t.neighbors(r)) {
    const MessageTriple& in = board.at(t, j, r);
    sums.F_total += in.m;
    sums.Fdot_total += in.mdot;
    sums.Ftheta_total += in.mddot;
  }
  return sums;
}

}  // namespace distloc
