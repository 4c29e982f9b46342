#pragma once

#include "distloc/network.hpp"
#include "distloc/types.hpp"

#include <vector>

namespace distloc {

/// The matrix/vector messages carried per directed edge per round:
/// m aggregates C^T R^-1 C terms, mdot aggregates C^T R^-1 (Y - d), and
/// mddot aggregates C^T R^-1 C theta terms.
struct MessageTriple {
  Mat m;
  Vec mdot;
  Vec mddot;
};

/// Per-node information contributions entering the messages:
/// F = C^T R^-1 C, Fdot = C^T R^-1 (Y - d).
struct LocalTerms {
  Mat F;
  Vec Fdot;
};

LocalTerms make_local_terms(const Mat& C_eff, const Vec& d_eff, const Mat& R, const Vec& y);

/// Messages per directed edge at the current round. Round-1 triples are
/// retained alongside the current round.
class MessageBoard {
 public:
  MessageBoard() = default;

  int round() const { return round_; }
  const MessageTriple& at(const Topology& t, int from, int to) const {
    return current_[t.directed_edge_index(from, to)];
  }
  const MessageTriple& first_round(const Topology& t, int from, int to) const {
    return first_[t.directed_edge_index(from, to)];
  }

 private:
  int round_ = 0;
  std::vector<MessageTriple> current_;
  std::vector<MessageTriple> first_;

  friend MessageBoard init_messages(const Topology&, const std::vector<LocalTerms>&,
                                    const LocalizationParams&);
  friend void run_rounds(MessageBoard&, const Topology&, int, const std::vector<LocalTerms>&,
                         const LocalizationParams&);
};

/// Round-1 messages: on directed edge (i,j), m = F^i, mdot = Fdot^i,
/// mddot = F^i theta^{j,i}.
MessageBoard init_messages(const Topology& t, const std::vector<LocalTerms>& local,
                           const LocalizationParams& theta);

/// Advances the board synchronously to round K: every round-k triple is
/// computed from the round-(k-1) snapshot, with the mddot self term using
/// the cumulative round-k m. K >= 1; K == 1 leaves the board at the
/// initialization.
void run_rounds(MessageBoard& board, const Topology& t, int K,
                const std::vector<LocalTerms>& local, const LocalizationParams& theta);

struct AggregateSums {
  Mat F_total;       // F^r + sum over neighbors of m_K
  Vec Fdot_total;    // Fdot^r + sum of mdot_K
  Vec Ftheta_total;  // sum of mddot_K
};

/// Local aggregation at node r. Exact network-wide sums on trees when the
/// board has run at least diameter rounds; on cyclic graphs or smaller K it
/// is the documented partial sum.
AggregateSums aggregate(const MessageBoard& board, const Topology& t, int r,
                        const LocalTerms& local_r);

}  // namespace distloc
