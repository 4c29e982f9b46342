#pragma once

#include "distloc/types.hpp"

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

namespace distloc {

/// Undirected connected sensor graph over nodes 0..num_nodes-1. Immutable
/// after construction and freely shared between threads.
class Topology {
 public:
  /// Validates node ids, rejects self-loops and duplicate edges, and
  /// requires connectivity (a single node with no edges is connected).
  Topology(int num_nodes, std::vector<std::pair<int, int>> edges);

  int num_nodes() const { return num_nodes_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_.at(i); }
  bool is_tree() const { return static_cast<int>(edges_.size()) == num_nodes_ - 1; }

  /// Directed edges enumerated as (i,j),(j,i) per undirected edge, in
  /// insertion order. The index is dense in [0, 2|E|).
  const std::vector<std::pair<int, int>>& directed_edges() const { return directed_; }
  int num_directed_edges() const { return static_cast<int>(directed_.size()); }
  int directed_edge_index(int from, int to) const;
  bool has_edge(int i, int j) const;

 private:
  int num_nodes_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::pair<int, int>> directed_;
  std::vector<std::vector<int>> adjacency_;
  std::unordered_map<std::int64_t, int> directed_index_;
};

Topology build_topology(int num_nodes, const std::vector<std::pair<int, int>>& edges);

/// Maximum over node pairs of the shortest-path edge count; the minimal
/// round count for exact aggregation on trees.
int graph_diameter(const Topology& t);

/// Breadth-first shortest path from `from` to `to`, inclusive of endpoints.
std::vector<int> shortest_path(const Topology& t, int from, int to);

/// Per-directed-edge offset vectors theta^{i,j} (position of node i in node
/// j's local frame, embedded in state coordinates). Components outside the
/// free-component mask are exactly zero. theta^{i,i} is the zero vector.
class LocalizationParams {
 public:
  LocalizationParams(const Topology& t, Mat mask);

  int state_dim() const { return static_cast<int>(mask_.rows()); }
  int free_dim() const { return static_cast<int>(mask_.cols()); }
  const Mat& mask() const { return mask_; }

  /// theta^{i,j}. Zero for i == j; throws for pairs that are not edges.
  const Vec& at(int i, int j) const;
  /// Full-vector write; masked components must be exactly zero.
  void set(int i, int j, const Vec& value);
  /// Write through the mask: theta^{i,j} = E * free.
  void set_free(int i, int j, const Vec& free);
  Vec free_at(int i, int j) const { return mask_.transpose() * at(i, j); }

 private:
  Mat mask_;
  Vec zero_;
  std::unordered_map<std::int64_t, Vec> values_;
};

/// Ground truth from plane (or line) coordinates: the position block of
/// theta^{i,j} is p_i - p_j. Antisymmetric by construction.
LocalizationParams truth_from_positions(const Topology& t, const std::vector<Vec>& positions,
                                        const Mat& mask);

/// Sum of theta along a node path; equals theta^{first,last} for ground
/// truth on a tree. Throws for paths that leave the edge set.
Vec path_sum(const LocalizationParams& params, const std::vector<int>& path);

/// theta^{from,to} through the BFS shortest path (exact for trees).
Vec offset_between(const LocalizationParams& params, const Topology& t, int from, int to);

}  // namespace distloc
