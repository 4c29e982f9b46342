#include "distloc/network.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <string>

namespace distloc {

namespace {

std::int64_t pair_key(int i, int j) {
  return (static_cast<std::int64_t>(i) << 32) | static_cast<std::int64_t>(static_cast<std::uint32_t>(j));
}

std::vector<int> bfs_distances(const Topology& t, int source) {
  std::vector<int> dist(t.num_nodes(), -1);
  std::deque<int> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : t.neighbors(u)) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace

Topology::Topology(int num_nodes, std::vector<std::pair<int, int>> edges)
    : num_nodes_(num_nodes), edges_(std::move(edges)) {
  if (num_nodes_ < 1) throw std::invalid_argument("topology: need at least one node");
  adjacency_.resize(num_nodes_);
  for (const auto& [i, j] : edges_) {
    if (i < 0 || i >= num_nodes_ || j < 0 || j >= num_nodes_) {
      throw std::invalid_argument("topology: edge (" + std::to_string(i) + "," +
                                  std::to_string(j) + ") references an unknown node");
    }
    if (i == j) throw std::invalid_argument("topology: self-loop at node " + std::to_string(i));
    if (directed_index_.count(pair_key(i, j))) {
      throw std::invalid_argument("topology: duplicate edge (" + std::to_string(i) + "," +
                                  std::to_string(j) + ")");
    }
    directed_index_[pair_key(i, j)] = static_cast<int>(directed_.size());
    directed_.emplace_back(i, j);
    directed_index_[pair_key(j, i)] = static_cast<int>(directed_.size());
    directed_.emplace_back(j, i);
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  const auto dist = bfs_distances(*this, 0);
  if (std::any_of(dist.begin(), dist.end(), [](int d) { return d < 0; })) {
    throw std::invalid_argument("topology: graph is not connected");
  }
}

int Topology::directed_edge_index(int from, int to) const {
  auto it = directed_index_.find(pair_key(from, to));
  if (it == directed_index_.end()) {
    throw std::invalid_argument("topology: (" + std::to_string(from) + "," + std::to_string(to) +
                                ") is not an edge");
  }
  return it->second;
}

bool Topology::has_edge(int i, int j) const {
  return directed_index_.count(pair_key(i, j)) > 0;
}

Topology build_topology(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  return Topology(num_nodes, edges);
}

int graph_diameter(const Topology& t) {
  int diameter = 0;
  for (int s = 0; s < t.num_nodes(); ++s) {
    const auto dist = bfs_distances(t, s);
    diameter = std::max(diameter, *std::max_element(dist.begin(), dist.end()));
  }
  return diameter;
}

std::vector<int> shortest_path(const Topology& t, int from, int to) {
  std::vector<int> parent(t.num_nodes(), -1);
  std::deque<int> queue{from};
  parent[from] = from;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (u == to) break;
    for (int v : t.neighbors(u)) {
      if (parent[v] < 0) {
        parent[v] = u;
        queue.push_back(v);
      }
    }
  }
  std::vector<int> path;
  for (int v = to; v != from; v = parent[v]) path.push_back(v);
  path.push_back(from);
  std::reverse(path.begin(), path.end());
  return path;
}

LocalizationParams::LocalizationParams(const Topology& t, Mat mask)
    : mask_(std::move(mask)), zero_(Vec::Zero(mask_.rows())) {
  for (const auto& [i, j] : t.directed_edges()) {
    values_[pair_key(i, j)] = zero_;
  }
}

const Vec& LocalizationParams::at(int i, int j) const {
  if (i == j) return zero_;
  auto it = values_.find(pair_key(i, j));
  if (it == values_.end()) {
    throw std::invalid_argument("localization params: no parameter for pair (" +
                                std::to_string(i) + "," + std::to_string(j) + ")");
  }
  return it->second;
}

void LocalizationParams::set(int i, int j, const Vec& value) {
  if (((Mat::Identity(state_dim(), state_dim()) - mask_ * mask_.transpose()) * value).cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("localization params: masked components must be zero");
  }
  auto it = values_.find(pair_key(i, j));
  if (it == values_.end()) {
    throw std::invalid_argument("localization params: pair (" + std::to_string(i) + "," +
                                std::to_string(j) + ") is not an edge");
  }
  it->second = value;
}

void LocalizationParams::set_free(int i, int j, const Vec& free) {
  set(i, j, mask_ * free);
}

LocalizationParams truth_from_positions(const Topology& t, const std::vector<Vec>& positions,
                                        const Mat& mask) {
  if (static_cast<int>(positions.size()) != t.num_nodes()) {
    throw std::invalid_argument("truth_from_positions: need one position per node");
  }
  LocalizationParams params(t, mask);
  for (const auto& [i, j] : t.directed_edges()) {
    if (positions[i].size() != mask.cols()) {
      throw std::invalid_argument("truth_from_positions: position dimension must match the mask");
    }
    params.set_free(i, j, positions[i] - positions[j]);
  }
  return params;
}

Vec path_sum(const LocalizationParams& params, const std::vector<int>& path) {
  Vec total = Vec::Zero(params.state_dim());
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    total += params.at(path[k], path[k + 1]);
  }
  return total;
}

Vec offset_between(const LocalizationParams& params, const Topology& t, int from, int to) {
  return path_sum(params, shortest_path(t, from, to));
}

}  // namespace distloc
