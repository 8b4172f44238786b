#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gomea/problems.hpp"

namespace gomea {

/// Undirected simple graph over variable indices [0, n).
class VariableInteractionGraph {
 public:
  VariableInteractionGraph() = default;
  explicit VariableInteractionGraph(Index n) : n_(n), adjacency_(n), matrix_(n * n, 0) {}

  static VariableInteractionGraph from_edges(Index n, std::span<const IndexPair> edges) {
    VariableInteractionGraph g(n);
    for (const auto& [u, v] : edges) g.add_edge(u, v);
    return g;
  }

  static VariableInteractionGraph complete(Index n) {
    VariableInteractionGraph g(n);
    for (Index u = 0; u < n; ++u)
      for (Index v = u + 1; v < n; ++v) g.add_edge(u, v);
    return g;
  }

  void add_edge(Index u, Index v) {
    if (u >= n_ || v >= n_) throw std::invalid_argument("edge endpoint out of range");
    if (u == v || adjacent(u, v)) return;
    matrix_[u * n_ + v] = matrix_[v * n_ + u] = 1;
    insert_sorted(adjacency_[u], v);
    insert_sorted(adjacency_[v], u);
  }

  Index size() const { return n_; }
  bool adjacent(Index u, Index v) const { return matrix_[u * n_ + v] != 0; }
  /// Neighbors in ascending order.
  const std::vector<Index>& neighbors(Index v) const { return adjacency_[v]; }

  std::vector<IndexPair> edges() const {
    std::vector<IndexPair> out;
    for (Index u = 0; u < n_; ++u)
      for (Index v : adjacency_[u])
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  Index edge_count() const {
    Index count = 0;
    for (const auto& nb : adjacency_) count += nb.size();
    return count / 2;
  }

  bool is_clique(std::span<const Index> vertices) const {
    for (Index a = 0; a < vertices.size(); ++a)
      for (Index b = a + 1; b < vertices.size(); ++b)
        if (!adjacent(vertices[a], vertices[b])) return false;
    return true;
  }

  friend bool operator==(const VariableInteractionGraph& a, const VariableInteractionGraph& b) {
    return a.n_ == b.n_ && a.matrix_ == b.matrix_;
  }

 private:
  static void insert_sorted(std::vector<Index>& list, Index value) {
    list.insert(std::lower_bound(list.begin(), list.end(), value), value);
  }

  Index n_ = 0;
  std::vector<std::vector<Index>> adjacency_;
  std::vector<unsigned char> matrix_;
};

}  // namespace gomea
