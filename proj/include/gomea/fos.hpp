#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gomea/linkage_learning.hpp"
#include "gomea/problems.hpp"

namespace gomea {

/// Variables sampled together, optionally conditioned on parent variables. Both sorted.
struct FosElement {
  std::vector<Index> variables;
  std::vector<Index> parents;

  friend bool operator==(const FosElement&, const FosElement&) = default;
};

enum class FosKind { univariate, full, marginal_product, linkage_tree, ucond, mcond, clique_seeded };

inline std::string to_string(FosKind kind) {
  switch (kind) {
    case FosKind::univariate: return "univariate";
    case FosKind::full: return "full";
    case FosKind::marginal_product: return "marginal_product";
    case FosKind::linkage_tree: return "linkage_tree";
    case FosKind::ucond: return "ucond";
    case FosKind::mcond: return "mcond";
    case FosKind::clique_seeded: return "clique_seeded";
  }
  return "unknown";
}

/// Factors in a valid forward-sampling order: parents of each factor lie in earlier factors.
struct Factorization {
  std::vector<FosElement> factors;
  FosKind kind = FosKind::ucond;
  Index start_vertex = 0;
};

/// Ordered FOS. When `generational` holds a factorization, element 0 is the whole-genotype
/// element that is sampled by one forward pass through it.
struct FosModel {
  FosKind kind = FosKind::univariate;
  std::vector<FosElement> elements;
  std::optional<Factorization> generational;

  bool has_generational_element() const { return generational.has_value(); }
  Index size() const { return elements.size(); }
};

inline nlohmann::json to_json(const FosElement& e) { return {{"variables", e.variables}, {"parents", e.parents}}; }

inline nlohmann::json to_json(const std::vector<FosElement>& elements) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : elements) out.push_back(to_json(e));
  return out;
}

inline nlohmann::json to_json(const Factorization& f) {
  return {{"kind", to_string(f.kind)}, {"start_vertex", f.start_vertex}, {"factors", to_json(f.factors)}};
}

inline nlohmann::json to_json(const FosModel& m) {
  nlohmann::json out{{"kind", to_string(m.kind)}, {"elements", to_json(m.elements)}};
  if (m.generational) out["generational"] = to_json(*m.generational);
  return out;
}

inline bool is_partition(const std::vector<FosElement>& elements, Index dimension) {
  std::vector<int> seen(dimension, 0);
  for (const auto& e : elements)
    for (Index v : e.variables) {
      if (v >= dimension || seen[v]) return false;
      seen[v] = 1;
    }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

inline FosModel build_static(FosKind kind, Index dimension) {
  FosModel model;
  model.kind = kind;
  if (kind == FosKind::univariate) {
    for (Index v = 0; v < dimension; ++v) model.elements.push_back({{v}, {}});
  } else if (kind == FosKind::full) {
    FosElement all;
    all.variables.resize(dimension);
    std::iota(all.variables.begin(), all.variables.end(), Index{0});
    model.elements.push_back(std::move(all));
  } else {
    throw std::invalid_argument("build_static supports univariate and full models only");
  }
  return model;
}

/// Disjoint sets covering [0, dimension); rejects anything that is not a partition.
inline FosModel build_marginal_product(std::vector<std::vector<Index>> sets, Index dimension) {
  FosModel model;
  model.kind = FosKind::marginal_product;
  for (auto& s : sets) {
    std::sort(s.begin(), s.end());
    model.elements.push_back({std::move(s), {}});
  }
  if (!is_partition(model.elements, dimension))
    throw std::invalid_argument("marginal product sets must be disjoint and cover every variable");
  return model;
}

namespace detail {

inline bool jointly_dependent(const DependencyMatrix& dsm, const std::vector<Index>& vars) {
  for (Index a = 0; a < vars.size(); ++a)
    for (Index b = a + 1; b < vars.size(); ++b)
      if (!(dsm.strength(vars[a], vars[b]) > 0.0)) return false;
  return true;
}

struct TreeNode {
  std::vector<Index> variables;
  std::optional<std::pair<Index, Index>> children;
};

/// Removes the children of every kept, jointly dependent node whose children are both kept,
/// repeating until nothing changes.
inline void prune(const DependencyMatrix& dsm, const std::vector<TreeNode>& nodes, std::vector<char>& kept) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index k = 0; k < nodes.size(); ++k) {
      if (!kept[k] || !nodes[k].children) continue;
      const auto [a, b] = *nodes[k].children;
      if (kept[a] && kept[b] && jointly_dependent(dsm, nodes[k].variables)) {
        kept[a] = kept[b] = 0;
        changed = true;
      }
    }
  }
}

}  // namespace detail

/// Average-linkage agglomerative clustering on DSM strengths (larger = more similar).
/// Clusters with zero average similarity are never merged. Elements larger than
/// `max_element_size` are dropped, then the tree is pruned so that a jointly dependent
/// element replaces its two children.
inline FosModel build_linkage_tree(const DependencyMatrix& dsm, Index max_element_size = 0) {
  const Index n = dsm.size();
  if (max_element_size == 0) max_element_size = std::min<Index>(n, 100);

  std::vector<detail::TreeNode> nodes;
  for (Index v = 0; v < n; ++v) nodes.push_back({{v}, std::nullopt});

  // active clusters: node index; similarity via summed pairwise strengths / size product
  std::vector<Index> active(n);
  std::iota(active.begin(), active.end(), Index{0});
  std::vector<std::vector<double>> link_sum(n, std::vector<double>(n, 0.0));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) link_sum[i][j] = dsm.strength(i, j);

  while (active.size() > 1) {
    double best = 0.0;
    std::optional<std::pair<Index, Index>> best_pair;
    std::pair<Index, Index> best_key{n, n};
    for (Index x = 0; x < active.size(); ++x) {
      for (Index y = x + 1; y < active.size(); ++y) {
        const Index a = active[x];
        const Index b = active[y];
        const double sim = link_sum[a][b] / static_cast<double>(nodes[a].variables.size() * nodes[b].variables.size());
        if (!(sim > 0.0)) continue;
        const Index ra = nodes[a].variables.front();
        const Index rb = nodes[b].variables.front();
        const std::pair<Index, Index> key{std::min(ra, rb), std::max(ra, rb)};
        if (!best_pair || sim > best || (sim == best && key < best_key)) {
          best = sim;
          best_pair = {x, y};
          best_key = key;
        }
      }
    }
    if (!best_pair) break;

    const Index a = active[best_pair->first];
    const Index b = active[best_pair->second];
    detail::TreeNode merged;
    merged.variables = nodes[a].variables;
    merged.variables.insert(merged.variables.end(), nodes[b].variables.begin(), nodes[b].variables.end());
    std::sort(merged.variables.begin(), merged.variables.end());
    merged.children = std::make_pair(a, b);
    const Index m = nodes.size();
    nodes.push_back(std::move(merged));

    for (auto& row : link_sum) row.push_back(0.0);
    link_sum.emplace_back(nodes.size(), 0.0);
    for (Index c : active) {
      if (c == a || c == b) continue;
      const double s = link_sum[a][c] + link_sum[b][c];
      link_sum[m][c] = link_sum[c][m] = s;
    }
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pair->second));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pair->first));
    active.push_back(m);
  }

  std::vector<char> kept(nodes.size(), 1);
  for (Index k = 0; k < nodes.size(); ++k)
    if (nodes[k].variables.size() > max_element_size) kept[k] = 0;
  detail::prune(dsm, nodes, kept);

  FosModel model;
  model.kind = FosKind::linkage_tree;
  for (Index k = 0; k < nodes.size(); ++k)
    if (kept[k]) model.elements.push_back({nodes[k].variables, {}});
  return model;
}

}  // namespace gomea
