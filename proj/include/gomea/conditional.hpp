#pragma once

#include <algorithm>
#include <deque>
#include <set>
#include <vector>

#include "gomea/fos.hpp"
#include "gomea/graph.hpp"

namespace gomea {

namespace detail {

inline std::vector<Index> factored_neighbors(const VariableInteractionGraph& vig, Index v, const std::vector<char>& done) {
  std::vector<Index> out;
  for (Index u : vig.neighbors(v))
    if (done[u]) out.push_back(u);
  return out;
}

}  // namespace detail

/// Breadth-first factorization of the VIG. A vertex's parents are its neighbours that were
/// already placed in an earlier factor. For mcond, a vertex pulls in unvisited neighbours that
/// are adjacent to every member collected so far and have exactly the same parents.
/// After a factor is placed, the unvisited neighbours of its members are queued member by
/// member (in the order they joined), each member's neighbours ascending.
/// Disconnected graphs continue from the lowest-index vertex not yet placed.
inline Factorization factorize(const VariableInteractionGraph& vig, FosKind kind, Index start_vertex) {
  const Index n = vig.size();
  if (kind != FosKind::ucond && kind != FosKind::mcond)
    throw std::invalid_argument("factorize supports ucond and mcond");
  if (n > 0 && start_vertex >= n) throw std::invalid_argument("start vertex out of range");

  Factorization result;
  result.kind = kind;
  result.start_vertex = start_vertex;
  std::vector<char> done(n, 0);
  std::deque<Index> queue;
  Index next_root = 0;
  if (n > 0) queue.push_back(start_vertex);

  Index placed = 0;
  while (placed < n) {
    if (queue.empty()) {
      while (done[next_root]) ++next_root;
      queue.push_back(next_root);
    }
    const Index u = queue.front();
    queue.pop_front();
    if (done[u]) continue;

    std::vector<Index> members{u};
    const std::vector<Index> parents = detail::factored_neighbors(vig, u, done);
    if (kind == FosKind::mcond) {
      for (Index w : vig.neighbors(u)) {
        if (done[w]) continue;
        const bool joins = std::all_of(members.begin(), members.end(), [&](Index m) { return vig.adjacent(m, w); }) &&
                           detail::factored_neighbors(vig, w, done) == parents;
        if (joins) members.push_back(w);
      }
    }
    for (Index m : members) done[m] = 1;
    placed += members.size();
    for (Index m : members)
      for (Index w : vig.neighbors(m))
        if (!done[w]) queue.push_back(w);

    FosElement factor{members, parents};
    std::sort(factor.variables.begin(), factor.variables.end());
    result.factors.push_back(std::move(factor));
  }
  return result;
}

/// True when each factor's parents were all placed by strictly earlier factors and every
/// variable is placed exactly once.
inline bool is_forward_valid(const Factorization& f, Index dimension) {
  std::vector<char> placed(dimension, 0);
  for (const auto& factor : f.factors) {
    for (Index p : factor.parents)
      if (p >= dimension || !placed[p]) return false;
    for (Index v : factor.variables) {
      if (v >= dimension || placed[v]) return false;
      placed[v] = 1;
    }
  }
  return std::all_of(placed.begin(), placed.end(), [](char c) { return c != 0; });
}

namespace detail {

// Bron-Kerbosch with Tomita pivoting; reports every maximal clique extending r.
inline void bron_kerbosch(const VariableInteractionGraph& g, std::vector<Index>& r, std::vector<Index> p,
                          std::vector<Index> x, std::vector<std::vector<Index>>& out) {
  if (p.empty() && x.empty()) {
    auto clique = r;
    std::sort(clique.begin(), clique.end());
    out.push_back(std::move(clique));
    return;
  }
  Index pivot = p.empty() ? x.front() : p.front();
  Index best = 0;
  for (const auto* set : {&p, &x})
    for (Index u : *set) {
      const Index c = static_cast<Index>(std::count_if(p.begin(), p.end(), [&](Index w) { return g.adjacent(u, w); }));
      if (c > best) {
        best = c;
        pivot = u;
      }
    }
  std::vector<Index> candidates;
  for (Index v : p)
    if (!g.adjacent(pivot, v)) candidates.push_back(v);
  for (Index v : candidates) {
    std::vector<Index> np;
    std::vector<Index> nx;
    for (Index w : p)
      if (g.adjacent(v, w)) np.push_back(w);
    for (Index w : x)
      if (g.adjacent(v, w)) nx.push_back(w);
    r.push_back(v);
    bron_kerbosch(g, r, std::move(np), std::move(nx), out);
    r.pop_back();
    p.erase(std::find(p.begin(), p.end(), v));
    x.push_back(v);
  }
}

}  // namespace detail

/// Every maximal clique containing `v`, each sorted ascending.
inline std::vector<std::vector<Index>> maximal_cliques_containing(const VariableInteractionGraph& vig, Index v) {
  std::vector<std::vector<Index>> out;
  std::vector<Index> r{v};
  detail::bron_kerbosch(vig, r, vig.neighbors(v), {}, out);
  std::sort(out.begin(), out.end());
  return out;
}

/// Searches the maximal cliques around each start vertex in ascending order and keeps the
/// first copy of every distinct clique. Parents are all outside vertices adjacent to a member.
inline std::vector<FosElement> clique_seed(const VariableInteractionGraph& vig) {
  std::vector<FosElement> out;
  std::set<std::vector<Index>> seen;
  for (Index v = 0; v < vig.size(); ++v) {
    for (auto& clique : maximal_cliques_containing(vig, v)) {
      if (!seen.insert(clique).second) continue;
      std::set<Index> parents;
      for (Index m : clique)
        for (Index w : vig.neighbors(m))
          if (!std::binary_search(clique.begin(), clique.end(), w)) parents.insert(w);
      out.push_back({std::move(clique), {parents.begin(), parents.end()}});
    }
  }
  return out;
}

/// Hybrid model: element 0 covers all variables and is sampled by one forward pass through
/// `factorization`; the remaining elements are `fg_elements` as given.
inline FosModel compose_hg(const Factorization& factorization, std::vector<FosElement> fg_elements, FosKind kind) {
  FosModel model;
  model.kind = kind;
  FosElement all;
  for (const auto& f : factorization.factors) all.variables.insert(all.variables.end(), f.variables.begin(), f.variables.end());
  std::sort(all.variables.begin(), all.variables.end());
  model.elements.push_back(std::move(all));
  for (auto& e : fg_elements) model.elements.push_back(std::move(e));
  model.generational = factorization;
  return model;
}

}  // namespace gomea
