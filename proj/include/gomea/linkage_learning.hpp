#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gomea/graph.hpp"
#include "gomea/problems.hpp"
#include "gomea/random.hpp"

namespace gomea {

/// Symmetric matrix of learned pairwise dependency strengths, plus which pairs were tested.
class DependencyMatrix {
 public:
  DependencyMatrix() = default;
  explicit DependencyMatrix(Index n, double eta = 1e-6) : n_(n), eta_(eta), strengths_(n * n, 0.0), tested_(n * n, 0) {}

  Index size() const { return n_; }
  double eta() const { return eta_; }

  double strength(Index i, Index j) const { return strengths_[i * n_ + j]; }
  bool tested(Index i, Index j) const { return tested_[i * n_ + j] != 0; }

  /// Stores d (clamped to [0,1], zeroed below eta) for the unordered pair and marks it tested.
  void set_strength(Index i, Index j, double d) {
    if (i >= n_ || j >= n_ || i == j) throw std::invalid_argument("invalid DSM pair");
    d = std::clamp(d, 0.0, 1.0);
    if (d < eta_) d = 0.0;
    if (strengths_[i * n_ + j] != d) changed_ = true;
    strengths_[i * n_ + j] = strengths_[j * n_ + i] = d;
    tested_[i * n_ + j] = tested_[j * n_ + i] = 1;
  }

  void clear_tested() { std::fill(tested_.begin(), tested_.end(), 0); }

  bool changed_this_generation() const { return changed_; }
  void clear_changed() { changed_ = false; }

  Index nonzero_pairs() const {
    Index count = 0;
    for (Index i = 0; i < n_; ++i)
      for (Index j = i + 1; j < n_; ++j) count += strength(i, j) > 0.0;
    return count;
  }

  const std::vector<double>& raw() const { return strengths_; }

 private:
  Index n_ = 0;
  double eta_ = 1e-6;
  std::vector<double> strengths_;
  std::vector<unsigned char> tested_;
  bool changed_ = false;
};

struct DependencyProbe {
  double step_i = 0.0;
  double step_j = 0.0;
};

struct DependencyTestResult {
  double strength = 0.0;
  double delta_i = 0.0;
  double delta_ij = 0.0;
};

struct DependencyTestConfig {
  double relative_epsilon = 1e-9;
  double eta = 1e-6;
  double step_low = 0.5;
  double step_high = 1.5;
  double sigma_floor = 1e-8;
  double box_inflation = 0.1;
};

/// Strength from the two differences: 1 - ratio of the smaller to the larger magnitude when
/// they share a sign, 1 when they do not. Matches the case split on delta_i >= delta_ij for
/// positive differences and keeps the result in [0,1] otherwise.
inline double dependency_strength(double delta_i, double delta_ij) {
  const double a = std::abs(delta_i);
  const double b = std::abs(delta_ij);
  if (delta_i * delta_ij <= 0.0) return (a == 0.0 && b == 0.0) ? 0.0 : 1.0;
  return 1.0 - std::min(a, b) / std::max(a, b);
}

/// Four-point fitness dependency test around `base` for the unordered pair {i,j}.
/// The pair is canonicalized to (min, max) so the result does not depend on argument order.
/// Only sub-functions reading both variables can make the two differences disagree, so the
/// differences are accumulated over those alone; every other sub-function would add the same
/// term to both and only dilute the ratio. Pairs sharing no sub-function cost nothing and come
/// out independent. Each shared sub-function is evaluated at the three perturbed points (the
/// base value is cached). Returns nullopt if any probed value is non-finite.
inline std::optional<DependencyTestResult> dependency_test(const GrayBoxProblem& problem, const Solution& base,
                                                           Index i, Index j, DependencyProbe probe,
                                                           EvaluationLedger& ledger,
                                                           const DependencyTestConfig& config = {}) {
  if (i == j) throw std::invalid_argument("dependency test requires two distinct variables");
  if (i >= problem.dimension() || j >= problem.dimension()) throw std::invalid_argument("variable out of range");
  if (probe.step_i == 0.0 || probe.step_j == 0.0) throw std::invalid_argument("perturbations must be nonzero");
  if (i > j) {
    std::swap(i, j);
    std::swap(probe.step_i, probe.step_j);
  }

  const auto& of_i = problem.subfunctions_of(i);
  const auto& of_j = problem.subfunctions_of(j);
  std::vector<Index> shared;
  std::set_intersection(of_i.begin(), of_i.end(), of_j.begin(), of_j.end(), std::back_inserter(shared));
  if (shared.empty()) return DependencyTestResult{};

  std::vector<double> x = base.genotype;
  const double a_i = x[i];
  const double a_j = x[j];
  const auto& subs = problem.subfunctions();
  double delta_i = 0.0;
  double delta_ij = 0.0;
  for (Index t : shared) {
    const double f00 = subs[t].evaluate(x);
    x[i] = a_i + probe.step_i;
    const double f10 = subs[t].evaluate(x);
    x[i] = a_i;
    x[j] = a_j + probe.step_j;
    const double f01 = subs[t].evaluate(x);
    x[i] = a_i + probe.step_i;
    const double f11 = subs[t].evaluate(x);
    x[i] = a_i;
    x[j] = a_j;
    delta_i += f00 - f10;
    delta_ij += f01 - f11;
  }
  ledger.charge(3.0 * problem.partial_cost(shared));

  if (!std::isfinite(delta_i) || !std::isfinite(delta_ij)) return std::nullopt;

  DependencyTestResult result{0.0, delta_i, delta_ij};
  const double epsilon = config.relative_epsilon * std::max({1.0, std::abs(delta_i), std::abs(delta_ij)});
  if (std::abs(delta_i - delta_ij) >= epsilon) {
    result.strength = dependency_strength(delta_i, delta_ij);
    if (result.strength < config.eta) result.strength = 0.0;
  }
  return result;
}

/// Per-variable spread and bounding box of the population, used to size probe steps.
struct ProbeRegion {
  std::vector<double> sigma;
  std::vector<double> lower;
  std::vector<double> upper;
};

inline ProbeRegion probe_region(std::span<const Solution> population, const DependencyTestConfig& config = {}) {
  if (population.empty()) throw std::invalid_argument("probe region needs a nonempty population");
  const Index n = population.front().genotype.size();
  ProbeRegion region{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  const auto count = static_cast<double>(population.size());
  for (Index v = 0; v < n; ++v) {
    double lo = population.front().genotype[v];
    double hi = lo;
    double mean = 0.0;
    for (const auto& s : population) {
      lo = std::min(lo, s.genotype[v]);
      hi = std::max(hi, s.genotype[v]);
      mean += s.genotype[v];
    }
    mean /= count;
    double var = 0.0;
    for (const auto& s : population) var += (s.genotype[v] - mean) * (s.genotype[v] - mean);
    region.sigma[v] = std::max(std::sqrt(var / count), config.sigma_floor);
    const double pad = config.box_inflation * (hi - lo);
    region.lower[v] = lo - pad;
    region.upper[v] = hi + pad;
  }
  return region;
}

/// Step of magnitude U(low*sigma, high*sigma) with a random sign, flipped when the probe would
/// leave the inflated population box.
inline double draw_probe_step(double origin, Index v, const ProbeRegion& region, Rng& rng,
                              const DependencyTestConfig& config = {}) {
  const double sigma = region.sigma[v];
  double step = std::uniform_real_distribution<double>(config.step_low * sigma, config.step_high * sigma)(rng);
  if (uniform01(rng) < 0.5) step = -step;
  const double target = origin + step;
  if (target < region.lower[v] || target > region.upper[v]) step = -step;
  return step;
}

struct ScheduleConfig {
  Index tests_per_generation = 0;  // 0 means one iteration of l tests
  Index pause_window = 5;
  Index pause_length = 10;
};

struct ExecutedTest {
  Index i = 0;
  Index j = 0;
  double strength = 0.0;
};

/// Spreads one epoch of pairwise tests over the generations. The only pause rule is the
/// long-interval one: `pause_window` consecutive iterations without a single dependency found
/// suspend testing for `pause_length` generations.
class TestSchedule {
 public:
  TestSchedule() = default;
  TestSchedule(Index n, ScheduleConfig config, Rng& rng) : n_(n), config_(config) { open_epoch(rng); }

  void open_epoch(Rng& rng) {
    pending_.clear();
    std::vector<IndexPair> pairs;
    pairs.reserve(n_ * (n_ - 1) / 2);
    for (Index i = 0; i < n_; ++i)
      for (Index j = i + 1; j < n_; ++j) pairs.emplace_back(i, j);
    for (Index k : random_permutation(pairs.size(), rng)) pending_.push_back(pairs[k]);
    window_.clear();
    paused_until_ = 0;
  }

  Index per_generation_budget() const { return config_.tests_per_generation > 0 ? config_.tests_per_generation : n_; }
  bool epoch_complete() const { return pending_.empty(); }
  bool paused(Index generation) const { return generation < paused_until_; }
  Index paused_until() const { return paused_until_; }
  Index pending() const { return pending_.size(); }
  const std::deque<Index>& window() const { return window_; }

  /// Runs up to one iteration of tests. `tester(i, j)` returns the strength or nullopt when the
  /// test had to be discarded; discarded pairs go to the back of the queue.
  template <class Tester>
  std::vector<ExecutedTest> run_generation(Index generation, DependencyMatrix& dsm, Tester&& tester) {
    std::vector<ExecutedTest> executed;
    if (paused(generation) || pending_.empty()) return executed;
    const Index budget = per_generation_budget();
    Index found = 0;
    for (Index attempt = 0; attempt < budget && !pending_.empty(); ++attempt) {
      const auto [i, j] = pending_.front();
      pending_.pop_front();
      std::optional<double> strength = tester(i, j);
      if (!strength) {
        pending_.push_back({i, j});
        continue;
      }
      dsm.set_strength(i, j, *strength);
      const double stored = dsm.strength(i, j);
      executed.push_back({i, j, stored});
      if (stored > 0.0) ++found;
    }
    window_.push_back(found);
    while (window_.size() > config_.pause_window) window_.pop_front();
    if (config_.pause_window > 0 && window_.size() == config_.pause_window &&
        std::all_of(window_.begin(), window_.end(), [](Index c) { return c == 0; })) {
      paused_until_ = generation + 1 + config_.pause_length;
      window_.clear();
    }
    return executed;
  }

 private:
  Index n_ = 0;
  ScheduleConfig config_{};
  std::deque<IndexPair> pending_;
  std::deque<Index> window_;
  Index paused_until_ = 0;
};

/// Edge (i,j) for every strictly positive strength.
inline VariableInteractionGraph derive_vig(const DependencyMatrix& dsm) {
  VariableInteractionGraph g(dsm.size());
  for (Index i = 0; i < dsm.size(); ++i)
    for (Index j = i + 1; j < dsm.size(); ++j)
      if (dsm.strength(i, j) > 0.0) g.add_edge(i, j);
  return g;
}

inline std::optional<VariableInteractionGraph> maybe_rebuild(DependencyMatrix& dsm) {
  if (!dsm.changed_this_generation()) return std::nullopt;
  dsm.clear_changed();
  return derive_vig(dsm);
}

inline void write_dsm_csv(std::ostream& out, const DependencyMatrix& dsm) {
  char buf[32];
  for (Index i = 0; i < dsm.size(); ++i) {
    for (Index j = 0; j < dsm.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", dsm.strength(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

inline nlohmann::json dsm_sidecar(Index generation, const std::string& problem, std::uint64_t seed) {
  return {{"generation", generation}, {"problem", problem}, {"seed", seed}};
}

}  // namespace gomea
