#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gomea/conditional.hpp"
#include "gomea/fos.hpp"
#include "gomea/graph.hpp"
#include "gomea/linkage_learning.hpp"
#include "gomea/problems.hpp"
#include "gomea/random.hpp"
#include "gomea/sampler.hpp"

namespace gomea {

enum class LinkageMode {
  univariate,
  static_ucond_hg,
  static_mcond_hg,
  static_mcond_hg_cs,
  fb_lt,
  fb_ucond_hg,
  fb_mcond_hg,
  fb_mcond_hg_cs,
  full
};

inline const std::vector<std::pair<LinkageMode, std::string>>& linkage_mode_table() {
  static const std::vector<std::pair<LinkageMode, std::string>> table{
      {LinkageMode::univariate, "univariate"},
      {LinkageMode::static_ucond_hg, "static_ucond_hg"},
      {LinkageMode::static_mcond_hg, "static_mcond_hg"},
      {LinkageMode::static_mcond_hg_cs, "static_mcond_hg_cs"},
      {LinkageMode::fb_lt, "fb_lt"},
      {LinkageMode::fb_ucond_hg, "fb_ucond_hg"},
      {LinkageMode::fb_mcond_hg, "fb_mcond_hg"},
      {LinkageMode::fb_mcond_hg_cs, "fb_mcond_hg_cs"},
      {LinkageMode::full, "full"}};
  return table;
}

inline std::string to_string(LinkageMode mode) {
  for (const auto& [m, name] : linkage_mode_table())
    if (m == mode) return name;
  return "unknown";
}

inline std::optional<LinkageMode> parse_linkage_mode(const std::string& name) {
  for (const auto& [m, n] : linkage_mode_table())
    if (n == name) return m;
  return std::nullopt;
}

inline std::vector<std::string> linkage_mode_names() {
  std::vector<std::string> out;
  for (const auto& entry : linkage_mode_table()) out.push_back(entry.second);
  return out;
}

inline bool is_static(LinkageMode m) {
  return m == LinkageMode::static_ucond_hg || m == LinkageMode::static_mcond_hg || m == LinkageMode::static_mcond_hg_cs;
}

inline bool is_fitness_based(LinkageMode m) {
  return m == LinkageMode::fb_lt || m == LinkageMode::fb_ucond_hg || m == LinkageMode::fb_mcond_hg ||
         m == LinkageMode::fb_mcond_hg_cs;
}

inline bool is_hybrid(LinkageMode m) { return is_static(m) || (is_fitness_based(m) && m != LinkageMode::fb_lt); }

struct EaConfig {
  Index population_size = 64;
  double tau = 0.35;
  double p_accept = 0.05;
  LinkageMode linkage_mode = LinkageMode::univariate;
  double budget = 1e7;
  std::optional<double> vtr;  // defaults to the problem's
  std::optional<std::chrono::duration<double>> wall_clock_limit;
  std::uint64_t seed = 1;
  Index max_generations = 0;  // 0 = unlimited
  double fi_shrink = 0.5;
  double pc_variance = 1e-30;
  double pc_relative_gap = 1e-13;
  Index max_element_size = 0;  // 0 = min(l, 100)
  AvsConfig avs{};
  AmsConfig ams{};
  ScheduleConfig schedule{};
  DependencyTestConfig dependency{};
  bool record_trace = true;
  bool record_dsm_snapshots = false;
};

struct TraceRow {
  Index generation = 0;
  Index restart = 0;
  double best_objective = 0.0;
  double evaluations = 0.0;
};

struct DsmSnapshot {
  Index generation = 0;
  DependencyMatrix dsm;
};

struct RunResult {
  bool success = false;
  double evaluations_spent = 0.0;
  Index generations = 0;
  Index restarts = 0;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> best_genotype;
  std::string termination;
  std::vector<TraceRow> trace;
  std::vector<DsmSnapshot> dsm_snapshots;
  std::optional<DependencyMatrix> dsm;
  std::vector<IndexPair> learned_vig;
  bool epoch_complete = false;
};

inline Index nis_max(Index population_size) {
  return 1 + static_cast<Index>(std::floor(std::log10(static_cast<double>(population_size))));
}

/// Indices sorted by objective (ties by index), truncated to floor(tau * n), at least 2.
inline std::vector<Index> select_best(std::span<const Solution> population, double tau) {
  std::vector<Index> order(population.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return population[a].objective < population[b].objective; });
  const auto keep = std::max<Index>(2, static_cast<Index>(std::floor(tau * static_cast<double>(population.size()))));
  order.resize(std::min(keep, order.size()));
  return order;
}

/// GG element first in hybrid models, everything else in a fresh random order.
inline std::vector<Index> element_order(const FosModel& model, Rng& rng) {
  const Index m = model.size();
  if (!model.has_generational_element()) return random_permutation(m, rng);
  std::vector<Index> order{0};
  for (Index k : random_permutation(m - 1, rng)) order.push_back(k + 1);
  return order;
}

struct GomOutcome {
  bool accepted = false;
  bool improved = false;
};

/// Resamples the element's variables (conditioned on this solution's parent values),
/// partial-evaluates, and keeps the change if it improves or with probability p_accept.
/// Rejected changes restore genotype, cache and objective exactly.
inline GomOutcome gom_step(Solution& solution, const ElementSampler& sampler, const GrayBoxProblem& problem,
                           EvaluationLedger& ledger, Rng& rng, double multiplier, double p_accept) {
  const auto& vars = sampler.variables();
  const auto touched = problem.touched_subfunctions(vars);
  std::vector<double> old_values(vars.size());
  for (Index c = 0; c < vars.size(); ++c) old_values[c] = solution.genotype[vars[c]];
  std::vector<double> old_cache(touched.size());
  for (Index t = 0; t < touched.size(); ++t) old_cache[t] = solution.subfunction_values[touched[t]];
  const double old_objective = solution.objective;

  const auto values = sampler.sample(solution.genotype, multiplier, rng);
  problem.evaluate_partial(solution, vars, values, ledger);

  GomOutcome out;
  const bool finite = std::isfinite(solution.objective);
  out.improved = finite && solution.objective < old_objective;
  out.accepted = out.improved || (finite && uniform01(rng) < p_accept);
  if (!out.accepted) {
    for (Index c = 0; c < vars.size(); ++c) solution.genotype[vars[c]] = old_values[c];
    for (Index t = 0; t < touched.size(); ++t) solution.subfunction_values[touched[t]] = old_cache[t];
    solution.objective = old_objective;
  }
  return out;
}

/// Pulls the solution towards the elitist one element at a time (never the GG element),
/// keeping the first strict improvement. If no element improves, the solution becomes a copy
/// of the elitist. NIS is reset either way. Returns whether an improvement was found.
inline bool forced_improvement(Solution& solution, const Solution& elitist, const FosModel& model,
                               const GrayBoxProblem& problem, EvaluationLedger& ledger, Rng& rng,
                               double shrink = 0.5) {
  solution.nis = 0;
  const bool skip_first = model.has_generational_element();
  for (Index k : random_permutation(model.size(), rng)) {
    if (skip_first && k == 0) continue;
    if (ledger.exhausted()) break;
    const auto& vars = model.elements[k].variables;
    std::vector<double> moved(vars.size());
    bool differs = false;
    for (Index c = 0; c < vars.size(); ++c) {
      const double x = solution.genotype[vars[c]];
      moved[c] = x + shrink * (elitist.genotype[vars[c]] - x);
      differs = differs || moved[c] != x;
    }
    if (!differs) continue;
    Solution trial = solution;
    problem.evaluate_partial(trial, vars, moved, ledger);
    if (trial.objective < solution.objective) {
      trial.nis = 0;
      solution = std::move(trial);
      return true;
    }
  }
  solution = elitist;
  solution.nis = 0;
  return false;
}

/// Objective variance below `variance` or best-worst gap below `relative_gap * (1 + |best|)`,
/// while the best is still above the value to reach.
inline bool detect_premature_convergence(std::span<const Solution> population, double vtr, double variance = 1e-30,
                                         double relative_gap = 1e-13) {
  if (population.empty()) return false;
  double best = std::numeric_limits<double>::infinity();
  double worst = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (const auto& s : population) {
    best = std::min(best, s.objective);
    worst = std::max(worst, s.objective);
    mean += s.objective;
  }
  if (best <= vtr) return false;
  mean /= static_cast<double>(population.size());
  double var = 0.0;
  for (const auto& s : population) var += (s.objective - mean) * (s.objective - mean);
  var /= static_cast<double>(population.size());
  return var < variance || (worst - best) < relative_gap * (1.0 + std::abs(best));
}

/// One RV-GOMEA run. Holds all per-run state; not shareable across threads.
class Optimizer {
 public:
  Optimizer(const GrayBoxProblem& problem, EaConfig config)
      : problem_(problem),
        config_(std::move(config)),
        rng_(config_.seed),
        ledger_(config_.budget, config_.wall_clock_limit),
        vtr_(config_.vtr.value_or(problem.vtr())),
        n_(config_.population_size) {
    if (n_ < 2) throw std::invalid_argument("population size must be at least 2");
    if (!(config_.tau > 0.0 && config_.tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    const Index l = problem_.dimension();
    if (is_fitness_based(config_.linkage_mode)) {
      dsm_ = DependencyMatrix(l, config_.dependency.eta);
      schedule_ = TestSchedule(l, config_.schedule, rng_);
    }
  }

  RunResult run() {
    result_ = RunResult{};
    if (!ledger_.exhausted()) {
      build_initial_model();
      initialize_population();
      while (!finished_ && !stop_requested()) {
        generation();
        if (finished_) break;
        ++generation_;
        if (config_.max_generations > 0 && generation_ >= config_.max_generations) {
          result_.termination = "generations";
          break;
        }
      }
    }
    finish();
    return std::move(result_);
  }

 private:
  bool stop_requested() {
    if (ledger_.budget_exhausted()) {
      result_.termination = "budget";
      return true;
    }
    if (ledger_.time_exhausted()) {
      result_.termination = "time";
      return true;
    }
    return false;
  }

  /// Records a freshly accepted solution; returns true when it reaches the value to reach.
  bool note(const Solution& s) {
    if (s.objective < result_.best_objective) {
      result_.best_objective = s.objective;
      result_.best_genotype = s.genotype;
    }
    if (!finished_ && s.objective <= vtr_) {
      finished_ = true;
      result_.success = true;
      result_.evaluations_spent = ledger_.spent();
      result_.termination = "vtr";
    }
    return finished_;
  }

  void initialize_population() {
    population_.clear();
    std::uniform_real_distribution<double> init(problem_.lower_init(), problem_.upper_init());
    std::vector<double> x(problem_.dimension());
    for (Index i = 0; i < n_ && !ledger_.exhausted(); ++i) {
      for (auto& v : x) v = init(rng_);
      population_.push_back(problem_.evaluate_full(x, ledger_));
      if (note(population_.back())) return;
    }
    if (population_.size() < n_) {
      finished_ = true;
      result_.termination = "budget";
      return;
    }
    place_elitist();
    segment_generation_ = 0;
    previous_selection_mean_.reset();
    mean_shift_.assign(problem_.dimension(), 0.0);
  }

  void place_elitist() {
    Index best = 0;
    for (Index i = 1; i < population_.size(); ++i)
      if (population_[i].objective < population_[best].objective) best = i;
    if (best != 0) population_[0] = population_[best];
  }

  // -------------------------------------------------------------------------------------------
  // model construction

  void build_initial_model() {
    const auto mode = config_.linkage_mode;
    if (mode == LinkageMode::univariate || mode == LinkageMode::full) {
      install_model(build_static(mode == LinkageMode::univariate ? FosKind::univariate : FosKind::full,
                                 problem_.dimension()));
    } else if (is_static(mode)) {
      const auto& edges = problem_.analytic_vig();
      install_model(model_from_vig(VariableInteractionGraph::from_edges(problem_.dimension(), edges)));
    } else {
      rebuild_learned_model();
      dsm_->clear_changed();
    }
  }

  void rebuild_learned_model() {
    if (config_.linkage_mode == LinkageMode::fb_lt) {
      install_model(build_linkage_tree(*dsm_, config_.max_element_size));
    } else {
      install_model(model_from_vig(derive_vig(*dsm_)));
    }
  }

  FosModel model_from_vig(const VariableInteractionGraph& vig) {
    const Index start = std::uniform_int_distribution<Index>(0, problem_.dimension() - 1)(rng_);
    switch (config_.linkage_mode) {
      case LinkageMode::static_ucond_hg:
      case LinkageMode::fb_ucond_hg: {
        auto f = factorize(vig, FosKind::ucond, start);
        auto fg = f.factors;
        return compose_hg(f, std::move(fg), FosKind::ucond);
      }
      case LinkageMode::static_mcond_hg:
      case LinkageMode::fb_mcond_hg: {
        auto f = factorize(vig, FosKind::mcond, start);
        auto fg = f.factors;
        return compose_hg(f, std::move(fg), FosKind::mcond);
      }
      default: {
        auto f = factorize(vig, FosKind::mcond, start);
        return compose_hg(f, clique_seed(vig), FosKind::clique_seeded);
      }
    }
  }

  /// Swaps in a new model; elements that survive unchanged keep their variance multiplier.
  void install_model(FosModel model) {
    std::map<std::pair<std::vector<Index>, std::vector<Index>>, double> previous;
    for (Index k = 0; k < model_.size(); ++k)
      previous[{model_.elements[k].variables, model_.elements[k].parents}] = multipliers_[k];
    multipliers_.assign(model.size(), 1.0);
    for (Index k = 0; k < model.size(); ++k) {
      auto it = previous.find({model.elements[k].variables, model.elements[k].parents});
      if (it != previous.end()) multipliers_[k] = it->second;
    }
    model_ = std::move(model);
  }

  // -------------------------------------------------------------------------------------------
  // generation

  void learn_dependencies() {
    if (!dsm_) return;
    if (!schedule_.paused(generation_) && !schedule_.epoch_complete()) {
      const ProbeRegion region = probe_region(population_, config_.dependency);
      const Solution& base = population_[0];
      schedule_.run_generation(generation_, *dsm_, [&](Index i, Index j) -> std::optional<double> {
        const DependencyProbe probe{draw_probe_step(base.genotype[i], i, region, rng_, config_.dependency),
                                    draw_probe_step(base.genotype[j], j, region, rng_, config_.dependency)};
        auto r = dependency_test(problem_, base, i, j, probe, ledger_, config_.dependency);
        if (!r) return std::nullopt;
        return r->strength;
      });
    }
    if (dsm_->changed_this_generation()) {
      dsm_->clear_changed();
      rebuild_learned_model();
      if (config_.record_dsm_snapshots) result_.dsm_snapshots.push_back({generation_, *dsm_});
    }
  }

  std::vector<const std::vector<double>*> selection() const {
    std::vector<const std::vector<double>*> out;
    for (Index i : select_best(population_, config_.tau)) out.push_back(&population_[i].genotype);
    return out;
  }

  void update_mean_shift() {
    const auto sel = selection();
    std::vector<double> mean(problem_.dimension(), 0.0);
    for (const auto* x : sel)
      for (Index v = 0; v < mean.size(); ++v) mean[v] += (*x)[v];
    for (auto& m : mean) m /= static_cast<double>(sel.size());
    if (previous_selection_mean_)
      for (Index v = 0; v < mean.size(); ++v) mean_shift_[v] = mean[v] - (*previous_selection_mean_)[v];
    previous_selection_mean_ = std::move(mean);
  }

  void generation() {
    learn_dependencies();
    if (stop_requested()) {
      finished_ = true;
      return;
    }
    update_mean_shift();
    improved_.assign(n_, 0);

    for (Index k : element_order(model_, rng_)) {
      if (k == 0 && model_.has_generational_element()) {
        generational_step();
      } else {
        factorized_step(k);
      }
      if (finished_ || stop_requested()) {
        finished_ = true;
        return;
      }
    }

    if (segment_generation_ > 0) anticipated_mean_shift();
    if (finished_ || stop_requested()) {
      finished_ = true;
      return;
    }

    const Index limit = nis_max(n_);
    for (Index i = 1; i < n_; ++i) {
      auto& s = population_[i];
      s.nis = improved_[i] ? 0 : s.nis + 1;
    }
    for (Index i = 1; i < n_; ++i) {
      auto& s = population_[i];
      if (s.nis <= limit) continue;
      forced_improvement(s, population_[0], model_, problem_, ledger_, rng_, config_.fi_shrink);
      if (note(s)) return;
      if (stop_requested()) {
        finished_ = true;
        return;
      }
    }

    place_elitist();
    ++segment_generation_;
    ++result_.generations;
    if (config_.record_trace)
      result_.trace.push_back({generation_, result_.restarts, result_.best_objective, ledger_.spent()});

    if (detect_premature_convergence(population_, vtr_, config_.pc_variance, config_.pc_relative_gap)) restart();
  }

  void factorized_step(Index k) {
    const auto sampler = ElementSampler::estimate(selection(), model_.elements[k]);
    const double elitist = population_[0].objective;
    std::vector<std::vector<double>> improvers;
    for (Index i = 1; i < n_; ++i) {
      if (ledger_.exhausted()) break;
      auto& s = population_[i];
      const auto out = gom_step(s, sampler, problem_, ledger_, rng_, multipliers_[k], config_.p_accept);
      if (out.improved) improved_[i] = 1;
      if (out.accepted && s.objective < elitist) improvers.push_back(s.genotype);
      if (out.accepted && note(s)) return;
    }
    multipliers_[k] = adapt_variance(multipliers_[k], !improvers.empty(),
                                     standard_deviation_ratio(sampler, improvers), config_.avs);
  }

  void generational_step() {
    const auto sel = selection();
    const auto& factorization = *model_.generational;
    std::vector<ElementSampler> samplers;
    samplers.reserve(factorization.factors.size());
    for (const auto& f : factorization.factors) samplers.push_back(ElementSampler::estimate(sel, f));

    const double elitist = population_[0].objective;
    std::vector<std::vector<double>> improvers;
    std::vector<double> x;
    for (Index i = 1; i < n_; ++i) {
      if (ledger_.exhausted()) break;
      auto& s = population_[i];
      x = s.genotype;
      forward_sample(factorization, samplers, x, multipliers_[0], rng_);
      Solution candidate = problem_.evaluate_full(x, ledger_);
      const bool finite = std::isfinite(candidate.objective);
      const bool improved = finite && candidate.objective < s.objective;
      if (!(improved || (finite && uniform01(rng_) < config_.p_accept))) continue;
      candidate.nis = s.nis;
      s = std::move(candidate);
      if (improved) improved_[i] = 1;
      if (s.objective < elitist) improvers.push_back(s.genotype);
      if (note(s)) return;
    }
    double sdr = 0.0;
    for (const auto& sampler : samplers) sdr = std::max(sdr, standard_deviation_ratio(sampler, improvers));
    multipliers_[0] = adapt_variance(multipliers_[0], !improvers.empty(), sdr, config_.avs);
  }

  void anticipated_mean_shift() {
    const Index count = static_cast<Index>(
        std::ceil(config_.ams.fraction * config_.tau * static_cast<double>(n_)));
    const auto order = random_permutation(n_ - 1, rng_);
    std::vector<double> x;
    for (Index c = 0; c < std::min(count, n_ - 1); ++c) {
      if (ledger_.exhausted()) return;
      auto& s = population_[order[c] + 1];
      x = s.genotype;
      apply_ams(x, mean_shift_, 1.0, config_.ams);
      Solution candidate = problem_.evaluate_full(x, ledger_);
      if (!(std::isfinite(candidate.objective) && candidate.objective < s.objective)) continue;
      candidate.nis = s.nis;
      s = std::move(candidate);
      improved_[order[c] + 1] = 1;
      if (note(s)) return;
    }
  }

  void restart() {
    ++result_.restarts;
    if (dsm_) schedule_.open_epoch(rng_);
    std::fill(multipliers_.begin(), multipliers_.end(), 1.0);
    initialize_population();
  }

  void finish() {
    if (!result_.success) result_.evaluations_spent = ledger_.spent();
    if (result_.termination.empty()) result_.termination = "budget";
    if (dsm_) {
      result_.dsm = *dsm_;
      result_.learned_vig = derive_vig(*dsm_).edges();
      result_.epoch_complete = schedule_.epoch_complete();
    }
  }

  const GrayBoxProblem& problem_;
  EaConfig config_;
  Rng rng_;
  EvaluationLedger ledger_;
  double vtr_;
  Index n_;
  std::vector<Solution> population_;
  FosModel model_;
  std::vector<double> multipliers_;
  std::optional<DependencyMatrix> dsm_;
  TestSchedule schedule_;
  std::optional<std::vector<double>> previous_selection_mean_;
  std::vector<double> mean_shift_;
  std::vector<unsigned char> improved_;
  Index generation_ = 0;
  Index segment_generation_ = 0;
  bool finished_ = false;
  RunResult result_;
};

inline RunResult run(const GrayBoxProblem& problem, const EaConfig& config) {
  return Optimizer(problem, config).run();
}

// ---------------------------------------------------------------------------------------------
// serialization

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json out{{"success", r.success},
                     {"evaluations_spent", r.evaluations_spent},
                     {"generations", r.generations},
                     {"restarts", r.restarts},
                     {"best_objective", format_double(r.best_objective)},
                     {"termination", r.termination}};
  if (r.dsm) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [u, v] : r.learned_vig) edges.push_back({u, v});
    out["learned_vig"] = std::move(edges);
    out["epoch_complete"] = r.epoch_complete;
  }
  return out;
}

inline void write_trace_csv(std::ostream& out, const RunResult& r) {
  out << "generation,restart,best_objective,evaluations\n";
  for (const auto& row : r.trace)
    out << row.generation << ',' << row.restart << ',' << format_double(row.best_objective) << ','
        << format_double(row.evaluations) << '\n';
}

}  // namespace gomea
