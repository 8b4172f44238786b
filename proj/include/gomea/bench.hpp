#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gomea/linkage_learning.hpp"
#include "gomea/optimizer.hpp"
#include "gomea/problems.hpp"
#include "gomea/random.hpp"

namespace gomea {

constexpr int kSchemaVersion = 1;

struct RunOutcome {
  bool success = false;
  double evaluations = 0.0;
};

/// Mean evaluations of the successful runs divided by the success fraction; +inf if none succeed.
inline double corrected_metric(std::span<const RunOutcome> runs) {
  if (runs.empty()) throw std::invalid_argument("corrected metric needs at least one run");
  double sum = 0.0;
  Index successes = 0;
  for (const auto& r : runs)
    if (r.success) {
      sum += r.evaluations;
      ++successes;
    }
  if (successes == 0) return std::numeric_limits<double>::infinity();
  const double mean = sum / static_cast<double>(successes);
  return mean / (static_cast<double>(successes) / static_cast<double>(runs.size()));
}

inline double success_fraction(std::span<const RunOutcome> runs) {
  if (runs.empty()) return 0.0;
  const auto s = std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.success; });
  return static_cast<double>(s) / static_cast<double>(runs.size());
}

// ---------------------------------------------------------------------------------------------
// seeds and parallelism

/// FNV-1a, used only to fold strings into seeds.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, const std::string& problem, const std::string& mode,
                                 Index dimension, Index population_size, Index repeat, Index bisection = 0) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t part : {fnv1a(problem), fnv1a(mode), std::uint64_t{dimension}, std::uint64_t{population_size},
                             std::uint64_t{repeat}, std::uint64_t{bisection}})
    h = mix64(h ^ part);
  return h;
}

/// Worker count: GOMEA_THREADS when set to a positive integer, else the hardware concurrency.
inline Index worker_count() {
  if (const char* env = std::getenv("GOMEA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<Index>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, count) across up to `threads` workers. Results land at their index,
/// so the output never depends on completion order.
template <class Fn>
auto parallel_map(Index count, Fn fn, Index threads = worker_count()) -> std::vector<decltype(fn(Index{}))> {
  std::vector<decltype(fn(Index{}))> out(count);
  threads = std::max<Index>(1, std::min(threads, count));
  if (threads == 1) {
    for (Index i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (Index t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------------------------------------
// bisection

struct BisectionSpec {
  Index repeats_per_size = 30;
  Index bisection_repeats = 5;
  Index min_size = 8;
  Index max_size = 2048;
  double stop_ratio = 1.1;
};

inline Index start_population_size(Index dimension, const BisectionSpec& spec = {}) {
  const double raw = 17.0 + 3.0 * std::pow(static_cast<double>(dimension), 1.5);
  return std::clamp<Index>(static_cast<Index>(std::llround(raw)), spec.min_size, spec.max_size);
}

struct ProbeRecord {
  Index size = 0;
  double metric = std::numeric_limits<double>::infinity();
  double success_fraction = 0.0;
  std::vector<RunOutcome> runs;
};

struct BisectionResult {
  Index best_size = 0;
  double metric = std::numeric_limits<double>::infinity();
  std::vector<ProbeRecord> probes;  // in probing order
};

/// Population-size search: halve from `start` while the metric improves (doubling first if the
/// start fails outright, and doubling while improving if the first halving does not help), then shrink the bracket around the best size by probing geometric
/// midpoints, until upper/lower <= stop_ratio or the bracket spans at most two sizes.
/// Returns the probed size with the lowest metric (smaller size on ties).
inline BisectionResult bisect_population_size(const std::function<ProbeRecord(Index)>& evaluate, Index start,
                                              const BisectionSpec& spec = {}) {
  if (spec.min_size == 0 || spec.min_size > spec.max_size) throw std::invalid_argument("invalid size range");
  BisectionResult result;
  std::map<Index, double> seen;
  auto probe = [&](Index size) {
    size = std::clamp(size, spec.min_size, spec.max_size);
    if (auto it = seen.find(size); it != seen.end()) return it->second;
    ProbeRecord rec = evaluate(size);
    rec.size = size;
    seen[size] = rec.metric;
    result.probes.push_back(std::move(rec));
    return seen[size];
  };

  Index best = std::clamp(start, spec.min_size, spec.max_size);
  double best_metric = probe(best);
  while (std::isinf(best_metric) && best < spec.max_size) {
    best = std::min(spec.max_size, best * 2);
    best_metric = probe(best);
  }
  // Every size up to the largest failed; refining between failures tells nothing.
  if (std::isinf(best_metric)) {
    result.best_size = best;
    return result;
  }
  const Index first = best;
  while (best > spec.min_size) {
    const Index half = std::max(spec.min_size, best / 2);
    const double m = probe(half);
    if (!(m < best_metric)) break;
    best = half;
    best_metric = m;
  }
  // A start below the optimum: grow instead.
  while (best >= first && best < spec.max_size) {
    const Index twice = std::min(spec.max_size, best * 2);
    const double m = probe(twice);
    if (!(m < best_metric)) break;
    best = twice;
    best_metric = m;
  }

  Index lo = std::max(spec.min_size, best / 2);
  Index hi = std::min(spec.max_size, best * 2);
  auto geometric_mid = [](Index a, Index b) {
    return static_cast<Index>(std::llround(std::sqrt(static_cast<double>(a) * static_cast<double>(b))));
  };
  while (hi > lo + 2 && static_cast<double>(hi) / static_cast<double>(lo) > spec.stop_ratio) {
    Index left = geometric_mid(lo, best);
    if (left >= best) left = best - 1;
    Index right = geometric_mid(best, hi);
    if (right <= best) right = best + 1;
    bool moved = false;
    if (left > lo) {
      const double m = probe(left);
      if (m < best_metric) {
        hi = best;
        best = left;
        best_metric = m;
        moved = true;
      } else {
        lo = left;
      }
    } else {
      lo = best;
    }
    if (!moved) {
      if (right < hi) {
        const double m = probe(right);
        if (m < best_metric) {
          lo = best;
          best = right;
          best_metric = m;
        } else {
          hi = right;
        }
      } else {
        hi = best;
      }
    }
    if (lo > best) lo = best;
    if (hi < best) hi = best;
    if (lo == best && hi == best) break;
  }

  for (const auto& rec : result.probes)
    if (rec.metric < result.metric || (rec.metric == result.metric && (result.best_size == 0 || rec.size < result.best_size))) {
      result.metric = rec.metric;
      result.best_size = rec.size;
    }
  if (result.best_size == 0) result.best_size = result.probes.front().size;
  return result;
}

/// One probe of the EA: `spec.repeats_per_size` seeded runs at the given population size.
inline ProbeRecord probe_population_size(const GrayBoxProblem& problem, const EaConfig& base, Index size,
                                         std::uint64_t master_seed, Index bisection, Index repeats,
                                         Index threads = worker_count()) {
  const std::string mode = to_string(base.linkage_mode);
  auto runs = parallel_map(
      repeats,
      [&](Index r) {
        EaConfig cfg = base;
        cfg.population_size = size;
        cfg.record_trace = false;
        cfg.seed = derive_seed(master_seed, problem.name(), mode, problem.dimension(), size, r, bisection);
        const RunResult res = run(problem, cfg);
        return RunOutcome{res.success, res.evaluations_spent};
      },
      threads);
  ProbeRecord rec;
  rec.size = size;
  rec.metric = corrected_metric(runs);
  rec.success_fraction = success_fraction(runs);
  rec.runs = std::move(runs);
  return rec;
}

inline BisectionResult bisect_population_size(const GrayBoxProblem& problem, const EaConfig& base,
                                              const BisectionSpec& spec, std::uint64_t master_seed,
                                              Index bisection = 0, Index threads = worker_count()) {
  return bisect_population_size(
      [&](Index size) {
        return probe_population_size(problem, base, size, master_seed, bisection, spec.repeats_per_size, threads);
      },
      start_population_size(problem.dimension(), spec), spec);
}

struct BisectionSummary {
  Index median_size = 0;
  double median_metric = std::numeric_limits<double>::infinity();
  std::vector<BisectionResult> repeats;
};

/// Median of the best sizes and, separately, of the best metrics (lower median for even counts).
inline BisectionSummary summarize(std::vector<BisectionResult> repeats) {
  if (repeats.empty()) throw std::invalid_argument("no bisection results");
  BisectionSummary s;
  std::vector<Index> sizes;
  std::vector<double> metrics;
  for (const auto& r : repeats) {
    sizes.push_back(r.best_size);
    metrics.push_back(r.metric);
  }
  std::sort(sizes.begin(), sizes.end());
  std::sort(metrics.begin(), metrics.end());
  s.median_size = sizes[(sizes.size() - 1) / 2];
  s.median_metric = metrics[(metrics.size() - 1) / 2];
  s.repeats = std::move(repeats);
  return s;
}

// ---------------------------------------------------------------------------------------------
// extrapolation

struct PowerLaw {
  double slope = 0.0;
  double intercept = 0.0;  // natural log

  double predict(double dimension) const { return std::exp(intercept + slope * std::log(dimension)); }
  Index predict_size(double dimension) const { return static_cast<Index>(std::llround(predict(dimension))); }
};

/// Least-squares line through (log dimension, log size) with the slope clamped at zero.
inline PowerLaw extrapolate_sizes(std::span<const std::pair<Index, Index>> dimension_size) {
  if (dimension_size.size() < 2) throw std::invalid_argument("extrapolation needs at least two points");
  const auto count = static_cast<double>(dimension_size.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [d, n] : dimension_size) {
    if (d == 0 || n == 0) throw std::invalid_argument("extrapolation needs positive values");
    mx += std::log(static_cast<double>(d));
    my += std::log(static_cast<double>(n));
  }
  mx /= count;
  my /= count;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [d, n] : dimension_size) {
    const double x = std::log(static_cast<double>(d)) - mx;
    sxx += x * x;
    sxy += x * (std::log(static_cast<double>(n)) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("extrapolation needs at least two distinct dimensions");
  PowerLaw fit;
  fit.slope = std::max(0.0, sxy / sxx);
  fit.intercept = my - fit.slope * mx;
  return fit;
}

// ---------------------------------------------------------------------------------------------
// Mann-Whitney U

struct MannWhitneyResult {
  double u = 0.0;  // U of the first sample
  double p = 1.0;  // two-sided
  bool exact = false;
};

namespace detail {

inline std::vector<double> midranks(const std::vector<double>& values) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (Index i = 0; i < order.size();) {
    Index j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Two-sided test. Exact enumeration of all label assignments (midranks for ties) when both
/// samples have at most `exact_limit` values; normal approximation with tie and continuity
/// correction otherwise.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, Index exact_limit = 8) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Mann-Whitney U needs two nonempty samples");
  const Index n1 = a.size();
  const Index n2 = b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = detail::midranks(pooled);
  const double n1d = static_cast<double>(n1);
  const double n2d = static_cast<double>(n2);

  auto u_of = [&](auto&& in_first) {
    double r = 0.0;
    for (Index k = 0; k < pooled.size(); ++k)
      if (in_first(k)) r += ranks[k];
    return r - n1d * (n1d + 1.0) / 2.0;
  };
  MannWhitneyResult out;
  out.u = u_of([&](Index k) { return k < n1; });
  const double mean_u = n1d * n2d / 2.0;
  const double observed = std::abs(out.u - mean_u);

  if (n1 <= exact_limit && n2 <= exact_limit) {
    out.exact = true;
    const Index total = n1 + n2;
    std::vector<char> mask(total, 0);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n1), 1);
    std::sort(mask.begin(), mask.end());
    Index extreme = 0;
    Index count = 0;
    do {
      const double u = u_of([&](Index k) { return mask[k] != 0; });
      if (std::abs(u - mean_u) >= observed - 1e-9) ++extreme;
      ++count;
    } while (std::next_permutation(mask.begin(), mask.end()));
    out.p = std::min(1.0, static_cast<double>(extreme) / static_cast<double>(count));
    return out;
  }

  const double n = n1d + n2d;
  std::map<double, Index> ties;
  for (double v : pooled) ++ties[v];
  double tie_term = 0.0;
  for (const auto& [v, t] : ties) {
    const double td = static_cast<double>(t);
    tie_term += td * td * td - td;
  }
  const double var = n1d * n2d / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return out;
  const double z = std::max(0.0, observed - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

inline double bonferroni(double p, Index tests) { return std::min(1.0, p * static_cast<double>(std::max<Index>(tests, 1))); }

// ---------------------------------------------------------------------------------------------
// DSM aggregation

/// Element-wise mean. The result keeps every nonzero mean (no strength cut-off).
inline DependencyMatrix aggregate_dsms(std::span<const DependencyMatrix> dsms) {
  if (dsms.empty()) throw std::invalid_argument("no DSMs to aggregate");
  const Index n = dsms.front().size();
  for (const auto& d : dsms)
    if (d.size() != n) throw std::invalid_argument("DSM dimensions differ");
  DependencyMatrix out(n, 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (const auto& d : dsms) sum += d.strength(i, j);
      out.set_strength(i, j, sum / static_cast<double>(dsms.size()));
    }
  out.clear_changed();
  return out;
}

// ---------------------------------------------------------------------------------------------
// experiment matrix

struct ScalabilityRecord {
  std::string problem;
  std::string mode;
  Index dimension = 0;
  Index population_size = 0;
  double corrected_evaluations = std::numeric_limits<double>::infinity();
  double success_fraction = 0.0;
  std::vector<RunOutcome> runs;            // at population_size, from the median bisection
  std::vector<double> bisection_metrics;  // best metric of every bisection repeat
  std::vector<Index> bisection_sizes;
};

struct MatrixSpec {
  std::vector<std::string> problems;
  std::vector<Index> dimensions;
  std::vector<LinkageMode> modes;
  std::uint64_t master_seed = 1;
  BisectionSpec bisection{};
  EaConfig base{};
};

struct MatrixResult {
  std::vector<ScalabilityRecord> records;
  nlohmann::json trace = nlohmann::json::array();
};

inline nlohmann::json to_json(const ProbeRecord& p) {
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& r : p.runs) evals.push_back(r.success ? nlohmann::json(r.evaluations) : nlohmann::json(nullptr));
  return {{"size", p.size},
          {"metric", format_double(p.metric)},
          {"success_fraction", p.success_fraction},
          {"evaluations", std::move(evals)}};
}

/// Runs every (problem, dimension, mode) cell: `bisection_repeats` independent bisections,
/// reporting the median best size. Dimensions are mapped to the closest compatible one.
inline MatrixResult run_matrix(const MatrixSpec& spec, Index threads = worker_count()) {
  MatrixResult out;
  for (const auto& name : spec.problems) {
    for (Index nominal : spec.dimensions) {
      const Index dim = closest_compatible_dimension(name, nominal);
      const GrayBoxProblem problem = make_problem(name, dim);
      for (LinkageMode mode : spec.modes) {
        EaConfig base = spec.base;
        base.linkage_mode = mode;
        std::vector<BisectionResult> repeats;
        for (Index b = 0; b < spec.bisection.bisection_repeats; ++b)
          repeats.push_back(bisect_population_size(problem, base, spec.bisection, spec.master_seed, b, threads));
        BisectionSummary summary = summarize(repeats);

        ScalabilityRecord rec;
        rec.problem = name;
        rec.mode = to_string(mode);
        rec.dimension = dim;
        rec.population_size = summary.median_size;
        for (const auto& r : summary.repeats) {
          rec.bisection_metrics.push_back(r.metric);
          rec.bisection_sizes.push_back(r.best_size);
        }
        // Report the probe of the median size from the first bisection that probed it.
        for (const auto& r : summary.repeats) {
          auto it = std::find_if(r.probes.begin(), r.probes.end(),
                                 [&](const ProbeRecord& p) { return p.size == summary.median_size; });
          if (it != r.probes.end()) {
            rec.corrected_evaluations = it->metric;
            rec.success_fraction = it->success_fraction;
            rec.runs = it->runs;
            break;
          }
        }

        nlohmann::json cell{{"problem", name}, {"mode", rec.mode}, {"dimension", dim},
                            {"median_size", summary.median_size}, {"median_metric", format_double(summary.median_metric)}};
        nlohmann::json bisections = nlohmann::json::array();
        for (const auto& r : summary.repeats) {
          nlohmann::json probes = nlohmann::json::array();
          for (const auto& p : r.probes) probes.push_back(to_json(p));
          bisections.push_back({{"best_size", r.best_size}, {"metric", format_double(r.metric)}, {"probes", probes}});
        }
        cell["bisections"] = std::move(bisections);
        out.trace.push_back(std::move(cell));
        out.records.push_back(std::move(rec));
      }
    }
  }
  return out;
}

inline void write_scalability_csv(std::ostream& out, std::span<const ScalabilityRecord> records) {
  Index repeats = 0;
  for (const auto& r : records) repeats = std::max<Index>(repeats, r.runs.size());
  out << "problem,mode,dimension,population_size,corrected_evaluations,success_fraction";
  for (Index k = 0; k < repeats; ++k) out << ",repeat_" << k;
  out << '\n';
  for (const auto& r : records) {
    out << r.problem << ',' << r.mode << ',' << r.dimension << ',' << r.population_size << ','
        << format_double(r.corrected_evaluations) << ',' << format_double(r.success_fraction);
    for (Index k = 0; k < repeats; ++k) {
      out << ',';
      if (k < r.runs.size()) out << (r.runs[k].success ? format_double(r.runs[k].evaluations) : "fail");
    }
    out << '\n';
  }
}

inline nlohmann::json bisection_document(const MatrixSpec& spec, const MatrixResult& result) {
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : spec.modes) modes.push_back(to_string(m));
  return {{"schema_version", kSchemaVersion},
          {"master_seed", spec.master_seed},
          {"repeats_per_size", spec.bisection.repeats_per_size},
          {"bisection_repeats", spec.bisection.bisection_repeats},
          {"min_size", spec.bisection.min_size},
          {"max_size", spec.bisection.max_size},
          {"budget", spec.base.budget},
          {"modes", std::move(modes)},
          {"cells", result.trace}};
}

/// Pairwise two-sided U tests between modes on the per-bisection metrics of each
/// (problem, dimension), Bonferroni-adjusted by the number of pairs in that cell.
inline void write_stats_csv(std::ostream& out, std::span<const ScalabilityRecord> records) {
  out << "problem,dimension,mode_a,mode_b,u,p,p_bonferroni,exact,lower_median\n";
  std::map<std::pair<std::string, Index>, std::vector<const ScalabilityRecord*>> cells;
  std::vector<std::pair<std::string, Index>> order;
  for (const auto& r : records) {
    auto key = std::make_pair(r.problem, r.dimension);
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(&r);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
  };
  for (const auto& key : order) {
    const auto& cell = cells[key];
    const Index pairs = cell.size() * (cell.size() - 1) / 2;
    for (Index a = 0; a < cell.size(); ++a)
      for (Index b = a + 1; b < cell.size(); ++b) {
        const auto& ra = *cell[a];
        const auto& rb = *cell[b];
        if (ra.bisection_metrics.empty() || rb.bisection_metrics.empty()) continue;
        const auto test = mann_whitney_u(ra.bisection_metrics, rb.bisection_metrics);
        const double ma = median(ra.bisection_metrics);
        const double mb = median(rb.bisection_metrics);
        const std::string lower = ma < mb ? ra.mode : (mb < ma ? rb.mode : "tie");
        out << key.first << ',' << key.second << ',' << ra.mode << ',' << rb.mode << ',' << format_double(test.u) << ','
            << format_double(test.p) << ',' << format_double(bonferroni(test.p, pairs)) << ','
            << (test.exact ? 1 : 0) << ',' << lower << '\n';
      }
  }
}

}  // namespace gomea
