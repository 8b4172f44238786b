#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace gomea {

using Index = std::size_t;
using IndexPair = std::pair<Index, Index>;

/// Raised when cached sub-function values no longer sum to the cached objective.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Full-evaluation accounting. A full evaluation costs 1.0; a partial evaluation costs the
/// summed relative size of the touched sub-functions.
class EvaluationLedger {
 public:
  explicit EvaluationLedger(double budget = 1e7,
                            std::optional<std::chrono::duration<double>> wall_clock_limit = std::nullopt)
      : budget_(budget), wall_clock_limit_(wall_clock_limit), start_(std::chrono::steady_clock::now()) {}

  void charge(double units) { spent_ += units; }

  double spent() const { return spent_; }
  double budget() const { return budget_; }

  bool budget_exhausted() const { return spent_ >= budget_; }

  bool time_exhausted() const {
    if (!wall_clock_limit_) return false;
    return std::chrono::steady_clock::now() - start_ >= *wall_clock_limit_;
  }

  bool exhausted() const { return budget_exhausted() || time_exhausted(); }

 private:
  double spent_ = 0.0;
  double budget_;
  std::optional<std::chrono::duration<double>> wall_clock_limit_;
  std::chrono::steady_clock::time_point start_;
};

/// 2-D counter-clockwise rotation for k = 2; for larger k, Givens rotations by the same angle
/// in planes (0,1), (1,2), ..., (k-2,k-1), the first plane applied first.
inline Eigen::MatrixXd rotation_matrix(Index size, double theta_degrees) {
  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(size),
                                                       static_cast<Eigen::Index>(size));
  const double theta = theta_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (Index p = 0; p + 1 < size; ++p) {
    Eigen::MatrixXd givens = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(size),
                                                       static_cast<Eigen::Index>(size));
    const auto a = static_cast<Eigen::Index>(p);
    givens(a, a) = c;
    givens(a, a + 1) = -s;
    givens(a + 1, a) = s;
    givens(a + 1, a + 1) = c;
    rotation = givens * rotation;
  }
  return rotation;
}

inline std::vector<double> rotate_block(std::span<const double> vector, double theta_degrees) {
  const Eigen::MatrixXd rotation = rotation_matrix(vector.size(), theta_degrees);
  const Eigen::Map<const Eigen::VectorXd> x(vector.data(), static_cast<Eigen::Index>(vector.size()));
  const Eigen::VectorXd y = rotation * x;
  return {y.data(), y.data() + y.size()};
}

/// Sum over i of 10^(c*i/(n-1)) * x_i^2.
inline double ellipsoid(std::span<const double> x, double condition) {
  const Index n = x.size();
  if (n == 1) return x[0] * x[0];
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double weight = std::pow(10.0, condition * static_cast<double>(i) / static_cast<double>(n - 1));
    total += weight * x[i] * x[i];
  }
  return total;
}

enum class SubFunctionKind { square, rosenbrock, rotated_ellipsoid, custom };

inline std::string to_string(SubFunctionKind kind) {
  switch (kind) {
    case SubFunctionKind::square: return "square";
    case SubFunctionKind::rosenbrock: return "rosenbrock";
    case SubFunctionKind::rotated_ellipsoid: return "rotated_ellipsoid";
    case SubFunctionKind::custom: return "custom";
  }
  return "unknown";
}

struct BlockParams {
  double condition = 0.0;
  double angle_degrees = 0.0;
  Index block_size = 0;
  Index stride = 0;
};

/// One term f_j of the decomposition, acting on the variables listed in index_set.
class SubFunction {
 public:
  using CustomFn = std::function<double(std::span<const double>)>;

  static SubFunction square(Index variable) {
    SubFunction f;
    f.kind_ = SubFunctionKind::square;
    f.index_set_ = {variable};
    return f;
  }

  /// 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2 over the pair (i, i+1).
  static SubFunction rosenbrock(Index first) {
    SubFunction f;
    f.kind_ = SubFunctionKind::rosenbrock;
    f.index_set_ = {first, first + 1};
    return f;
  }

  static SubFunction rotated_ellipsoid(std::vector<Index> index_set, BlockParams params,
                                       std::shared_ptr<const Eigen::MatrixXd> rotation = nullptr) {
    SubFunction f;
    f.kind_ = SubFunctionKind::rotated_ellipsoid;
    f.index_set_ = std::move(index_set);
    params.block_size = f.index_set_.size();
    f.params_ = params;
    f.rotation_ = rotation ? std::move(rotation)
                           : std::make_shared<const Eigen::MatrixXd>(
                                 rotation_matrix(f.index_set_.size(), params.angle_degrees));
    const Index k = f.index_set_.size();
    f.weights_.resize(k, 1.0);
    for (Index i = 0; k > 1 && i < k; ++i)
      f.weights_[i] = std::pow(10.0, params.condition * static_cast<double>(i) / static_cast<double>(k - 1));
    return f;
  }

  static SubFunction custom(std::vector<Index> index_set, CustomFn fn) {
    SubFunction f;
    f.kind_ = SubFunctionKind::custom;
    f.index_set_ = std::move(index_set);
    f.custom_ = std::move(fn);
    return f;
  }

  const std::vector<Index>& index_set() const { return index_set_; }
  SubFunctionKind kind() const { return kind_; }
  const BlockParams& params() const { return params_; }

  /// Evaluates on the full genotype, reading only the coordinates in index_set.
  double evaluate(std::span<const double> genotype) const {
    switch (kind_) {
      case SubFunctionKind::square: {
        const double x = genotype[index_set_[0]];
        return x * x;
      }
      case SubFunctionKind::rosenbrock: {
        const double a = genotype[index_set_[0]];
        const double b = genotype[index_set_[1]];
        const double t = b - a * a;
        return 100.0 * t * t + (1.0 - a) * (1.0 - a);
      }
      case SubFunctionKind::rotated_ellipsoid: {
        constexpr Index kStack = 16;
        const Index k = index_set_.size();
        double local_stack[kStack];
        std::vector<double> local_heap;
        double* local = local_stack;
        if (k > kStack) {
          local_heap.resize(k);
          local = local_heap.data();
        }
        for (Index i = 0; i < k; ++i) local[i] = genotype[index_set_[i]];
        const Eigen::MatrixXd& r = *rotation_;
        double total = 0.0;
        for (Index i = 0; i < k; ++i) {
          double acc = 0.0;
          for (Index j = 0; j < k; ++j)
            acc += r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * local[j];
          total += weights_[i] * acc * acc;
        }
        return total;
      }
      case SubFunctionKind::custom: {
        std::vector<double> local(index_set_.size());
        for (Index i = 0; i < index_set_.size(); ++i) local[i] = genotype[index_set_[i]];
        return custom_(local);
      }
    }
    return 0.0;
  }

 private:
  SubFunctionKind kind_ = SubFunctionKind::square;
  std::vector<Index> index_set_;
  BlockParams params_{};
  std::shared_ptr<const Eigen::MatrixXd> rotation_;
  std::vector<double> weights_;
  CustomFn custom_;
};

struct Solution {
  std::vector<double> genotype;
  double objective = 0.0;
  std::vector<double> subfunction_values;
  unsigned nis = 0;
};

enum class Aggregation { sum, product };

/// f(x) = f_0(x_I0) (+) f_1(x_I1) (+) ... with the sub-function index sets known up front.
class GrayBoxProblem {
 public:
  GrayBoxProblem(std::string name, Index dimension, std::vector<SubFunction> subfunctions,
                 double lower_init, double upper_init, double vtr,
                 std::optional<std::vector<IndexPair>> analytic_vig = std::nullopt,
                 Aggregation aggregation = Aggregation::sum)
      : name_(std::move(name)),
        dimension_(dimension),
        subfunctions_(std::move(subfunctions)),
        lower_init_(lower_init),
        upper_init_(upper_init),
        vtr_(vtr),
        aggregation_(aggregation) {
    if (dimension_ == 0) throw std::invalid_argument("problem dimension must be positive");
    subfunctions_of_.assign(dimension_, {});
    for (Index j = 0; j < subfunctions_.size(); ++j) {
      const auto& set = subfunctions_[j].index_set();
      if (set.empty()) throw std::invalid_argument("sub-function index set must be nonempty");
      std::vector<Index> sorted = set;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("sub-function index set has duplicate entries");
      for (Index v : set) {
        if (v >= dimension_) throw std::invalid_argument("sub-function index out of range");
        subfunctions_of_[v].push_back(j);
      }
    }
    for (Index v = 0; v < dimension_; ++v)
      if (subfunctions_of_[v].empty())
        throw std::invalid_argument("variable " + std::to_string(v) + " appears in no sub-function");
    if (analytic_vig) {
      analytic_vig_ = normalize_pairs(*analytic_vig);
    } else {
      analytic_vig_ = co_occurrence_pairs();
    }
  }

  const std::string& name() const { return name_; }
  Index dimension() const { return dimension_; }
  const std::vector<SubFunction>& subfunctions() const { return subfunctions_; }
  Index subfunction_count() const { return subfunctions_.size(); }
  double lower_init() const { return lower_init_; }
  double upper_init() const { return upper_init_; }
  double vtr() const { return vtr_; }
  Aggregation aggregation() const { return aggregation_; }

  /// Indices of sub-functions that read variable v.
  const std::vector<Index>& subfunctions_of(Index v) const { return subfunctions_of_[v]; }

  /// Ground-truth direct dependencies. Reads are counted so learning modes can be audited.
  const std::vector<IndexPair>& analytic_vig() const {
    vig_reads_->fetch_add(1, std::memory_order_relaxed);
    return analytic_vig_;
  }
  std::size_t analytic_vig_reads() const { return vig_reads_->load(std::memory_order_relaxed); }

  /// All unordered pairs {u,v} that share some sub-function, sorted.
  std::vector<IndexPair> co_occurrence_pairs() const {
    std::vector<IndexPair> pairs;
    for (const auto& f : subfunctions_) {
      const auto& set = f.index_set();
      for (Index a = 0; a < set.size(); ++a)
        for (Index b = a + 1; b < set.size(); ++b)
          pairs.emplace_back(std::min(set[a], set[b]), std::max(set[a], set[b]));
    }
    return normalize_pairs(std::move(pairs));
  }

  /// Sorted, deduplicated indices of sub-functions touched by any of the given variables.
  std::vector<Index> touched_subfunctions(std::span<const Index> variables) const {
    std::vector<Index> touched;
    for (Index v : variables) {
      check_variable(v);
      touched.insert(touched.end(), subfunctions_of_[v].begin(), subfunctions_of_[v].end());
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return touched;
  }

  /// Cost in full-evaluation units of recomputing the given sub-functions. Recomputing more
  /// than a full evaluation's worth is never needed, so the charge is capped at 1.
  double partial_cost(std::span<const Index> touched) const {
    Index size = 0;
    for (Index j : touched) size += subfunctions_[j].index_set().size();
    return std::min(static_cast<double>(size) / static_cast<double>(dimension_), 1.0);
  }

  double aggregate(std::span<const double> values) const {
    if (aggregation_ == Aggregation::sum) {
      double total = 0.0;
      for (double v : values) total += v;
      return total;
    }
    double total = 1.0;
    for (double v : values) total *= v;
    return total;
  }

  Solution evaluate_full(std::span<const double> genotype, EvaluationLedger& ledger) const {
    if (genotype.size() != dimension_)
      throw std::invalid_argument("genotype length " + std::to_string(genotype.size()) +
                                  " does not match dimension " + std::to_string(dimension_));
    Solution s;
    s.genotype.assign(genotype.begin(), genotype.end());
    s.subfunction_values.resize(subfunctions_.size());
    for (Index j = 0; j < subfunctions_.size(); ++j) s.subfunction_values[j] = subfunctions_[j].evaluate(genotype);
    s.objective = aggregate(s.subfunction_values);
    ledger.charge(1.0);
    return s;
  }

  /// Overwrites the changed variables and recomputes exactly the sub-functions that read them.
  /// The objective is re-aggregated from the cached values so that it never drifts from them.
  void evaluate_partial(Solution& solution, std::span<const Index> changed_vars,
                        std::span<const double> new_values, EvaluationLedger& ledger) const {
    if (changed_vars.size() != new_values.size())
      throw std::invalid_argument("changed_vars and new_values differ in length");
    verify_cache(solution);
    for (Index i = 0; i < changed_vars.size(); ++i) {
      check_variable(changed_vars[i]);
      solution.genotype[changed_vars[i]] = new_values[i];
    }
    recompute(solution, touched_subfunctions(changed_vars), ledger);
  }

  /// Recomputes the listed sub-functions on the solution's current genotype.
  void recompute(Solution& solution, std::span<const Index> touched, EvaluationLedger& ledger) const {
    for (Index j : touched) solution.subfunction_values[j] = subfunctions_[j].evaluate(solution.genotype);
    solution.objective = aggregate(solution.subfunction_values);
    ledger.charge(partial_cost(touched));
  }

  void verify_cache(const Solution& solution) const {
    if (solution.genotype.size() != dimension_ || solution.subfunction_values.size() != subfunctions_.size())
      throw ConsistencyError("solution cache has the wrong shape");
    const double expected = aggregate(solution.subfunction_values);
    const double scale = std::max({1.0, std::abs(expected), std::abs(solution.objective)});
    if (!(std::abs(expected - solution.objective) <= 1e-9 * scale))
      throw ConsistencyError("cached objective disagrees with cached sub-function values");
  }

  nlohmann::json to_json() const {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& f : subfunctions_) {
      nlohmann::json entry{{"index_set", f.index_set()}, {"kind", to_string(f.kind())}};
      if (f.kind() == SubFunctionKind::rotated_ellipsoid) {
        entry["params"] = {{"c", f.params().condition},
                           {"theta", f.params().angle_degrees},
                           {"k", f.params().block_size},
                           {"s", f.params().stride}};
      }
      subs.push_back(std::move(entry));
    }
    return {{"name", name_},
            {"dimension", dimension_},
            {"lower_init", lower_init_},
            {"upper_init", upper_init_},
            {"vtr", vtr_},
            {"aggregation", aggregation_ == Aggregation::sum ? "sum" : "product"},
            {"subfunctions", std::move(subs)}};
  }

 private:
  static std::vector<IndexPair> normalize_pairs(std::vector<IndexPair> pairs) {
    for (auto& p : pairs)
      if (p.first > p.second) std::swap(p.first, p.second);
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
  }

  void check_variable(Index v) const {
    if (v >= dimension_) throw std::invalid_argument("variable index " + std::to_string(v) + " out of range");
  }

  std::string name_;
  Index dimension_;
  std::vector<SubFunction> subfunctions_;
  std::vector<std::vector<Index>> subfunctions_of_;
  double lower_init_;
  double upper_init_;
  double vtr_;
  Aggregation aggregation_;
  std::vector<IndexPair> analytic_vig_;
  std::shared_ptr<std::atomic<std::size_t>> vig_reads_ = std::make_shared<std::atomic<std::size_t>>(0);
};

// ---------------------------------------------------------------------------------------------
// Benchmark suite

namespace detail {

struct BlockSpec {
  Index start;
  BlockParams params;
};

/// Block i has parameters params_of(i) and the next block starts params_of(i).stride later.
/// Blocks are placed while they fit; the layout is compatible when the last block ends at dim-1.
template <class ParamsOf>
std::optional<std::vector<BlockSpec>> place_blocks(Index dimension, Index block_size, ParamsOf params_of) {
  std::vector<BlockSpec> blocks;
  if (dimension < block_size) return std::nullopt;
  Index start = 0;
  for (Index i = 0; start + block_size <= dimension; ++i) {
    BlockParams p = params_of(i);
    p.block_size = block_size;
    blocks.push_back({start, p});
    if (p.stride == 0) break;
    start += p.stride;
  }
  if (blocks.back().start + block_size != dimension) return std::nullopt;
  return blocks;
}

inline void append_blocks(std::vector<SubFunction>& out, const std::vector<BlockSpec>& blocks, Index offset) {
  for (const auto& b : blocks) {
    std::vector<Index> set(b.params.block_size);
    for (Index i = 0; i < set.size(); ++i) set[i] = offset + b.start + i;
    out.push_back(SubFunction::rotated_ellipsoid(std::move(set), b.params));
  }
}

inline BlockParams weak_block(Index stride) { return {1.0, 5.0, 0, stride}; }
inline BlockParams strong_block(Index stride) { return {6.0, 45.0, 0, stride}; }

inline std::optional<std::vector<SubFunction>> build_subfunctions(const std::string& name, Index dimension) {
  std::vector<SubFunction> subs;
  auto uniform_reb = [&](BlockParams params, Index k) -> std::optional<std::vector<SubFunction>> {
    auto blocks = place_blocks(dimension, k, [&](Index) { return params; });
    if (!blocks) return std::nullopt;
    append_blocks(subs, *blocks, 0);
    return subs;
  };
  if (name == "sphere") {
    for (Index v = 0; v < dimension; ++v) subs.push_back(SubFunction::square(v));
    return subs;
  }
  if (name == "rosenbrock") {
    if (dimension < 2) return std::nullopt;
    for (Index v = 0; v + 1 < dimension; ++v) subs.push_back(SubFunction::rosenbrock(v));
    return subs;
  }
  if (name == "reb2weak") return uniform_reb(weak_block(1), 2);
  if (name == "reb2strong") return uniform_reb(strong_block(1), 2);
  if (name == "reb5noverlap") return uniform_reb(strong_block(5), 5);
  if (name == "reb5smalloverlap") return uniform_reb(strong_block(4), 5);
  if (name == "reb5largeoverlap") return uniform_reb(strong_block(1), 5);
  if (name == "reb2alternating" || name == "reb5alternating") {
    const Index k = name == "reb2alternating" ? 2 : 5;
    const Index s = name == "reb2alternating" ? 1 : 4;
    auto blocks = place_blocks(dimension, k, [&](Index i) { return i % 2 == 0 ? weak_block(s) : strong_block(s); });
    if (!blocks) return std::nullopt;
    append_blocks(subs, *blocks, 0);
    return subs;
  }
  if (name == "reb5disjointpairs") {
    auto blocks = place_blocks(dimension, 5, [&](Index i) { return strong_block(i % 2 == 0 ? 4 : 5); });
    if (!blocks) return std::nullopt;
    append_blocks(subs, *blocks, 0);
    return subs;
  }
  if (name == "osoreb") {
    auto first = place_blocks(dimension, 5, [](Index) { return strong_block(4); });
    if (!first || dimension < 4) return std::nullopt;
    auto second = place_blocks(dimension - 4, 2, [](Index) { return strong_block(5); });
    if (!second) return std::nullopt;
    append_blocks(subs, *first, 0);
    append_blocks(subs, *second, 4);
    return subs;
  }
  if (name == "rebgrid") {
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(dimension))));
    if (side < 2 || side * side != dimension) return std::nullopt;
    auto rotation_cache = std::vector<std::shared_ptr<const Eigen::MatrixXd>>(6);
    for (Index v = 0; v < dimension; ++v) {
      const Index row = v / side;
      const Index col = v % side;
      std::vector<Index> star{v};
      if (row > 0) star.push_back(v - side);
      if (row + 1 < side) star.push_back(v + side);
      if (col > 0) star.push_back(v - 1);
      if (col + 1 < side) star.push_back(v + 1);
      std::sort(star.begin(), star.end());
      auto& rot = rotation_cache[star.size()];
      if (!rot) rot = std::make_shared<const Eigen::MatrixXd>(rotation_matrix(star.size(), 45.0));
      subs.push_back(SubFunction::rotated_ellipsoid(std::move(star), strong_block(0), rot));
    }
    return subs;
  }
  return std::nullopt;
}

}  // namespace detail

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{
      "sphere",           "rosenbrock",       "reb2weak",        "reb2strong",
      "reb2alternating",  "reb5noverlap",     "reb5smalloverlap", "reb5largeoverlap",
      "reb5alternating",  "reb5disjointpairs", "osoreb",          "rebgrid"};
  return names;
}

inline bool is_problem_name(const std::string& name) {
  const auto& names = problem_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

inline bool is_compatible_dimension(const std::string& name, Index dimension) {
  return dimension > 0 && detail::build_subfunctions(name, dimension).has_value();
}

/// Closest compatible dimensions below and above the requested one (either may be absent).
inline std::pair<std::optional<Index>, std::optional<Index>> nearest_compatible_dimensions(const std::string& name,
                                                                                         Index dimension) {
  std::optional<Index> below;
  std::optional<Index> above;
  for (Index d = dimension; d-- > 1;)
    if (is_compatible_dimension(name, d)) {
      below = d;
      break;
    }
  for (Index d = dimension + 1; d <= dimension + 200; ++d)
    if (is_compatible_dimension(name, d)) {
      above = d;
      break;
    }
  return {below, above};
}

struct ProblemDefaults {
  double lower_init = -115.0;
  double upper_init = -110.0;
  double vtr = 1e-10;
};

inline GrayBoxProblem make_problem(const std::string& name, Index dimension, ProblemDefaults defaults = {}) {
  if (!is_problem_name(name)) {
    std::ostringstream msg;
    msg << "unknown problem '" << name << "'; valid problems:";
    for (const auto& n : problem_names()) msg << ' ' << n;
    throw std::invalid_argument(msg.str());
  }
  auto subs = dimension > 0 ? detail::build_subfunctions(name, dimension) : std::nullopt;
  if (!subs) {
    auto [below, above] = nearest_compatible_dimensions(name, dimension);
    std::ostringstream msg;
    msg << "dimension " << dimension << " is incompatible with problem '" << name << "'; nearest compatible:";
    if (below) msg << ' ' << *below;
    if (above) msg << ' ' << *above;
    throw std::invalid_argument(msg.str());
  }
  return GrayBoxProblem(name, dimension, std::move(*subs), defaults.lower_init, defaults.upper_init, defaults.vtr);
}

/// Uniform REB with arbitrary block parameters, e.g. the (c, theta) sweep on a k=2, s=1 chain.
inline GrayBoxProblem make_reb_problem(Index dimension, double condition, double theta_degrees, Index block_size,
                                       Index stride, ProblemDefaults defaults = {}) {
  if (block_size == 0 || stride == 0) throw std::invalid_argument("block size and stride must be positive");
  auto blocks = detail::place_blocks(dimension, block_size, [&](Index) {
    return BlockParams{condition, theta_degrees, 0, stride};
  });
  if (!blocks) throw std::invalid_argument("dimension " + std::to_string(dimension) + " is incompatible with k=" +
                                           std::to_string(block_size) + ", s=" + std::to_string(stride));
  std::vector<SubFunction> subs;
  detail::append_blocks(subs, *blocks, 0);
  std::ostringstream name;
  name << "reb_c" << condition << "_t" << theta_degrees << "_k" << block_size << "_s" << stride;
  return GrayBoxProblem(name.str(), dimension, std::move(subs), defaults.lower_init, defaults.upper_init, defaults.vtr);
}

/// Smallest compatible dimension >= the requested one; used to map nominal sweep sizes
/// (10, 20, 40, ...) onto problems with layout constraints.
inline Index compatible_dimension_at_least(const std::string& name, Index dimension) {
  for (Index d = std::max<Index>(dimension, 1);; ++d)
    if (is_compatible_dimension(name, d)) return d;
}

/// Compatible dimension closest to the requested one, preferring the smaller on ties.
inline Index closest_compatible_dimension(const std::string& name, Index dimension) {
  if (is_compatible_dimension(name, dimension)) return dimension;
  auto [below, above] = nearest_compatible_dimensions(name, dimension);
  if (!below) return *above;
  if (!above) return *below;
  return (dimension - *below <= *above - dimension) ? *below : *above;
}

}  // namespace gomea
