#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gomea/gomea.hpp"

namespace fs = std::filesystem;
using namespace gomea;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

LinkageMode mode_or_throw(const std::string& name) {
  if (auto m = parse_linkage_mode(name)) return *m;
  throw UsageError("unknown mode '" + name + "'; valid modes: " + join(linkage_mode_names()));
}

GrayBoxProblem problem_or_throw(const std::string& name, Index dim) {
  try {
    return make_problem(name, dim);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void check_problem_name(const std::string& name) {
  if (!is_problem_name(name)) throw UsageError("unknown problem '" + name + "'; valid problems: " + join(problem_names()));
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& doc) { open_output(path) << doc.dump(2) << '\n'; }

/// Config-file keys bound to options. A key is applied only when its flag was not given.
class ConfigBinding {
 public:
  template <class T>
  void bind(const std::string& key, CLI::Option* option, T& target) {
    entries_[key] = {option, [&target](const nlohmann::json& v) { target = v.get<T>(); }};
  }

  void apply(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("invalid config " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config must be a JSON object");
    if (!doc.contains("schema_version") || doc["schema_version"] != kSchemaVersion)
      throw UsageError("config schema_version must be " + std::to_string(kSchemaVersion));
    for (const auto& [key, value] : doc.items()) {
      if (key == "schema_version") continue;
      auto it = entries_.find(key);
      if (it == entries_.end()) throw UsageError("unknown config key '" + key + "'");
      if (it->second.option->count() > 0) continue;
      try {
        it->second.set(value);
      } catch (const nlohmann::json::exception&) {
        throw UsageError("config key '" + key + "' has the wrong type");
      }
    }
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::function<void(const nlohmann::json&)> set;
  };
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string problem = "sphere";
  Index dim = 10;
  std::string mode = "univariate";
  Index pop = 64;
  std::uint64_t seed = 1;
  double budget = 1e7;
  double vtr = 1e-10;
  double time_limit = 10800.0;
  Index max_generations = 0;
  std::string out;
  std::string format = "json";
};

int cmd_run(const RunArgs& a) {
  check_problem_name(a.problem);
  const auto problem = problem_or_throw(a.problem, a.dim);
  EaConfig cfg;
  cfg.linkage_mode = mode_or_throw(a.mode);
  cfg.population_size = a.pop;
  cfg.seed = a.seed;
  cfg.budget = a.budget;
  cfg.vtr = a.vtr;
  if (a.time_limit > 0) cfg.wall_clock_limit = std::chrono::duration<double>(a.time_limit);
  cfg.max_generations = a.max_generations;
  if (a.pop < 2) throw UsageError("--pop must be at least 2");

  const RunResult r = run(problem, cfg);
  nlohmann::json doc = to_json(r);
  doc["schema_version"] = kSchemaVersion;
  doc["problem"] = problem.name();
  doc["dimension"] = problem.dimension();
  doc["mode"] = a.mode;
  doc["population_size"] = a.pop;
  doc["seed"] = a.seed;

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    auto trace = open_output(fs::path(a.out) / "trace.csv");
    write_trace_csv(trace, r);
    write_json(fs::path(a.out) / "result.json", doc);
  }
  if (a.format == "csv") {
    std::cout << "problem,dimension,mode,population_size,seed,success,evaluations,best_objective,termination\n"
              << problem.name() << ',' << problem.dimension() << ',' << a.mode << ',' << a.pop << ',' << a.seed << ','
              << (r.success ? 1 : 0) << ',' << format_double(r.evaluations_spent) << ','
              << format_double(r.best_objective) << ',' << r.termination << '\n';
  } else {
    std::cout << doc.dump(2) << '\n';
  }
  return r.success ? 0 : 2;
}

// ---------------------------------------------------------------------------------------------

struct BisectArgs {
  std::string config;
  std::string preset = "desk";
  std::vector<std::string> problems{"reb2weak"};
  std::vector<Index> dims{10};
  std::vector<std::string> modes{"fb_mcond_hg", "fb_lt"};
  std::uint64_t seed = 1;
  double budget = 1e7;
  double vtr = 1e-10;
  Index repeats = 10;
  Index bisections = 5;
  Index min_pop = 8;
  Index max_pop = 2048;
  double stop_ratio = 1.1;
  std::string out = ".";
  std::string format = "csv";
};

int cmd_bisect(BisectArgs a, const CLI::App& sub) {
  if (a.preset == "full") {
    if (sub.get_option("--repeats")->count() == 0) a.repeats = 30;
    if (sub.get_option("--dims")->count() == 0) a.dims = {10, 20, 40, 80, 160, 320};
  }
  for (const auto& p : a.problems) check_problem_name(p);
  MatrixSpec spec;
  spec.problems = a.problems;
  spec.dimensions = a.dims;
  for (const auto& m : a.modes) spec.modes.push_back(mode_or_throw(m));
  spec.master_seed = a.seed;
  spec.bisection.repeats_per_size = a.repeats;
  spec.bisection.bisection_repeats = a.bisections;
  spec.bisection.min_size = a.min_pop;
  spec.bisection.max_size = a.max_pop;
  spec.bisection.stop_ratio = a.stop_ratio;
  spec.base.budget = a.budget;
  spec.base.vtr = a.vtr;
  if (a.repeats == 0 || a.bisections == 0) throw UsageError("--repeats and --bisections must be positive");
  if (a.min_pop < 2 || a.min_pop > a.max_pop) throw UsageError("need 2 <= --min-pop <= --max-pop");
  for (Index d : a.dims)
    if (d == 0) throw UsageError("dimensions must be positive");

  const MatrixResult result = run_matrix(spec);
  fs::create_directories(a.out);
  {
    auto csv = open_output(fs::path(a.out) / "scalability.csv");
    write_scalability_csv(csv, result.records);
  }
  {
    auto stats = open_output(fs::path(a.out) / "stats.csv");
    write_stats_csv(stats, result.records);
  }
  write_json(fs::path(a.out) / "bisection.json", bisection_document(spec, result));

  if (a.format == "json") {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : result.records)
      rows.push_back({{"problem", r.problem},
                      {"mode", r.mode},
                      {"dimension", r.dimension},
                      {"population_size", r.population_size},
                      {"corrected_evaluations", format_double(r.corrected_evaluations)},
                      {"success_fraction", r.success_fraction}});
    std::cout << rows.dump(2) << '\n';
  } else {
    write_scalability_csv(std::cout, result.records);
  }
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct DsmArgs {
  std::string config;
  std::string problem = "rebgrid";
  Index dim = 9;
  std::string mode = "fb_mcond_hg";
  Index runs = 30;
  Index pop = 64;
  std::uint64_t seed = 1;
  double budget = 1e7;
  Index max_generations = 0;
  std::string out = ".";
  std::string format = "csv";
};

int cmd_dsm(const DsmArgs& a) {
  check_problem_name(a.problem);
  const LinkageMode mode = mode_or_throw(a.mode);
  if (!is_fitness_based(mode)) throw UsageError("mode '" + a.mode + "' learns no DSM; use one of the fb_* modes");
  if (a.runs == 0) throw UsageError("--runs must be positive");
  if (a.pop < 2) throw UsageError("--pop must be at least 2");
  const auto problem = problem_or_throw(a.problem, a.dim);

  auto results = parallel_map(a.runs, [&](Index r) {
    EaConfig cfg;
    cfg.linkage_mode = mode;
    cfg.population_size = a.pop;
    cfg.budget = a.budget;
    cfg.max_generations = a.max_generations;
    cfg.record_trace = false;
    cfg.seed = derive_seed(a.seed, problem.name(), a.mode, problem.dimension(), a.pop, r);
    auto res = run(problem, cfg);
    return std::make_pair(cfg.seed, std::move(res));
  });

  fs::create_directories(a.out);
  std::vector<DependencyMatrix> dsms;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& [seed, res] : results) {
    const std::string file = "dsm_" + problem.name() + "_" + std::to_string(seed) + ".csv";
    auto csv = open_output(fs::path(a.out) / file);
    write_dsm_csv(csv, *res.dsm);
    dsms.push_back(*res.dsm);
    nlohmann::json entry = dsm_sidecar(res.generations, problem.name(), seed);
    entry["file"] = file;
    entry["edges"] = res.learned_vig.size();
    entry["epoch_complete"] = res.epoch_complete;
    entry["success"] = res.success;
    runs.push_back(std::move(entry));
  }
  const std::string mean_file = "dsm_" + problem.name() + "_mean.csv";
  {
    auto csv = open_output(fs::path(a.out) / mean_file);
    write_dsm_csv(csv, aggregate_dsms(dsms));
  }
  const nlohmann::json doc{{"schema_version", kSchemaVersion}, {"problem", problem.name()},
                           {"dimension", problem.dimension()}, {"mode", a.mode},
                           {"master_seed", a.seed},           {"mean_file", mean_file},
                           {"runs", runs}};
  write_json(fs::path(a.out) / ("dsm_" + problem.name() + ".json"), doc);

  if (a.format == "json") {
    std::cout << doc.dump(2) << '\n';
  } else {
    std::cout << "file,seed,generation,edges,epoch_complete\n";
    for (const auto& r : runs)
      std::cout << r["file"].get<std::string>() << ',' << r["seed"] << ',' << r["generation"] << ',' << r["edges"]
                << ',' << (r["epoch_complete"].get<bool>() ? 1 : 0) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RV-GOMEA with fitness-based and conditional linkage models"};
  app.require_subcommand(1);
  const std::vector<std::string> formats{"json", "csv"};

  RunArgs ra;
  ConfigBinding rc;
  auto* run_cmd = app.add_subcommand("run", "single optimization run; exit 0 when the VTR is reached, 2 otherwise");
  run_cmd->add_option("--config", ra.config, "JSON config file (flags win)");
  rc.bind("problem", run_cmd->add_option("--problem", ra.problem, "problem name")->capture_default_str(), ra.problem);
  rc.bind("dim", run_cmd->add_option("--dim", ra.dim, "dimension")->capture_default_str(), ra.dim);
  rc.bind("mode", run_cmd->add_option("--mode", ra.mode, "linkage mode")->capture_default_str(), ra.mode);
  rc.bind("pop", run_cmd->add_option("--pop", ra.pop, "population size")->capture_default_str(), ra.pop);
  rc.bind("seed", run_cmd->add_option("--seed", ra.seed, "random seed")->capture_default_str(), ra.seed);
  rc.bind("budget", run_cmd->add_option("--budget", ra.budget, "evaluation budget")->capture_default_str(), ra.budget);
  rc.bind("vtr", run_cmd->add_option("--vtr", ra.vtr, "value to reach")->capture_default_str(), ra.vtr);
  rc.bind("time_limit", run_cmd->add_option("--time-limit", ra.time_limit, "wall-clock seconds, 0 = none")->capture_default_str(), ra.time_limit);
  rc.bind("max_generations", run_cmd->add_option("--max-generations", ra.max_generations, "0 = unlimited")->capture_default_str(), ra.max_generations);
  rc.bind("out", run_cmd->add_option("--out", ra.out, "directory for trace.csv and result.json"), ra.out);
  rc.bind("format", run_cmd->add_option("--format", ra.format, "stdout summary format")->check(CLI::IsMember(formats))->capture_default_str(), ra.format);

  BisectArgs ba;
  ConfigBinding bc;
  auto* bisect_cmd = app.add_subcommand("bisect", "population-size bisection over a problem x dimension x mode matrix");
  bisect_cmd->add_option("--config", ba.config, "JSON config file (flags win)");
  bc.bind("preset", bisect_cmd->add_option("--preset", ba.preset, "desk or full")->check(CLI::IsMember({"desk", "full"}))->capture_default_str(), ba.preset);
  bc.bind("problems", bisect_cmd->add_option("--problems", ba.problems, "problem names")->capture_default_str(), ba.problems);
  bc.bind("dims", bisect_cmd->add_option("--dims", ba.dims, "dimensions (mapped to the closest compatible)")->capture_default_str(), ba.dims);
  bc.bind("modes", bisect_cmd->add_option("--modes", ba.modes, "linkage modes")->capture_default_str(), ba.modes);
  bc.bind("seed", bisect_cmd->add_option("--seed", ba.seed, "master seed")->capture_default_str(), ba.seed);
  bc.bind("budget", bisect_cmd->add_option("--budget", ba.budget, "evaluation budget per run")->capture_default_str(), ba.budget);
  bc.bind("vtr", bisect_cmd->add_option("--vtr", ba.vtr, "value to reach")->capture_default_str(), ba.vtr);
  bc.bind("repeats", bisect_cmd->add_option("--repeats", ba.repeats, "runs per probed size")->capture_default_str(), ba.repeats);
  bc.bind("bisections", bisect_cmd->add_option("--bisections", ba.bisections, "independent bisections per cell")->capture_default_str(), ba.bisections);
  bc.bind("min_pop", bisect_cmd->add_option("--min-pop", ba.min_pop, "smallest population size")->capture_default_str(), ba.min_pop);
  bc.bind("max_pop", bisect_cmd->add_option("--max-pop", ba.max_pop, "largest population size")->capture_default_str(), ba.max_pop);
  bc.bind("stop_ratio", bisect_cmd->add_option("--stop-ratio", ba.stop_ratio, "stop when upper/lower <= ratio")->capture_default_str(), ba.stop_ratio);
  bc.bind("out", bisect_cmd->add_option("--out", ba.out, "output directory")->capture_default_str(), ba.out);
  bc.bind("format", bisect_cmd->add_option("--format", ba.format, "stdout summary format")->check(CLI::IsMember(formats))->capture_default_str(), ba.format);
  Index bisect_pop = 0;
  bisect_cmd->add_option("--pop", bisect_pop, "not accepted: bisection chooses the population size");

  DsmArgs da;
  ConfigBinding dc;
  auto* dsm_cmd = app.add_subcommand("dsm", "export per-run and averaged dependency strength matrices");
  dsm_cmd->add_option("--config", da.config, "JSON config file (flags win)");
  dc.bind("problem", dsm_cmd->add_option("--problem", da.problem, "problem name")->capture_default_str(), da.problem);
  dc.bind("dim", dsm_cmd->add_option("--dim", da.dim, "dimension")->capture_default_str(), da.dim);
  dc.bind("mode", dsm_cmd->add_option("--mode", da.mode, "fitness-based linkage mode")->capture_default_str(), da.mode);
  dc.bind("runs", dsm_cmd->add_option("--runs", da.runs, "number of seeded runs")->capture_default_str(), da.runs);
  dc.bind("pop", dsm_cmd->add_option("--pop", da.pop, "population size")->capture_default_str(), da.pop);
  dc.bind("seed", dsm_cmd->add_option("--seed", da.seed, "master seed")->capture_default_str(), da.seed);
  dc.bind("budget", dsm_cmd->add_option("--budget", da.budget, "evaluation budget per run")->capture_default_str(), da.budget);
  dc.bind("max_generations", dsm_cmd->add_option("--max-generations", da.max_generations, "0 = unlimited")->capture_default_str(), da.max_generations);
  dc.bind("out", dsm_cmd->add_option("--out", da.out, "output directory")->capture_default_str(), da.out);
  dc.bind("format", dsm_cmd->add_option("--format", da.format, "stdout summary format")->check(CLI::IsMember(formats))->capture_default_str(), da.format);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*run_cmd) {
      rc.apply(ra.config);
      return cmd_run(ra);
    }
    if (*bisect_cmd) {
      if (bisect_cmd->get_option("--pop")->count() > 0) throw UsageError("--pop conflicts with bisection");
      bc.apply(ba.config);
      return cmd_bisect(ba, *bisect_cmd);
    }
    dc.apply(da.config);
    return cmd_dsm(da);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
