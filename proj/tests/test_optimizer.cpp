#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gomea/optimizer.hpp"

using namespace gomea;

namespace {

Solution evaluate(const GrayBoxProblem& p, std::vector<double> x) {
  EvaluationLedger scratch;
  return p.evaluate_full(x, scratch);
}

std::vector<Solution> constant_population(const GrayBoxProblem& p, Index n, double value) {
  return std::vector<Solution>(n, evaluate(p, std::vector<double>(p.dimension(), value)));
}

}  // namespace

TEST(Optimizer, SphereUnivariateReachesVtr) {
  const auto p = make_problem("sphere", 10);
  EaConfig c;
  c.population_size = 64;
  c.seed = 3;
  const auto r = run(p, c);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.termination, "vtr");
  EXPECT_LE(r.best_objective, 1e-10);
  EXPECT_GT(r.evaluations_spent, 64.0);
  EXPECT_LT(r.evaluations_spent, 1e6);
}

TEST(Optimizer, VtrAtInitialization) {
  const auto p = make_problem("sphere", 4);
  EaConfig c;
  c.vtr = 1e300;
  const auto r = run(p, c);
  EXPECT_TRUE(r.success);
  EXPECT_DOUBLE_EQ(r.evaluations_spent, 1.0);
  EXPECT_EQ(r.generations, 0u);
}

TEST(Optimizer, ZeroBudget) {
  const auto p = make_problem("sphere", 4);
  EaConfig c;
  c.budget = 0.0;
  const auto r = run(p, c);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.evaluations_spent, 0.0);
  EXPECT_EQ(r.termination, "budget");
}

TEST(Optimizer, BudgetIsRespectedUpToOneStep) {
  const auto p = make_problem("reb5noverlap", 20);
  EaConfig c;
  c.budget = 5000;
  c.linkage_mode = LinkageMode::fb_mcond_hg;
  const auto r = run(p, c);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.termination, "budget");
  EXPECT_GE(r.evaluations_spent, 5000.0);
  EXPECT_LT(r.evaluations_spent, 5001.0);
}

TEST(Optimizer, RejectsBadConfig) {
  const auto p = make_problem("sphere", 4);
  EaConfig c;
  c.population_size = 1;
  EXPECT_THROW(run(p, c), std::invalid_argument);
  c.population_size = 8;
  c.tau = 0.0;
  EXPECT_THROW(run(p, c), std::invalid_argument);
}

TEST(Optimizer, DeterministicForFixedSeed) {
  const auto p = make_problem("reb2strong", 10);
  EaConfig c;
  c.linkage_mode = LinkageMode::fb_ucond_hg;
  c.budget = 20000;
  c.seed = 17;
  const auto a = run(p, c);
  const auto b = run(p, c);
  EXPECT_EQ(a.best_objective, b.best_objective);
  EXPECT_EQ(a.best_genotype, b.best_genotype);
  EXPECT_EQ(a.evaluations_spent, b.evaluations_spent);
  EXPECT_EQ(a.learned_vig, b.learned_vig);
  c.seed = 18;
  EXPECT_NE(run(p, c).best_genotype, a.best_genotype);
}

TEST(Optimizer, FitnessBasedModesNeverReadAnalyticVig) {
  for (auto mode : {LinkageMode::fb_lt, LinkageMode::fb_ucond_hg, LinkageMode::fb_mcond_hg, LinkageMode::fb_mcond_hg_cs}) {
    const auto p = make_problem("rebgrid", 9);
    EaConfig c;
    c.linkage_mode = mode;
    c.budget = 3000;
    (void)run(p, c);
    EXPECT_EQ(p.analytic_vig_reads(), 0u) << to_string(mode);
  }
  const auto p = make_problem("rebgrid", 9);
  EaConfig c;
  c.linkage_mode = LinkageMode::static_mcond_hg;
  c.budget = 3000;
  (void)run(p, c);
  EXPECT_EQ(p.analytic_vig_reads(), 1u);
}

TEST(Optimizer, LearnsExactVigWithinFirstEpoch) {
  for (const std::string name : {"reb5noverlap", "reb2alternating", "rebgrid"}) {
    const Index l = name == "rebgrid" ? 9 : 10;
    const auto p = make_problem(name, l);
    EaConfig c;
    c.linkage_mode = LinkageMode::fb_mcond_hg;
    c.max_generations = 6;
    const auto r = run(p, c);
    ASSERT_TRUE(r.epoch_complete) << name;
    const auto reference = make_problem(name, l);
    EXPECT_EQ(r.learned_vig, reference.analytic_vig()) << name;
  }
}

TEST(Optimizer, SnapshotsAndTraceRecorded) {
  const auto p = make_problem("reb5noverlap", 10);
  EaConfig c;
  c.linkage_mode = LinkageMode::fb_lt;
  c.max_generations = 5;
  c.record_dsm_snapshots = true;
  const auto r = run(p, c);
  EXPECT_EQ(r.termination, "generations");
  EXPECT_EQ(r.trace.size(), r.generations);
  EXPECT_FALSE(r.dsm_snapshots.empty());
  for (Index k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].best_objective, r.trace[k - 1].best_objective);
}

TEST(Selection, BestTauFraction) {
  const auto p = make_problem("sphere", 1);
  std::vector<Solution> pop;
  for (double v : {3.0, 1.0, 2.0, 0.0, 5.0, 4.0, 6.0, 7.0, 8.0, 9.0}) pop.push_back(evaluate(p, {v}));
  EXPECT_EQ(select_best(pop, 0.35), (std::vector<Index>{3, 1, 2}));
  EXPECT_EQ(select_best(pop, 0.01).size(), 2u);
}

TEST(Selection, NisMax) {
  EXPECT_EQ(nis_max(9), 1u);
  EXPECT_EQ(nis_max(10), 2u);
  EXPECT_EQ(nis_max(150), 3u);
}

TEST(ElementOrder, GenerationalFirstAndUniformRest) {
  FosModel model;
  model.elements.resize(6);
  model.generational = Factorization{};
  Rng rng(5);
  std::vector<int> first(5, 0);
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto order = element_order(model, rng);
    ASSERT_EQ(order.size(), 6u);
    EXPECT_EQ(order[0], 0u);
    ++first[order[1] - 1];
  }
  double chi2 = 0.0;
  const double expected = trials / 5.0;
  for (int f : first) chi2 += (f - expected) * (f - expected) / expected;
  EXPECT_LT(chi2, 18.47);  // chi-square 4 dof, p = 0.001
}

TEST(ElementOrder, PlainModelIsPermutation) {
  FosModel model;
  model.elements.resize(4);
  Rng rng(6);
  auto order = element_order(model, rng);
  std::sort(order.begin(), order.end());
  EXPECT_EQ(order, (std::vector<Index>{0, 1, 2, 3}));
}

TEST(GomStep, RejectionRestoresExactly) {
  const auto p = make_problem("reb5smalloverlap", 13);
  Rng rng(8);
  auto s = evaluate(p, std::vector<double>(13, 0.0));  // the optimum: any change is worse
  const auto before = s;
  const FosElement e{{3, 4, 5}, {}};
  const auto sampler = ElementSampler::from_moments(e, Eigen::Vector3d(5, 5, 5), Eigen::Matrix3d::Identity());
  EvaluationLedger ledger;
  for (int k = 0; k < 50; ++k) {
    const auto out = gom_step(s, sampler, p, ledger, rng, 1.0, 0.0);
    EXPECT_FALSE(out.accepted);
    EXPECT_EQ(s.genotype, before.genotype);
    EXPECT_EQ(s.subfunction_values, before.subfunction_values);
    EXPECT_EQ(s.objective, before.objective);
  }
  EXPECT_GT(ledger.spent(), 0.0);
}

TEST(GomStep, AcceptanceRateAtLeastPAccept) {
  const auto p = make_problem("sphere", 2);
  Rng rng(9);
  const FosElement e{{0}, {}};
  const auto sampler = ElementSampler::from_moments(e, Eigen::VectorXd::Constant(1, 50.0), Eigen::MatrixXd::Identity(1, 1));
  EvaluationLedger ledger;
  int accepted = 0;
  const int trials = 4000;
  for (int k = 0; k < trials; ++k) {
    auto s = evaluate(p, {0.0, 0.0});
    accepted += gom_step(s, sampler, p, ledger, rng, 1.0, 0.3).accepted;
  }
  EXPECT_NEAR(accepted / double(trials), 0.3, 0.03);
}

TEST(ForcedImprovement, MovesTowardsElitist) {
  const auto p = make_problem("sphere", 4);
  const auto model = build_static(FosKind::univariate, 4);
  auto s = evaluate(p, {4.0, 4.0, 4.0, 4.0});
  s.nis = 7;
  const auto elitist = evaluate(p, {0.0, 0.0, 0.0, 0.0});
  EvaluationLedger ledger;
  Rng rng(1);
  EXPECT_TRUE(forced_improvement(s, elitist, model, p, ledger, rng));
  EXPECT_EQ(s.nis, 0u);
  EXPECT_EQ(std::count(s.genotype.begin(), s.genotype.end(), 2.0), 1);
  EXPECT_DOUBLE_EQ(s.objective, 16.0 * 3 + 4.0);
}

TEST(ForcedImprovement, FallsBackToElitistCopy) {
  const auto p = make_problem("sphere", 2);
  const auto model = build_static(FosKind::univariate, 2);
  auto s = evaluate(p, {1.0, 1.0});
  const auto elitist = evaluate(p, {1.0, 1.0});
  EvaluationLedger ledger;
  Rng rng(2);
  EXPECT_FALSE(forced_improvement(s, elitist, model, p, ledger, rng));
  EXPECT_EQ(s.genotype, elitist.genotype);
  EXPECT_EQ(ledger.spent(), 0.0);
}

TEST(ForcedImprovement, SkipsGenerationalElement) {
  const auto p = make_problem("sphere", 2);
  FosModel model;
  model.elements = {{{0, 1}, {}}, {{0}, {}}};
  model.generational = Factorization{};
  auto s = evaluate(p, {0.0, 4.0});  // only a joint move of both would help via element 0
  const auto elitist = evaluate(p, {1.0, 0.0});
  EvaluationLedger ledger;
  Rng rng(3);
  EXPECT_FALSE(forced_improvement(s, elitist, model, p, ledger, rng));
  EXPECT_EQ(s.genotype, elitist.genotype);
}

TEST(PrematureConvergence, Cases) {
  const auto p = make_problem("sphere", 2);
  EXPECT_TRUE(detect_premature_convergence(constant_population(p, 5, 1.0), 1e-10));
  EXPECT_FALSE(detect_premature_convergence(constant_population(p, 5, 0.0), 1e-10));
  auto pop = constant_population(p, 5, 1.0);
  pop[2] = evaluate(p, {2.0, 2.0});
  EXPECT_FALSE(detect_premature_convergence(pop, 1e-10));
  EXPECT_FALSE(detect_premature_convergence({}, 1e-10));
}

TEST(Serialization, JsonAndTrace) {
  const auto p = make_problem("sphere", 3);
  EaConfig c;
  c.max_generations = 3;
  const auto r = run(p, c);
  const auto j = to_json(r);
  EXPECT_EQ(j["termination"], "generations");
  EXPECT_FALSE(j.contains("learned_vig"));
  std::ostringstream out;
  write_trace_csv(out, r);
  EXPECT_EQ(out.str().rfind("generation,restart,best_objective,evaluations\n", 0), 0u);
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

TEST(LinkageModes, ParseRoundTrip) {
  for (const auto& name : linkage_mode_names()) EXPECT_EQ(to_string(*parse_linkage_mode(name)), name);
  EXPECT_FALSE(parse_linkage_mode("bogus"));
  EXPECT_TRUE(is_hybrid(LinkageMode::static_ucond_hg));
  EXPECT_FALSE(is_hybrid(LinkageMode::fb_lt));
}

TEST(Optimizer, SphereUnivariateThirtyOfThirty) {
  const auto p = make_problem("sphere", 10);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    EaConfig c;
    c.seed = seed;
    EXPECT_TRUE(run(p, c).success) << "seed " << seed;
  }
}

TEST(PrematureConvergence, TinySpreadAroundNonOptimalValue) {
  std::vector<SubFunction> subs{SubFunction::custom({0}, [](std::span<const double> x) { return x[0]; })};
  GrayBoxProblem p("identity", 1, std::move(subs), 0.0, 1.0, 0.0);
  std::vector<Solution> pop;
  for (int k = 0; k < 10; ++k) pop.push_back(evaluate(p, {5.0 + 1e-14 * k}));
  EXPECT_TRUE(detect_premature_convergence(pop, 0.0));
}

TEST(ForcedImprovement, ElitistCopyLeavesSolutionUnchanged) {
  const auto p = make_problem("sphere", 3);
  const auto model = build_static(FosKind::univariate, 3);
  const auto elitist = evaluate(p, {0.5, 0.5, 0.5});
  auto s = elitist;
  s.nis = 4;
  EvaluationLedger ledger;
  Rng rng(4);
  forced_improvement(s, elitist, model, p, ledger, rng);
  EXPECT_EQ(s.genotype, elitist.genotype);
  EXPECT_EQ(s.nis, 0u);
}

TEST(ForcedImprovement, ClonesMoveCloserToElitist) {
  const auto p = make_problem("sphere", 4);
  const auto model = build_static(FosKind::univariate, 4);
  const auto elitist = evaluate(p, {0.0, 0.0, 0.0, 0.0});
  std::vector<Solution> clones(8, evaluate(p, {3.0, -2.0, 1.0, 4.0}));
  auto distance = [&](const Solution& s) {
    double d = 0.0;
    for (Index v = 0; v < 4; ++v) d += (s.genotype[v] - elitist.genotype[v]) * (s.genotype[v] - elitist.genotype[v]);
    return std::sqrt(d);
  };
  double before = 0.0;
  double after = 0.0;
  EvaluationLedger ledger;
  Rng rng(5);
  for (auto& s : clones) {
    before += distance(s);
    forced_improvement(s, elitist, model, p, ledger, rng);
    after += distance(s);
  }
  EXPECT_LT(after, before);
}
