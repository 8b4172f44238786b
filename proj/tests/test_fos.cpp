#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "gomea/fos.hpp"
#include "gomea/random.hpp"

using namespace gomea;

namespace {

std::vector<std::vector<Index>> variable_sets(const FosModel& m) {
  std::vector<std::vector<Index>> out;
  for (const auto& e : m.elements) out.push_back(e.variables);
  std::sort(out.begin(), out.end());
  return out;
}

DependencyMatrix block_dsm(Index n, const std::vector<std::vector<Index>>& blocks, double s = 1.0) {
  DependencyMatrix dsm(n);
  for (const auto& b : blocks)
    for (Index a = 0; a < b.size(); ++a)
      for (Index c = a + 1; c < b.size(); ++c) dsm.set_strength(b[a], b[c], s);
  return dsm;
}

}  // namespace

TEST(StaticFos, UnivariateAndFull) {
  const auto uni = build_static(FosKind::univariate, 5);
  ASSERT_EQ(uni.size(), 5u);
  EXPECT_TRUE(is_partition(uni.elements, 5));
  const auto full = build_static(FosKind::full, 5);
  ASSERT_EQ(full.size(), 1u);
  EXPECT_EQ(full.elements[0].variables, (std::vector<Index>{0, 1, 2, 3, 4}));
  EXPECT_THROW(build_static(FosKind::linkage_tree, 5), std::invalid_argument);
}

TEST(StaticFos, MarginalProductMustPartition) {
  const auto m = build_marginal_product({{3, 1}, {0, 2}}, 4);
  EXPECT_EQ(m.elements[0].variables, (std::vector<Index>{1, 3}));
  EXPECT_THROW(build_marginal_product({{0, 1}, {1, 2}}, 3), std::invalid_argument);
  EXPECT_THROW(build_marginal_product({{0, 1}}, 3), std::invalid_argument);
}

TEST(LinkageTree, TwoDisjointBlocks) {
  const auto dsm = block_dsm(4, {{0, 1}, {2, 3}});
  const auto tree = build_linkage_tree(dsm);
  // Leaves of each block are pruned away; the root is not jointly dependent and never forms.
  EXPECT_EQ(variable_sets(tree), (std::vector<std::vector<Index>>{{0, 1}, {2, 3}}));
}

TEST(LinkageTree, ZeroDsmGivesUnivariate) {
  const auto tree = build_linkage_tree(DependencyMatrix(6));
  EXPECT_EQ(tree.size(), 6u);
  EXPECT_TRUE(is_partition(tree.elements, 6));
}

TEST(LinkageTree, WeakLinkKeepsSubtrees) {
  // 0-1 and 2-3 strong, a weak link 1-2; {0..3} is not pairwise dependent so both pairs stay.
  auto dsm = block_dsm(4, {{0, 1}, {2, 3}});
  dsm.set_strength(1, 2, 0.1);
  const auto tree = build_linkage_tree(dsm);
  EXPECT_EQ(variable_sets(tree), (std::vector<std::vector<Index>>{{0, 1}, {0, 1, 2, 3}, {2, 3}}));
}

TEST(LinkageTree, PruneReachesFixpoint) {
  // One fully dependent block of 4: everything collapses into the single root element.
  const auto tree = build_linkage_tree(block_dsm(4, {{0, 1, 2, 3}}, 0.5));
  EXPECT_EQ(variable_sets(tree), (std::vector<std::vector<Index>>{{0, 1, 2, 3}}));
}

TEST(LinkageTree, BoundingDropsLargeElements) {
  const auto tree = build_linkage_tree(block_dsm(6, {{0, 1, 2, 3, 4, 5}}, 0.5), 3);
  for (const auto& e : tree.elements) EXPECT_LE(e.variables.size(), 3u);
  std::set<Index> covered;
  for (const auto& e : tree.elements) covered.insert(e.variables.begin(), e.variables.end());
  EXPECT_EQ(covered.size(), 6u);
}

TEST(LinkageTree, Deterministic) {
  Rng rng(11);
  DependencyMatrix dsm(12);
  for (Index i = 0; i < 12; ++i)
    for (Index j = i + 1; j < 12; ++j)
      if (uniform01(rng) < 0.3) dsm.set_strength(i, j, uniform01(rng));
  const auto a = build_linkage_tree(dsm);
  const auto b = build_linkage_tree(dsm);
  ASSERT_EQ(a.size(), b.size());
  for (Index k = 0; k < a.size(); ++k) EXPECT_EQ(a.elements[k], b.elements[k]);
}

TEST(LinkageTree, ElementsAreNestedOrDisjoint) {
  Rng rng(12);
  DependencyMatrix dsm(16);
  for (Index i = 0; i < 16; ++i)
    for (Index j = i + 1; j < 16; ++j)
      if (uniform01(rng) < 0.4) dsm.set_strength(i, j, uniform01(rng));
  const auto tree = build_linkage_tree(dsm);
  for (const auto& a : tree.elements)
    for (const auto& b : tree.elements) {
      std::vector<Index> common;
      std::set_intersection(a.variables.begin(), a.variables.end(), b.variables.begin(), b.variables.end(),
                            std::back_inserter(common));
      EXPECT_TRUE(common.empty() || common == a.variables || common == b.variables);
    }
}

TEST(FosJson, RoundTripsFields) {
  const auto m = build_marginal_product({{0, 1}, {2}}, 3);
  const auto j = to_json(m);
  EXPECT_EQ(j["kind"], "marginal_product");
  EXPECT_EQ(j["elements"][0]["variables"], nlohmann::json({0, 1}));
  EXPECT_FALSE(j.contains("generational"));
}
