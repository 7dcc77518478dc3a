#include <gtest/gtest.h>

#include <set>

#include "gbmo/booster.hpp"
#include "gbmo/tree.hpp"
#include "test_util.hpp"

using namespace gbmo;
using testutil::stats_of;

namespace {

struct Fixture {
  RealMatrix x;
  BinMapper mapper;
  BinnedMatrix binned;
  GradHessBuffer grads;
};

Fixture mse_fixture(RealMatrix x, const RealMatrix& y, std::size_t max_bins = 32,
                    bool full = false) {
  Fixture f{std::move(x), {}, {}, {}};
  f.mapper = build_bin_mapper(f.x, max_bins);
  f.binned = bin_matrix(f.mapper, f.x);
  f.grads = mse_grad_hess(RealMatrix(y.rows(), y.cols(), 0.0), y, full);
  return f;
}

Fixture random_fixture(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t d) {
  std::normal_distribution<double> nd;
  RealMatrix x(n, m), y(n, d);
  for (double& v : x.values()) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) y(i, j) = std::sin(x(i, j % m) * (j + 1)) + 0.1 * nd(rng);
  }
  return mse_fixture(std::move(x), y, 16);
}

}  // namespace

TEST(Leaf, DiagonalValues) {
  EXPECT_EQ(compute_leaf_diagonal(stats_of({3, 3}, {2, 2}), 1.0), (std::vector<double>{-1, -1}));
  EXPECT_EQ(compute_leaf_diagonal(stats_of({0, 0}, {2, 2}), 1.0), (std::vector<double>{0, 0}));
  EXPECT_EQ(compute_leaf_diagonal(stats_of({2}, {3}), 1.0), std::vector<double>{-0.5});
  EXPECT_EQ(compute_leaf_diagonal(stats_of({2}, {0}), 0.0), std::vector<double>{0.0});
}

TEST(Leaf, SparseKeepsTopColumns) {
  const auto s = stats_of({4, -2, 1}, {1, 1, 1});
  const auto leaf = compute_leaf_sparse(s, 1.0, 2);
  EXPECT_EQ(leaf.columns, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(leaf.weights, (std::vector<double>{-2, 1}));
  double objective = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const double w = leaf.weights[i], c = leaf.columns[i];
    objective += s.G[c] * w + 0.5 * (s.H[c] + 1.0) * w * w;
  }
  EXPECT_DOUBLE_EQ(objective, -5.0);
  EXPECT_DOUBLE_EQ(oracle::sparse_objective_min(s.G, s.H, 1.0, 2), -5.0);

  const auto full = compute_leaf_sparse(s, 1.0, 3);
  EXPECT_TRUE(full.is_dense());
  EXPECT_EQ(full.weights, compute_leaf_diagonal(s, 1.0));

  const auto tie = compute_leaf_sparse(stats_of({1, 2, 2}, {1, 1, 1}), 1.0, 1);
  EXPECT_EQ(tie.columns, std::vector<std::size_t>{1});
}

TEST(Leaf, ExactSolveAndResidual) {
  GradStats s = stats_of({3, 3}, {2, 2});
  s.full_H = std::vector<double>{2, 1, 1, 2};
  const auto w = *compute_leaf_exact(s, 1.0);
  EXPECT_NEAR(w[0], -0.75, 1e-12);
  EXPECT_NEAR(w[1], -0.75, 1e-12);

  GradStats diag = stats_of({1, -4}, {2, 3});
  diag.full_H = std::vector<double>{2, 0, 0, 3};
  const auto wd = *compute_leaf_exact(diag, 1.0);
  const auto ref = compute_leaf_diagonal(diag, 1.0);
  EXPECT_NEAR(wd[0], ref[0], 1e-14);
  EXPECT_NEAR(wd[1], ref[1], 1e-14);

  GradStats zero = stats_of({0, 0}, {2, 2});
  zero.full_H = std::vector<double>{2, 1, 1, 2};
  EXPECT_EQ(*compute_leaf_exact(zero, 1.0), (std::vector<double>{0, 0}));

  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const auto inst = testutil::random_instance(rng, 40, 1, 1 + t % 6, 2, true);
    const auto st = sum_stats(testutil::iota_samples(40), inst.grads, true);
    const std::size_t d = st.dim();
    const auto x = *compute_leaf_exact(st, 0.7);
    double gmax = 0, rmax = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double r = st.G[i] + 0.7 * x[i];
      for (std::size_t j = 0; j < d; ++j) r += (*st.full_H)[i * d + j] * x[j];
      rmax = std::max(rmax, std::fabs(r));
      gmax = std::max(gmax, std::fabs(st.G[i]));
    }
    EXPECT_LE(rmax, 1e-8 * (1 + gmax));
  }
}

TEST(ApplySplit, PartitionsByBin) {
  BinnedMatrix binned(4, {3});
  const std::size_t bins[] = {0, 1, 0, 2};
  for (std::size_t i = 0; i < 4; ++i) binned.set(i, 0, bins[i]);
  SplitInfo split;
  split.feature = 0;
  split.threshold_bin = 0;
  const auto [l, r] = apply_split(testutil::iota_samples(4), binned, split);
  EXPECT_EQ(l, (std::vector<SampleIndex>{0, 2}));
  EXPECT_EQ(r, (std::vector<SampleIndex>{1, 3}));
  split.threshold_bin = 2;
  EXPECT_THROW(apply_split(testutil::iota_samples(4), binned, split), std::logic_error);
}

TEST(GrowTree, ZeroGradientGivesSingleLeaf) {
  const auto f = mse_fixture(RealMatrix(4, 1, {1, 2, 3, 4}), RealMatrix(4, 1, 0.0));
  TreeConfig cfg;
  const auto tree = grow_tree(testutil::iota_samples(4), f.binned, f.mapper, f.grads, cfg);
  EXPECT_EQ(tree.num_leaves(), 1u);
  EXPECT_EQ(tree.nodes()[0].leaf.weights, std::vector<double>{0.0});
}

TEST(GrowTree, XorNeedsTwoLevels) {
  const auto f = mse_fixture(RealMatrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1}),
                             RealMatrix(4, 1, {0, 1, 1, 0}));
  TreeConfig cfg;
  cfg.lambda = 0;
  cfg.max_depth = 2;
  cfg.max_leaves = 4;
  cfg.gain_threshold = -1;  // the root split has zero gain
  const auto tree = grow_tree(testutil::iota_samples(4), f.binned, f.mapper, f.grads, cfg);
  EXPECT_EQ(tree.num_leaves(), 4u);
  EXPECT_EQ(tree.depth(), 2u);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> out{0.0};
    tree.predict_add(f.x.row(i), out, 1.0);
    EXPECT_EQ(out[0], i == 1 || i == 2 ? 1.0 : 0.0);
  }
}

TEST(GrowTree, TwoLeafBudgetTakesBestRootSplit) {
  std::mt19937_64 rng(10);
  const auto f = random_fixture(rng, 300, 4, 3);
  TreeConfig cfg;
  cfg.max_leaves = 2;
  const auto all = testutil::iota_samples(300);
  const auto tree = grow_tree(all, f.binned, f.mapper, f.grads, cfg);
  ASSERT_EQ(tree.num_leaves(), 2u);
  const auto best = find_best_split(build_node_histograms(all, f.binned, f.grads, false, 1), {});
  EXPECT_EQ(tree.nodes()[0].feature, best.feature);
  EXPECT_EQ(tree.nodes()[0].threshold_bin, best.threshold_bin);
  EXPECT_EQ(tree.nodes()[0].threshold, f.mapper.boundaries(best.feature)[best.threshold_bin]);
}

TEST(GrowTree, StructuralInvariants) {
  std::mt19937_64 rng(20);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 50 + rng() % 400, d = 1 + rng() % 4;
    const auto f = random_fixture(rng, n, 3, d);
    TreeConfig cfg;
    cfg.mode = static_cast<SplitMode>(t % 3);
    cfg.k = 1 + rng() % d;
    cfg.max_depth = 1 + rng() % 6;
    cfg.max_leaves = 2 + rng() % 20;
    cfg.min_samples = 1 + rng() % 10;
    cfg.workers = 1 + t % 3;
    GrowthStats stats;
    const auto tree = grow_tree(testutil::iota_samples(n), f.binned, f.mapper, f.grads, cfg, &stats);
    EXPECT_LE(tree.num_leaves(), cfg.max_leaves);
    EXPECT_LE(tree.depth(), cfg.max_depth);

    // Every sample lands in exactly one leaf, and the recorded leaf sets
    // agree with routing the raw features through the tree.
    std::vector<int> seen(n, 0);
    for (std::size_t l = 0; l < stats.leaf_nodes.size(); ++l) {
      EXPECT_GE(stats.leaf_samples[l].size(), cfg.min_samples);
      for (auto i : stats.leaf_samples[l]) {
        ++seen[i];
        EXPECT_EQ(tree.leaf_index(f.x.row(i)), stats.leaf_nodes[l]);
      }
    }
    for (int c : seen) EXPECT_EQ(c, 1);
    EXPECT_EQ(stats.leaf_nodes.size(), tree.num_leaves());

    for (const auto& node : tree.nodes()) {
      if (!node.is_leaf()) continue;
      if (is_sparse(cfg.mode) && cfg.k < d) {
        EXPECT_EQ(node.leaf.columns.size(), cfg.k);
      } else {
        EXPECT_TRUE(node.leaf.is_dense());
        EXPECT_EQ(node.leaf.weights.size(), d);
      }
    }

    // Best-first: each expansion beats everything still queued. Children
    // may carry larger gains than their parent, so the raw sequence is not
    // monotone in general.
    ASSERT_EQ(stats.expanded_gains.size(), stats.next_pending_gains.size());
    for (std::size_t i = 0; i < stats.expanded_gains.size(); ++i) {
      EXPECT_GE(stats.expanded_gains[i], stats.next_pending_gains[i]);
    }
    for (const auto& b : stats.subtraction_builds) EXPECT_LE(b.built_size, b.parent_size / 2 + 1);
  }
}

TEST(GrowTree, StoreOverflowRebuildsAndKeepsTheSameStructure) {
  std::mt19937_64 rng(30);
  const auto f = random_fixture(rng, 2000, 5, 2);
  TreeConfig cfg;
  cfg.max_depth = 8;
  cfg.max_leaves = 100;
  const auto all = testutil::iota_samples(2000);
  const auto reference = grow_tree(all, f.binned, f.mapper, f.grads, cfg);
  cfg.node_store_limit = 2;
  GrowthStats stats;
  const auto limited = grow_tree(all, f.binned, f.mapper, f.grads, cfg, &stats);
  EXPECT_GT(stats.store_overflows, 0u);
  EXPECT_GT(stats.full_rebuilds, 0u);
  // Subtracted and rebuilt histograms differ only in rounding.
  ASSERT_EQ(limited.nodes().size(), reference.nodes().size());
  for (std::size_t i = 0; i < limited.nodes().size(); ++i) {
    const auto& a = limited.nodes()[i];
    const auto& b = reference.nodes()[i];
    ASSERT_EQ(a.left, b.left);
    EXPECT_EQ(a.feature, b.feature);
    EXPECT_EQ(a.threshold_bin, b.threshold_bin);
    ASSERT_EQ(a.leaf.weights.size(), b.leaf.weights.size());
    for (std::size_t j = 0; j < a.leaf.weights.size(); ++j) {
      EXPECT_NEAR(a.leaf.weights[j], b.leaf.weights[j], 1e-12);
    }
  }
}

TEST(GrowTree, RestrictedChildrenShareColumns) {
  std::mt19937_64 rng(40);
  const auto f = random_fixture(rng, 500, 3, 5);
  TreeConfig cfg;
  cfg.mode = SplitMode::kRestricted;
  cfg.k = 2;
  cfg.max_leaves = 2;
  const auto tree = grow_tree(testutil::iota_samples(500), f.binned, f.mapper, f.grads, cfg);
  ASSERT_EQ(tree.num_leaves(), 2u);
  EXPECT_EQ(tree.nodes()[1].leaf.columns, tree.nodes()[2].leaf.columns);
}

TEST(GrowTree, ExactModeWithMseMatchesDense) {
  std::mt19937_64 rng(50);
  auto f = random_fixture(rng, 400, 3, 3);
  const RealMatrix y = [&] {
    RealMatrix t(400, 3);
    for (std::size_t i = 0; i < 400; ++i) {
      for (std::size_t j = 0; j < 3; ++j) t(i, j) = -f.grads.g(i, j);
    }
    return t;
  }();
  f.grads = mse_grad_hess(RealMatrix(400, 3, 0.0), y, true);
  TreeConfig cfg;
  const auto dense = grow_tree(testutil::iota_samples(400), f.binned, f.mapper, f.grads, cfg);
  cfg.mode = SplitMode::kExact;
  cfg.gain_threshold = 0;
  const auto exact = grow_tree(testutil::iota_samples(400), f.binned, f.mapper, f.grads, cfg);
  ASSERT_EQ(exact.nodes().size(), dense.nodes().size());
  for (std::size_t i = 0; i < exact.nodes().size(); ++i) {
    const auto& a = exact.nodes()[i];
    const auto& b = dense.nodes()[i];
    EXPECT_EQ(a.feature, b.feature);
    EXPECT_EQ(a.threshold_bin, b.threshold_bin);
    for (std::size_t j = 0; j < a.leaf.weights.size(); ++j) {
      EXPECT_NEAR(a.leaf.weights[j], b.leaf.weights[j], 1e-12);
    }
  }
}

TEST(GrowTree, ConfigErrors) {
  const auto f = mse_fixture(RealMatrix(4, 1, {1, 2, 3, 4}), RealMatrix(4, 2, 1.0));
  TreeConfig cfg;
  cfg.mode = SplitMode::kSparse;
  cfg.k = 3;
  EXPECT_THROW(grow_tree(testutil::iota_samples(4), f.binned, f.mapper, f.grads, cfg), ConfigError);
  cfg = {};
  cfg.max_leaves = 1;
  EXPECT_THROW(grow_tree(testutil::iota_samples(4), f.binned, f.mapper, f.grads, cfg), ConfigError);
  cfg = {};
  cfg.mode = SplitMode::kExact;
  EXPECT_THROW(grow_tree(testutil::iota_samples(4), f.binned, f.mapper, f.grads, cfg), ConfigError);
  EXPECT_THROW(grow_tree({}, f.binned, f.mapper, f.grads, TreeConfig{}), DataError);
}

TEST(Tree, PredictSingleSplit) {
  std::vector<TreeNode> nodes(3);
  nodes[0].feature = 0;
  nodes[0].threshold = 0.5;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[1].leaf.weights = {1, 0};
  nodes[2].leaf.weights = {0, 1};
  Ensemble ens;
  ens.num_features = 2;
  ens.num_outputs = 2;
  ens.learning_rate = 0.1;
  ens.base_score = {0, 0};
  ens.trees.emplace_back(2, nodes);
  const auto p = predict_raw(ens, RealMatrix(2, 2, {0.3, 9, 0.5000001, 9}));
  EXPECT_EQ(p(0, 0), 0.1);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(1, 1), 0.1);

  ens.trees.clear();
  ens.base_score = {2, -1};
  const auto base = predict_raw(ens, RealMatrix(3, 2, 0.0));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(base(i, 0), 2.0);
    EXPECT_EQ(base(i, 1), -1.0);
  }
  EXPECT_THROW(predict_raw(ens, RealMatrix(1, 3)), DataError);
}

TEST(Tree, SingleOutputLeavesMatchOneMultiOutputTree) {
  // Per-output single-leaf trees add up to one multi-output leaf.
  Ensemble so, mo;
  for (auto* e : {&so, &mo}) {
    e->num_features = 1;
    e->num_outputs = 3;
    e->learning_rate = 0.5;
    e->base_score = {0, 0, 0};
  }
  const std::vector<double> w{0.25, -1.5, 3};
  for (std::size_t j = 0; j < 3; ++j) {
    TreeNode leaf;
    leaf.leaf = {{j}, {w[j]}};
    so.trees.emplace_back(3, std::vector<TreeNode>{leaf});
  }
  TreeNode leaf;
  leaf.leaf.weights = w;
  mo.trees.emplace_back(3, std::vector<TreeNode>{leaf});
  const RealMatrix x(4, 1, {-1, 0, 1, 2});
  EXPECT_EQ(predict_raw(so, x), predict_raw(mo, x));
  EXPECT_EQ(*so.trees[2].single_output(), 2u);
  EXPECT_FALSE(mo.trees[0].single_output());
}
