#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cdt/explain.hpp"

using namespace cdt;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double node_left(const SplitNode<double>& n, const std::vector<double>& x) {
  double z = n.bias;
  for (std::size_t k = 0; k < x.size(); ++k) z += n.weights[k] * x[k];
  return logistic(z);
}

struct OraclePath {
  std::vector<std::size_t> nodes;  // internal nodes, root first
  std::vector<double> taken;       // probability of the branch taken below each node
  std::size_t leaf = 0;
};

// Enumerates every leaf, keeps the first most probable one.
template <template <class> class Leaf>
OraclePath best_path(const SoftTree<double, Leaf>& tree, const std::vector<double>& x) {
  OraclePath best;
  double best_p = -1.0;
  for (std::size_t leaf = 0; leaf < tree.leaves.size(); ++leaf) {
    OraclePath cur;
    cur.leaf = leaf;
    double p = 1.0;
    std::size_t u = 1;
    for (int level = tree.depth - 1; level >= 0; --level) {
      const bool right = (leaf >> level) & 1u;
      const double left = node_left(tree.node(u), x);
      const double q = right ? 1.0 - left : left;
      cur.nodes.push_back(u);
      cur.taken.push_back(q);
      p *= q;
      u = 2 * u + (right ? 1 : 0);
    }
    if (p > best_p) {
      best_p = p;
      best = cur;
    }
  }
  return best;
}

std::vector<double> oracle_sdt(const Sdt<double>& m, const std::vector<double>& x, bool weighted) {
  const auto path = best_path(m.tree, x);
  std::vector<double> I(x.size(), 0.0);
  for (std::size_t i = 0; i < path.nodes.size(); ++i) {
    const double c = weighted ? path.taken[i] : 1.0;
    for (std::size_t k = 0; k < x.size(); ++k) I[k] += c * m.tree.node(path.nodes[i]).weights[k];
  }
  return I;
}

// F path weights plus D path weights pulled back through the chosen transform.
std::vector<double> oracle_cdt(const Cdt<double>& m, const std::vector<double>& x, bool weighted) {
  const auto fp = best_path(m.features, x);
  const auto& leaf = m.features.leaves[fp.leaf];
  std::vector<double> f(m.features_dim, 0.0);
  for (std::size_t r = 0; r < m.features_dim; ++r) {
    for (std::size_t k = 0; k < x.size(); ++k) f[r] += leaf.transform[r * x.size() + k] * x[k];
  }
  const auto dp = best_path(m.decisions, f);
  std::vector<double> I(x.size(), 0.0);
  for (std::size_t i = 0; i < fp.nodes.size(); ++i) {
    const double c = weighted ? fp.taken[i] : 1.0;
    for (std::size_t k = 0; k < x.size(); ++k) I[k] += c * m.features.node(fp.nodes[i]).weights[k];
  }
  for (std::size_t i = 0; i < dp.nodes.size(); ++i) {
    const double c = weighted ? dp.taken[i] : 1.0;
    const auto& w = m.decisions.node(dp.nodes[i]).weights;
    for (std::size_t k = 0; k < x.size(); ++k) {
      double wt = 0.0;
      for (std::size_t r = 0; r < m.features_dim; ++r) wt += w[r] * leaf.transform[r * x.size() + k];
      I[k] += c * wt;
    }
  }
  return I;
}

std::vector<double> random_input(std::mt19937_64& g, std::size_t n, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> x(n);
  for (double& v : x) v = u(g);
  return x;
}

// Spread weights out so random inputs do not all sit near one boundary.
template <class M>
void scale_params(M& m, double s) {
  auto p = flatten(m);
  for (double& v : p) v *= s;
  assign(m, std::span<const double>(p));
}

void expect_vec_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], tol) << "component " << k;
}

Sdt<double> depth1_sdt(std::vector<double> w, double b, std::vector<double> left, std::vector<double> right) {
  Sdt<double> m;
  m.outputs = left.size();
  m.tree.depth = 1;
  m.tree.input_dim = w.size();
  m.tree.nodes.push_back(SplitNode<double>{std::move(w), b, std::nullopt});
  m.tree.leaves.push_back(DistributionLeaf<double>{std::move(left)});
  m.tree.leaves.push_back(DistributionLeaf<double>{std::move(right)});
  return m;
}

}  // namespace

TEST(PathSum, Depth1RootWeights) {
  const auto m = depth1_sdt({1.0, -2.0}, 0.3, {0.0, 1.0}, {1.0, 0.0});
  const std::vector<double> x{0.4, 0.1};
  expect_vec_near(importance_path_sum(m, x), {1.0, -2.0}, 0.0);
}

TEST(PathSum, AddsNodesOnThePath) {
  Rng rng(3);
  auto m = make_sdt(2, 2, 2, rng);
  m.tree.node(1) = SplitNode<double>{{0.0, 0.0}, 5.0, std::nullopt};  // always left
  m.tree.node(2) = SplitNode<double>{{1.0, 0.0}, 0.0, std::nullopt};
  m.tree.node(3) = SplitNode<double>{{7.0, 7.0}, 0.0, std::nullopt};
  const std::vector<double> x{0.2, -0.3};
  expect_vec_near(importance_path_sum(m, x), {1.0, 0.0}, 0.0);
  m.tree.node(1).weights = {0.0, 1.0};
  expect_vec_near(importance_path_sum(m, x), {1.0, 1.0}, 0.0);
}

TEST(PathSum, SdtMatchesEnumerationOracle) {
  Rng rng(11);
  std::mt19937_64 g(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = make_sdt(4, 3, 3, rng);
    scale_params(m, 20.0);
    for (int i = 0; i < 10; ++i) {
      const auto x = random_input(g, 4);
      expect_vec_near(importance_path_sum(m, x), oracle_sdt(m, x, false), 1e-12);
      expect_vec_near(importance_confidence(m, x), oracle_sdt(m, x, true), 1e-12);
    }
  }
}

TEST(PathSum, CdtBackProjectionMatchesOracle) {
  Rng rng(21);
  std::mt19937_64 g(22);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = make_cdt(4, 2, 2, 1, 2, rng);
    scale_params(m, 20.0);
    for (int i = 0; i < 10; ++i) {
      const auto x = random_input(g, 4);
      const auto I = importance_path_sum(m, x);
      EXPECT_EQ(I.size(), 4u);
      expect_vec_near(I, oracle_cdt(m, x, false), 1e-12);
      expect_vec_near(importance_confidence(m, x), oracle_cdt(m, x, true), 1e-12);
    }
  }
}

TEST(PathSum, DeeperCdtMatchesOracle) {
  Rng rng(23);
  std::mt19937_64 g(24);
  auto m = make_cdt(8, 4, 4, 2, 3, rng);
  scale_params(m, 10.0);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_input(g, 8);
    expect_vec_near(importance_path_sum(m, x), oracle_cdt(m, x, false), 1e-12);
  }
}

TEST(PathSum, HardNodesUseSignedOneHot) {
  Rng rng(31);
  auto m = make_sdt(3, 2, 2, rng);
  const auto hard = discretize(m);
  std::mt19937_64 g(32);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_input(g, 3);
    const auto I = importance_path_sum(hard, x);
    std::vector<double> sum(3, 0.0);
    for (const auto& pw : path_weights(hard, x)) {
      const auto& h = *hard.tree.node(pw.node).hard;
      double l1 = 0.0;
      for (double v : pw.weights) l1 += std::abs(v);
      EXPECT_EQ(l1, 1.0);
      EXPECT_EQ(std::abs(pw.weights[h.feature]), 1.0);
      double z = pw.bias;
      for (std::size_t k = 0; k < 3; ++k) {
        z += pw.weights[k] * x[k];
        sum[k] += pw.weights[k];
      }
      EXPECT_EQ(z > 0.0, h.goes_left(x[h.feature]));
    }
    EXPECT_EQ(I, sum);
    EXPECT_EQ(importance_confidence(hard, x), I);  // hard branches are taken with probability 1
  }
}

TEST(Confidence, HalfProbabilityHalvesTheWeight) {
  const auto m = depth1_sdt({1.0, -2.0}, 0.0, {0.0, 1.0}, {1.0, 0.0});
  const std::vector<double> x{2.0, 1.0};  // w.x + b = 0
  expect_vec_near(importance_confidence(m, x), {0.5, -1.0}, 1e-15);
}

TEST(Confidence, SaturatedPathEqualsPathSum) {
  Rng rng(41);
  std::mt19937_64 g(42);
  auto m = make_sdt(4, 2, 3, rng);
  scale_params(m, 1e4);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_input(g, 4);
    expect_vec_near(importance_confidence(m, x), importance_path_sum(m, x), 1e-6);
  }
}

TEST(Confidence, BoundedByAbsolutePathWeights) {
  Rng rng(51);
  std::mt19937_64 g(52);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = make_cdt(4, 2, 2, 2, 2, rng);
    scale_params(m, 10.0);
    for (int i = 0; i < 20; ++i) {
      const auto x = random_input(g, 4);
      const auto I = importance_confidence(m, x);
      std::vector<double> bound(4, 0.0);
      for (const auto& pw : path_weights(m, x)) {
        EXPECT_GT(pw.chosen_probability, 0.0);
        EXPECT_LE(pw.chosen_probability, 1.0);
        for (std::size_t k = 0; k < 4; ++k) bound[k] += std::abs(pw.weights[k]);
      }
      for (std::size_t k = 0; k < 4; ++k) EXPECT_LE(std::abs(I[k]), bound[k] + 1e-12);
    }
  }
}

TEST(Gradient, ConstantModelHasZeroImportance) {
  Rng rng(61);
  auto sdt = make_sdt(4, 2, 3, rng);
  for (auto& leaf : sdt.tree.leaves) leaf.logits = {0.3, -0.2};
  auto cdt = make_cdt(4, 2, 2, 1, 2, rng);
  for (auto& leaf : cdt.decisions.leaves) leaf.logits = {0.3, -0.2};
  const std::vector<double> x{0.1, -0.4, 0.2, 0.05};
  for (double v : importance_gradient(sdt, x)) EXPECT_NEAR(v, 0.0, 1e-15);
  for (double v : importance_gradient(cdt, x)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Gradient, Depth1ClosedForm) {
  // pi[1] = s * 1 + (1 - s) * 0 with s = sigma(b + w.x) for one-hot-ish leaves.
  const auto m = depth1_sdt({0.7, -1.3}, 0.2, {-5.0, 5.0}, {5.0, -5.0});
  const std::vector<double> x{0.3, 0.1};
  const double s = logistic(0.2 + 0.7 * 0.3 - 1.3 * 0.1);
  const double e = std::exp(10.0);
  const double hi = e / (1.0 + e);
  // d/dx [s*hi + (1-s)*(1-hi)] = (2hi-1) s(1-s) w
  const double c = (2.0 * hi - 1.0) * s * (1.0 - s);
  expect_vec_near(importance_gradient(m, x), {c * 0.7, c * -1.3}, 1e-14);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(71);
  std::mt19937_64 g(72);
  auto check = [&](const auto& m, std::size_t dim) {
    for (int i = 0; i < 10; ++i) {
      const auto x = random_input(g, dim, 1.0);
      const auto soft = predict_soft(m, x);
      const std::size_t c = argmax(std::span<const double>(soft));
      const auto I = importance_gradient(m, x);
      for (std::size_t k = 0; k < dim; ++k) {
        const double h = 1e-6;
        auto xp = x;
        auto xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd = (predict_soft(m, xp)[c] - predict_soft(m, xm)[c]) / (2.0 * h);
        EXPECT_NEAR(I[k], fd, 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  };
  for (int trial = 0; trial < 5; ++trial) {
    auto sdt = make_sdt(4, 3, 3, rng);
    scale_params(sdt, 15.0);
    check(sdt, 4);
    auto cdt = make_cdt(4, 2, 3, 2, 2, rng);
    scale_params(cdt, 8.0);
    check(cdt, 4);
  }
}

TEST(Gradient, SaturatedRegionIsFlat) {
  const auto m = depth1_sdt({50.0, 0.0}, 0.0, {-2.0, 2.0}, {2.0, -2.0});
  const std::vector<double> x{3.0, 0.0};
  double n = 0.0;
  for (double v : importance_gradient(m, x)) n += v * v;
  EXPECT_LT(std::sqrt(n), 1e-30);
}

TEST(Gradient, RejectsDiscretizedModels) {
  Rng rng(81);
  const auto sdt = make_sdt(3, 2, 2, rng);
  const std::vector<double> x{0.1, 0.2, 0.3};
  EXPECT_THROW(importance_gradient(discretize(sdt), x), std::invalid_argument);
  const auto cdt = make_cdt(3, 2, 2, 1, 2, rng);
  EXPECT_THROW(importance_gradient(discretize(cdt, DiscretizeMode::cdt_d_only), x), std::invalid_argument);
  EXPECT_NO_THROW(importance_gradient(cdt, x));
}

TEST(Global, SingleStateEqualsLocal) {
  const std::vector<std::vector<double>> one{{1.0, -2.0, 0.5}};
  EXPECT_EQ(importance_global(one), one.front());
  const std::vector<std::vector<double>> sym{{1.0, -2.0}, {-1.0, 2.0}};
  EXPECT_EQ(importance_global(sym), (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(importance_global(std::vector<std::vector<double>>{}), std::invalid_argument);
  EXPECT_THROW(importance_global(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST(Global, EpisodeMeanMatchesStreamingSum) {
  const auto d = generate_teacher_dataset("cartpole", 1, 0);
  ASSERT_EQ(d.size(), 500u);
  Rng rng(91);
  auto m = make_sdt(4, 2, 3, rng);
  scale_params(m, 10.0);
  std::vector<std::vector<double>> local;
  std::vector<double> running(4, 0.0);
  for (const auto& s : d.states) {
    local.push_back(importance_path_sum(m, s));
    for (std::size_t k = 0; k < 4; ++k) running[k] += local.back()[k];
  }
  const auto g = importance_global(local);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g[k], running[k] / 500.0, 1e-12);
}

TEST(Global, PolicyOverloadNormalizesRawStates) {
  Rng rng(92);
  Policy p;
  p.model = make_sdt(2, 2, 1, rng);
  p.normalizer.mean = {1.0, 2.0};
  p.normalizer.stdev = {2.0, 4.0};
  const std::vector<double> raw{3.0, 6.0};
  const auto& m = std::get<Sdt<double>>(p.model);
  EXPECT_EQ(importance(p, raw, ImportanceMethod::confidence),
            importance_confidence(m, std::vector<double>{1.0, 1.0}));
  Policy mlp;
  mlp.model = make_policy_mlp(2, 4, 2, rng);
  EXPECT_THROW(importance(mlp, raw, ImportanceMethod::path_sum), std::invalid_argument);
  EXPECT_EQ(parse_importance_method("gradient"), ImportanceMethod::gradient);
  EXPECT_THROW(parse_importance_method("saliency"), std::invalid_argument);
}

TEST(Stability, L1Arithmetic) {
  const WeightSet a{{1.0, 0.0}};
  const WeightSet b{{0.0, 1.0}};
  EXPECT_EQ(stability_distance(a, b), 2.0);
  EXPECT_EQ(stability_distance(a, a), 0.0);
  const WeightSet c{{1.0, 0.0}, {0.0, 1.0}};
  // a->c: 0; c->a: (0 + 2) / 2
  EXPECT_EQ(stability_distance(a, c), 0.5);
  EXPECT_EQ(stability_distance(c, a), 0.5);
}

TEST(Stability, SymmetricAndZeroOnIdenticalSets) {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = weight_set(make_cdt(4, 2, 2, 1, 2, rng));
    const auto y = weight_set(make_sdt(4, 2, 3, rng));
    EXPECT_EQ(stability_distance(x, x), 0.0);
    EXPECT_EQ(stability_distance(y, y), 0.0);
    EXPECT_EQ(stability_distance(x, y), stability_distance(y, x));
    EXPECT_GT(stability_distance(x, y), 0.0);
    EXPECT_LE(stability_distance(x, y), 2.0);
  }
}

TEST(Stability, RejectsEmptyAndRaggedSets) {
  EXPECT_THROW(stability_distance({}, {{1.0}}), std::invalid_argument);
  EXPECT_THROW(stability_distance({{1.0}}, {}), std::invalid_argument);
  EXPECT_THROW(stability_distance({{1.0, 0.0}}, {{1.0}}), std::invalid_argument);
}

TEST(WeightSets, UnitL1WithBackProjectedDecisionNodes) {
  Rng rng(111);
  const auto cdt = make_cdt(4, 2, 2, 2, 2, rng);
  const auto set = weight_set(cdt);
  ASSERT_EQ(set.size(), 3u + 4u * 3u);
  for (const auto& v : set) {
    ASSERT_EQ(v.size(), 5u);
    double n = 0.0;
    for (double x : v) n += std::abs(x);
    EXPECT_NEAR(n, 1.0, 1e-15);
  }
  // D node 1 through F leaf 0, recomputed from the transform.
  const auto& T = cdt.features.leaves[0].transform;
  const auto& d = cdt.decisions.node(1);
  std::vector<double> raw(5, 0.0);
  for (std::size_t k = 0; k < 4; ++k) raw[k] = d.weights[0] * T[k] + d.weights[1] * T[4 + k];
  raw[4] = d.bias;
  double n = 0.0;
  for (double v : raw) n += std::abs(v);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(set[3][k], raw[k] / n, 1e-15);

  const auto sdt = weight_set(make_sdt(4, 2, 3, rng));
  EXPECT_EQ(sdt.size(), 7u);

  auto zero = make_sdt(2, 2, 1, rng);
  zero.tree.node(1) = SplitNode<double>{{0.0, 0.0}, 0.0, std::nullopt};
  EXPECT_THROW(weight_set(zero), std::invalid_argument);
}

TEST(Stability, RandomAgentsAndReport) {
  Rng rng(121);
  Policy like;
  like.spec.family = Family::sdt;
  like.spec.depth = 2;
  like.model = make_sdt(4, 2, 2, rng);
  const auto a = random_agents(like, 3, 7);
  const auto b = random_agents(like, 3, 7);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(flatten(std::get<Sdt<double>>(a[0].model)), flatten(std::get<Sdt<double>>(b[0].model)));
  EXPECT_NE(flatten(std::get<Sdt<double>>(a[0].model)), flatten(std::get<Sdt<double>>(a[1].model)));

  std::vector<WeightSet> learners{weight_set(like), weight_set(like), weight_set(like)};
  std::vector<WeightSet> randoms;
  for (const auto& p : a) randoms.push_back(weight_set(p));
  const auto r = stability(learners, randoms);
  EXPECT_EQ(r.pair_distances.size(), 3u);
  EXPECT_EQ(r.random_distances.size(), 9u);
  EXPECT_EQ(r.learner_pairs.mean, 0.0);
  EXPECT_GT(r.random.mean, 0.0);
  EXPECT_THROW(stability({learners[0]}, randoms), std::invalid_argument);
}
