#include <gtest/gtest.h>

#include <Eigen/QR>

#include "morphofv/metrics.hpp"
#include "oracles.hpp"

using namespace morphofv;

namespace {

std::vector<RetrievalFeature> random_features(std::size_t n, Eigen::Index dim, Rng& rng) {
  std::vector<RetrievalFeature> out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd f(dim);
    for (Eigen::Index j = 0; j < dim; ++j) f[j] = rng.normal();
    out.push_back({"img" + std::to_string(100 + i), f});
  }
  return out;
}

// Scores every other item with a plain dot/norm loop and orders by pairwise
// comparison.
double brute_retrieval_map(const std::vector<RetrievalFeature>& items, const std::vector<int>& labels) {
  double sum = 0.0;
  int counted = 0;
  for (std::size_t q = 0; q < items.size(); ++q) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i == q) continue;
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (Eigen::Index j = 0; j < items[q].feature.size(); ++j) {
        dot += items[q].feature[j] * items[i].feature[j];
        na += items[q].feature[j] * items[q].feature[j];
        nb += items[i].feature[j] * items[i].feature[j];
      }
      scored.emplace_back(dot / std::sqrt(na * nb), i);
    }
    std::vector<int> rel;
    while (!scored.empty()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < scored.size(); ++k)
        if (scored[k].first > scored[best].first ||
            (scored[k].first == scored[best].first && items[scored[k].second].id < items[scored[best].second].id))
          best = k;
      rel.push_back(labels[scored[best].second] == labels[q] ? 1 : 0);
      scored.erase(scored.begin() + static_cast<std::ptrdiff_t>(best));
    }
    if (std::count(rel.begin(), rel.end(), 1) == 0) continue;
    sum += oracle::brute_ap(rel);
    ++counted;
  }
  return sum / counted;
}

}  // namespace

TEST(AveragePrecision, Examples) {
  EXPECT_EQ(average_precision({true, false, true}, 2), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(average_precision({true, true, true, false, false}, 3), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({false, false, false, false, true}, 1), 0.2);
  EXPECT_THROW(average_precision({false, false}, 0), PreconditionError);
}

TEST(AveragePrecision, MatchesBruteForceOnRandomRankings) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<bool> rel(n);
    std::vector<int> reli(n);
    for (std::size_t i = 0; i < n; ++i) reli[i] = rel[i] = rng.uniform() < 0.4;
    const int total = std::accumulate(reli.begin(), reli.end(), 0);
    if (total == 0) continue;
    const double ap = average_precision(rel, static_cast<std::size_t>(total));
    EXPECT_NEAR(ap, oracle::brute_ap(reli), 1e-15);
    EXPECT_GT(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)), 0.0);
  EXPECT_DOUBLE_EQ(cosine(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)), 1.0);
  EXPECT_DOUBLE_EQ(cosine(Eigen::Vector2d(1, 0), Eigen::Vector2d(-3, 0)), -1.0);
  EXPECT_DOUBLE_EQ(cosine(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 2)), 0.0);
  EXPECT_THROW(cosine(Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 0, 0)), DimensionError);
}

TEST(Cosine, SymmetricAndBounded) {
  Rng rng(7);
  const auto f = random_features(20, 6, rng);
  for (std::size_t i = 1; i < f.size(); ++i) {
    const double c = cosine(f[i].feature, f[i - 1].feature);
    EXPECT_EQ(c, cosine(f[i - 1].feature, f[i].feature));
    EXPECT_LE(std::abs(c), 1.0);
  }
}

TEST(SortRanking, TiesByIdAscending) {
  std::vector<RankedItem> items{{"b", 0.5, false}, {"a", 0.5, true}, {"c", 0.9, false}};
  sort_ranking(items);
  EXPECT_EQ(items[0].id, "c");
  EXPECT_EQ(items[1].id, "a");
  EXPECT_EQ(items[2].id, "b");
}

TEST(MapClassification, PerfectPredictions) {
  const std::vector<Eigen::VectorXd> probs{Eigen::Vector2d(0.9, 0.1), Eigen::Vector2d(0.2, 0.8),
                                           Eigen::Vector2d(0.7, 0.3), Eigen::Vector2d(0.4, 0.6)};
  const auto r = map_classification(probs, {0, 1, 0, 1}, {"a", "b", "c", "d"}, 2);
  EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
  EXPECT_TRUE(r.skipped_classes.empty());
}

TEST(MapClassification, UniformProbabilitiesFollowIdOrder) {
  const std::vector<Eigen::VectorXd> probs(4, Eigen::Vector2d(0.5, 0.5));
  const std::vector<int> labels{1, 0, 1, 0};
  const auto r = map_classification(probs, labels, {"d", "c", "b", "a"}, 2);
  // Id order a, b, c, d has labels 0, 1, 0, 1.
  const double ap0 = oracle::brute_ap({1, 0, 1, 0});
  const double ap1 = oracle::brute_ap({0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(*r.class_ap[0], ap0);
  EXPECT_DOUBLE_EQ(*r.class_ap[1], ap1);
  EXPECT_DOUBLE_EQ(r.mean_ap, (ap0 + ap1) / 2.0);
}

TEST(MapClassification, ReversedRanking) {
  const std::vector<Eigen::VectorXd> probs{Eigen::Vector2d(0.9, 0.1), Eigen::Vector2d(0.8, 0.2),
                                           Eigen::Vector2d(0.2, 0.8), Eigen::Vector2d(0.1, 0.9)};
  const auto r = map_classification(probs, {1, 1, 0, 0}, {"a", "b", "c", "d"}, 2);
  EXPECT_DOUBLE_EQ(*r.class_ap[0], (1.0 / 3.0 + 2.0 / 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(*r.class_ap[1], (1.0 / 3.0 + 2.0 / 4.0) / 2.0);
}

TEST(MapClassification, ClassWithoutPositivesIsSkipped) {
  const std::vector<Eigen::VectorXd> probs{Eigen::Vector3d(0.6, 0.3, 0.1), Eigen::Vector3d(0.2, 0.7, 0.1)};
  const auto r = map_classification(probs, {0, 1}, {"a", "b"}, 3);
  ASSERT_EQ(r.skipped_classes, std::vector<int>{2});
  EXPECT_FALSE(r.class_ap[2].has_value());
  EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
  EXPECT_THROW(map_classification(probs, {0}, {"a", "b"}, 3), DimensionError);
}

TEST(MapRetrieval, OneHotFeaturesArePerfect) {
  std::vector<RetrievalFeature> items;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    items.push_back({"x" + std::to_string(i), Eigen::VectorXd::Unit(4, i % 4)});
    labels.push_back(i % 4);
  }
  const auto r = map_retrieval(items, labels, true);
  EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
  EXPECT_EQ(r.rankings.size(), 12u);
  EXPECT_EQ(r.skipped, 0u);
}

TEST(MapRetrieval, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto items = random_features(4, 3, rng);
    const std::vector<int> labels{0, 1, 0, 1};
    EXPECT_NEAR(map_retrieval(items, labels).mean_ap, brute_retrieval_map(items, labels), 1e-14);
  }
  Rng rng(77);
  const auto items = random_features(15, 5, rng);
  std::vector<int> labels;
  for (int i = 0; i < 15; ++i) labels.push_back(i % 3);
  EXPECT_NEAR(map_retrieval(items, labels).mean_ap, brute_retrieval_map(items, labels), 1e-14);
}

TEST(MapRetrieval, IdenticalFeaturesRankById) {
  std::vector<RetrievalFeature> items;
  for (const char* id : {"a", "b", "c", "d"}) items.push_back({id, Eigen::Vector2d(1, 1)});
  const std::vector<int> labels{0, 1, 0, 1};
  const auto r = map_retrieval(items, labels, true);
  // Query a sees b, c, d in that order: relevant only c.
  EXPECT_DOUBLE_EQ(*r.queries[0].ap, 0.5);
  EXPECT_EQ(r.rankings[0].items[0].id, "b");
}

TEST(MapRetrieval, InvariantToScalingAndRotation) {
  Rng rng(12);
  auto items = random_features(12, 6, rng);
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
  const double base = map_retrieval(items, labels).mean_ap;

  Eigen::MatrixXd a(6, 6);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  auto moved = items;
  for (auto& it : moved) it.feature = rng.uniform(0.1, 10.0) * (q * it.feature);
  EXPECT_NEAR(map_retrieval(moved, labels).mean_ap, base, 1e-12);
}

TEST(MapRetrieval, SingletonClassesAreSkipped) {
  Rng rng(2);
  const auto items = random_features(3, 2, rng);
  const auto r = map_retrieval(items, {0, 0, 1});
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_FALSE(r.queries[2].ap.has_value());
  EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
  EXPECT_THROW(map_retrieval(items, {0, 1}), DimensionError);
}
