#include <gtest/gtest.h>

#include <random>
#include <set>

#include "fairmetric/constraints.hpp"
#include "test_util.hpp"

using namespace fairmetric;

namespace {

std::vector<std::tuple<Index, Index, Index>> as_tuples(const TripletSet& s) {
  std::vector<std::tuple<Index, Index, Index>> out;
  for (const auto& t : s.triplets) out.emplace_back(t.a, t.b, t.c);
  return out;
}

}  // namespace

TEST(BuildPairs, SmallExample) {
  const auto p = build_pairs(std::vector<int>{1, 1, 2});
  ASSERT_EQ(p.similar.size(), 1u);
  EXPECT_EQ(p.similar[0], IndexPair(0, 1));
  EXPECT_EQ(p.dissimilar, (std::vector<IndexPair>{{0, 2}, {1, 2}}));
}

TEST(BuildPairs, AllEqual) {
  const auto p = build_pairs(std::vector<int>{3, 3, 3, 3});
  EXPECT_EQ(p.similar.size(), 6u);
  EXPECT_TRUE(p.dissimilar.empty());
}

TEST(BuildPairs, PartitionMatchesBruteForce) {
  std::mt19937_64 rng(4);
  const auto y = testutil::random_labels(rng, 50, 1, 5);
  const auto p = build_pairs(y);
  const auto [same, other] = oracle::pair_counts(y);
  EXPECT_EQ(p.similar.size(), same);
  EXPECT_EQ(p.dissimilar.size(), other);
  std::set<IndexPair> all;
  for (const auto& q : p.similar) {
    EXPECT_LT(q.first, q.second);
    EXPECT_EQ(y[q.first], y[q.second]);
    all.insert(q);
  }
  for (const auto& q : p.dissimilar) {
    EXPECT_LT(q.first, q.second);
    EXPECT_NE(y[q.first], y[q.second]);
    all.insert(q);
  }
  EXPECT_EQ(all.size(), 50u * 49u / 2u);
}

TEST(BuildTriplets, LiteralExample) {
  const auto s = build_triplets(std::vector<int>{2, 2, 4}, 1.0, TripletVariant::literal);
  EXPECT_EQ(as_tuples(s), (std::vector<std::tuple<Index, Index, Index>>{{0, 1, 2}, {1, 0, 2}}));
  EXPECT_EQ(s.sigma, 1.0);
}

TEST(BuildTriplets, LargeSigmaGivesEmptySet) {
  EXPECT_TRUE(build_triplets(std::vector<int>{1, 2, 3, 4, 5}, 5.0).empty());
}

TEST(BuildTriplets, SymmetricExample) {
  const auto s = build_triplets(std::vector<int>{1, 2, 5}, 0.0, TripletVariant::symmetric);
  const auto t = as_tuples(s);
  EXPECT_NE(std::find(t.begin(), t.end(), std::make_tuple(Index{0}, Index{1}, Index{2})), t.end());
}

TEST(BuildTriplets, LiteralSigmaZeroRequiresStrictOrderOfBAndC) {
  std::mt19937_64 rng(8);
  const auto y = testutil::random_labels(rng, 15, 1, 5);
  for (const auto& t : build_triplets(y, 0.0).triplets) EXPECT_LT(y[t.b], y[t.c]);
}

TEST(BuildTriplets, OracleEquivalenceOnRandomInstances) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(3, 20);
  std::uniform_int_distribution<int> sig(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto y = testutil::random_labels(rng, static_cast<std::size_t>(size(rng)), 1, 10);
    const double sigma = sig(rng) * 0.75;
    for (bool symmetric : {false, true}) {
      const auto variant = symmetric ? TripletVariant::symmetric : TripletVariant::literal;
      const auto s = build_triplets(y, sigma, variant);
      EXPECT_EQ(as_tuples(s), oracle::triplets(y, sigma, symmetric));
      EXPECT_EQ(count_invalid_triplets(s, y), 0u);
      EXPECT_TRUE(std::is_sorted(s.triplets.begin(), s.triplets.end()));
    }
  }
}

TEST(BuildTriplets, TooFewInstances) {
  EXPECT_THROW(build_triplets(std::vector<int>{1, 2}, 0.0), ConfigError);
  EXPECT_THROW(build_triplets(std::vector<int>{1, 2, 3}, -1.0), ConfigError);
}

TEST(SubsampleTriplets, Contract) {
  std::mt19937_64 rng(1);
  const auto y = testutil::random_labels(rng, 12, 1, 5);
  const auto full = build_triplets(y, 0.0);
  ASSERT_GT(full.size(), 10u);

  const auto all = subsample_triplets(full, full.size() + 5, 3);
  EXPECT_EQ(all.triplets, full.triplets);

  const auto one = subsample_triplets(full, 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NE(std::find(full.triplets.begin(), full.triplets.end(), one.triplets[0]), full.triplets.end());

  const auto a = subsample_triplets(full, 10, 77);
  const auto b = subsample_triplets(full, 10, 77);
  EXPECT_EQ(a.triplets, b.triplets);
  EXPECT_EQ(std::set<Triplet>(a.triplets.begin(), a.triplets.end()).size(), 10u);
  EXPECT_EQ(a.sigma, full.sigma);
  EXPECT_THROW(subsample_triplets(full, 0, 1), ConfigError);
}

TEST(SubsampleTriplets, RoughlyUniform) {
  TripletSet s;
  for (Index i = 0; i < 10; ++i) s.triplets.push_back({i, i + 1, i + 2});
  std::vector<int> hits(10, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    for (const auto& t : subsample_triplets(s, 3, seed).triplets) ++hits[t.a];
  }
  for (int h : hits) EXPECT_NEAR(h, 600, 90);
}
