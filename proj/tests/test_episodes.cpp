#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "protonet/episodes.hpp"
#include "protonet/error.hpp"
#include "test_support.hpp"

using namespace protonet;

namespace {

// Dataset whose example values encode (class, index) so episodes can be
// checked against their recorded indices.
LabeledDataset tagged_dataset(std::size_t classes, std::size_t per_class) {
  LabeledDataset d{{2}, {}};
  for (std::size_t c = 0; c < classes; ++c) {
    ClassRecord rec{"class" + std::to_string(c), {}};
    for (std::size_t i = 0; i < per_class; ++i)
      rec.examples.push_back({static_cast<double>(c), static_cast<double>(i)});
    d.classes.push_back(std::move(rec));
  }
  return d;
}

}  // namespace

TEST(RandomSample, FullDrawIsPermutation) {
  Rng rng(1);
  auto s = random_sample(7, 7, rng);
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(s[i], i);
}

TEST(RandomSample, EmptyDraw) {
  Rng rng(2);
  EXPECT_TRUE(random_sample(5, 0, rng).empty());
  EXPECT_TRUE(random_sample(0, 0, rng).empty());
}

TEST(RandomSample, TooManyIsInsufficientData) {
  Rng rng(3);
  EXPECT_THROW(random_sample(3, 4, rng), InsufficientDataError);
}

TEST(RandomSample, PoolOverloadReturnsElements) {
  Rng rng(4);
  const std::vector<std::string> pool{"a", "b", "c"};
  auto s = random_sample(std::span<const std::string>(pool), 3, rng);
  std::sort(s.begin(), s.end());
  EXPECT_EQ(s, pool);
}

TEST(RandomSample, PairsAreUniform) {
  Rng rng(5);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    auto s = random_sample(5, 2, rng);
    ASSERT_NE(s[0], s[1]);
    counts[{std::min(s[0], s[1]), std::max(s[0], s[1])}]++;
  }
  EXPECT_EQ(counts.size(), 10u);
  const double p = 0.1, sd = std::sqrt(draws * p * (1 - p));
  for (const auto& [pair, n] : counts) EXPECT_NEAR(n, draws * p, 4 * sd);
}

TEST(RandomSample, DeterministicForSeed) {
  Rng a(6), b(6);
  EXPECT_EQ(random_sample(100, 10, a), random_sample(100, 10, b));
}

TEST(SampleEpisode, ExactSizeDatasetUsesEveryExampleOnce) {
  const auto data = tagged_dataset(3, 4);
  Rng rng(7);
  const auto ep = sample_episode(data, {3, 1, 3}, rng);
  std::set<std::pair<double, double>> seen;
  for (std::size_t r = 0; r < 3; ++r) seen.insert({ep.support.at(r, 0), ep.support.at(r, 1)});
  for (std::size_t r = 0; r < 9; ++r) seen.insert({ep.query.at(r, 0), ep.query.at(r, 1)});
  EXPECT_EQ(seen.size(), 12u);
}

TEST(SampleEpisode, SameSeedSameEpisode) {
  const auto data = tagged_dataset(10, 8);
  Rng a(8), b(8);
  const auto e1 = sample_episode(data, {4, 2, 3}, a);
  const auto e2 = sample_episode(data, {4, 2, 3}, b);
  EXPECT_EQ(e1.class_ids, e2.class_ids);
  EXPECT_EQ(e1.support_examples, e2.support_examples);
  EXPECT_EQ(e1.query_examples, e2.query_examples);
  EXPECT_TRUE(std::equal(e1.query.data().begin(), e1.query.data().end(), e2.query.data().begin()));
}

TEST(SampleEpisode, DisjointAndCorrectlySizedOverManyEpisodes) {
  const auto data = tagged_dataset(12, 9);
  Rng rng(9);
  const EpisodeSpec spec{5, 3, 4};
  for (int e = 0; e < 1000; ++e) {
    const auto ep = sample_episode(data, spec, rng);
    ASSERT_EQ(ep.class_ids.size(), 5u);
    ASSERT_EQ(std::set<std::string>(ep.class_ids.begin(), ep.class_ids.end()).size(), 5u);
    ASSERT_EQ(ep.support.shape(), (Shape{15, 2}));
    ASSERT_EQ(ep.query.shape(), (Shape{20, 2}));
    for (std::size_t k = 0; k < 5; ++k) {
      // Rebuild S_k and Q_k from the tensors themselves.
      std::set<double> s, q;
      for (std::size_t i = 0; i < 3; ++i) {
        const auto row = ep.support.row(k * 3 + i);
        ASSERT_EQ(data.classes[ep.class_indices[k]].id, "class" + std::to_string(static_cast<int>(row[0])));
        ASSERT_EQ(ep.support_labels[k * 3 + i], k);
        s.insert(row[1]);
      }
      for (std::size_t i = 0; i < 4; ++i) {
        const auto row = ep.query.row(k * 4 + i);
        ASSERT_EQ(static_cast<std::size_t>(row[0]), ep.class_indices[k]);
        ASSERT_EQ(ep.query_labels[k * 4 + i], k);
        q.insert(row[1]);
      }
      ASSERT_EQ(s.size(), 3u);
      ASSERT_EQ(q.size(), 4u);
      for (double v : s) ASSERT_EQ(q.count(v), 0u);
    }
  }
}

TEST(SampleEpisode, ClassCoverageIsFair) {
  const auto data = tagged_dataset(10, 3);
  Rng rng(10);
  std::vector<int> counts(10, 0);
  const int n = 5000;
  for (int e = 0; e < n; ++e)
    for (auto c : sample_episode(data, {3, 1, 1}, rng).class_indices) ++counts[c];
  const double p = 0.3, sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, n * p, 4 * sd);
}

TEST(SampleEpisode, ShortClassIsNamed) {
  auto data = tagged_dataset(3, 5);
  data.classes[1].examples.resize(2);
  Rng rng(11);
  try {
    sample_episode(data, {3, 2, 2}, rng);
    FAIL() << "expected InsufficientDataError";
  } catch (const InsufficientDataError& e) {
    EXPECT_NE(std::string(e.what()).find("class1"), std::string::npos);
  }
}

TEST(SampleEpisode, TooManyWays) {
  const auto data = tagged_dataset(3, 5);
  Rng rng(12);
  EXPECT_THROW(sample_episode(data, {4, 1, 1}, rng), InsufficientDataError);
}

TEST(SampleEpisode, SpecCountsMustBePositive) {
  EXPECT_THROW((EpisodeSpec{0, 1, 1}).validate(), ContractError);
  EXPECT_THROW((EpisodeSpec{2, 0, 1}).validate(), ContractError);
  EXPECT_THROW((EpisodeSpec{2, 1, 0}).validate(), ContractError);
  EXPECT_NO_THROW((EpisodeSpec{2, 1, 1}).validate());
}

TEST(SampleEpisode, QueryOnlyEpisode) {
  const auto data = tagged_dataset(6, 4);
  Rng rng(13);
  const auto ep = sample_query_episode(data, 3, 4, rng);
  EXPECT_EQ(ep.n_support, 0u);
  EXPECT_FALSE(ep.support.defined());
  EXPECT_EQ(ep.query.shape(), (Shape{12, 2}));
  EXPECT_EQ(ep.query_labels.size(), 12u);
}

TEST(LabeledDataset, ValidateRejectsDuplicatesAndBadSizes) {
  auto d = tagged_dataset(2, 2);
  EXPECT_NO_THROW(d.validate());
  d.classes[1].id = d.classes[0].id;
  EXPECT_THROW(d.validate(), ContractError);
  auto d2 = tagged_dataset(2, 2);
  d2.classes[0].examples[0].push_back(1.0);
  EXPECT_THROW(d2.validate(), ContractError);
}
