#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedsim/datagen.hpp"

using namespace fedsim;

namespace {

void expect_valid_partition(const Dataset& ds, const Partition& part, std::size_t m) {
  ASSERT_EQ(part.shards.size(), m);
  std::vector<int> seen(ds.n, 0);
  for (const auto& shard : part.shards) {
    ASSERT_FALSE(shard.empty());
    for (std::size_t i : shard) {
      ASSERT_LT(i, ds.n);
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < ds.n; ++i) ASSERT_EQ(seen[i], 1) << "index " << i;
}

std::vector<double> class_mean(const Dataset& ds, int c) {
  std::vector<double> mu(ds.p, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (ds.labels[i] != c) continue;
    ++n;
    for (std::size_t j = 0; j < ds.p; ++j) mu[j] += ds.row(i)[j];
  }
  for (double& v : mu) v /= static_cast<double>(n);
  return mu;
}

}  // namespace

TEST(Gaussian, TwoSeparableClusters) {
  Rng rng(1);
  const Dataset ds = generate_gaussian_classes(10, 2, 2, 4.0, rng);
  EXPECT_EQ(ds.n, 20u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{10, 10}));
  const auto a = class_mean(ds, 0), b = class_mean(ds, 1);
  const double dist = std::hypot(a[0] - b[0], a[1] - b[1]);
  // sample means of 10 unit-variance points: sd of the difference ~ 0.45 per axis
  EXPECT_NEAR(dist, 4.0, 1.5);
}

TEST(Gaussian, LargeSampleMeansMatchSeparation) {
  Rng rng(2);
  const Dataset ds = generate_gaussian_classes(4000, 5, 3, 3.0, rng);
  for (int c = 0; c < 3; ++c) {
    const auto mu = class_mean(ds, c);
    double norm = 0;
    for (double v : mu) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 3.0, 0.1);
  }
  const auto a = class_mean(ds, 0), b = class_mean(ds, 2);
  double d2 = 0;
  for (std::size_t j = 0; j < 5; ++j) d2 += (a[j] - b[j]) * (a[j] - b[j]);
  EXPECT_NEAR(std::sqrt(d2), 3.0, 0.1);
}

TEST(Gaussian, DegenerateSinglePoint) {
  Rng rng(0);
  const Dataset ds = generate_gaussian_classes(1, 1, 1, 1.0, rng);
  EXPECT_EQ(ds.n, 1u);
  EXPECT_EQ(ds.labels[0], 0);
}

TEST(Gaussian, Deterministic) {
  Rng a(5), b(5);
  const Dataset x = generate_gaussian_classes(30, 4, 3, 2.0, a);
  const Dataset y = generate_gaussian_classes(30, 4, 3, 2.0, b);
  EXPECT_EQ(x.features, y.features);
  EXPECT_EQ(x.labels, y.labels);
}

TEST(Gaussian, MoreClassesThanFeatures) {
  Rng rng(4);
  const Dataset ds = generate_gaussian_classes(20, 2, 6, 3.0, rng);
  EXPECT_EQ(ds.classes, 6u);
  for (auto c : ds.class_counts()) EXPECT_EQ(c, 20u);
}

TEST(Gaussian, InvalidSizes) {
  Rng rng(0);
  EXPECT_THROW(generate_gaussian_classes(0, 2, 2, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(generate_gaussian_classes(5, 0, 2, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(generate_gaussian_classes(5, 2, 2, 0.0, rng), std::invalid_argument);
}

TEST(Split, StratifiedHoldout) {
  Rng rng(3);
  const Dataset ds = generate_gaussian_classes(50, 3, 4, 2.0, rng);
  auto [train, test] = split_train_test(ds, 10, rng);
  EXPECT_EQ(train.n, 160u);
  EXPECT_EQ(test.n, 40u);
  for (auto c : test.class_counts()) EXPECT_EQ(c, 10u);
}

TEST(Dirichlet, SingleClientGetsEverything) {
  Rng rng(1);
  const Dataset ds = generate_gaussian_classes(17, 2, 3, 2.0, rng);
  for (double beta : {0.01, 0.6, 100.0}) {
    const Partition p = dirichlet_partition(ds, 1, beta, rng);
    ASSERT_EQ(p.shards.size(), 1u);
    EXPECT_EQ(p.shards[0], ds.all_indices());
  }
}

TEST(Dirichlet, HugeBetaIsBalanced) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const Dataset ds = generate_gaussian_classes(100, 2, 3, 2.0, rng);
    const Partition p = dirichlet_partition(ds, 4, 1e6, rng);
    for (const auto& shard : p.shards) {
      std::vector<int> counts(3, 0);
      for (std::size_t i : shard) ++counts[ds.labels[i]];
      for (int c : counts) EXPECT_LE(std::abs(c - 25), 1) << "seed " << seed;
    }
  }
}

TEST(Dirichlet, HundredClientsFiftyThousandSamples) {
  Rng rng(6);
  const Dataset ds = generate_gaussian_classes(5000, 2, 10, 2.0, rng);
  const Partition p = dirichlet_partition(ds, 100, 0.6, rng);
  expect_valid_partition(ds, p, 100);
}

TEST(Dirichlet, DisjointCoverageOverThousandTriples) {
  Rng meta(2024);
  Rng data_rng(1);
  const Dataset ds = generate_gaussian_classes(40, 2, 5, 2.0, data_rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + meta.below(40);
    const double beta = std::exp(std::log(0.01) + meta.uniform() * (std::log(100.0) - std::log(0.01)));
    Rng rng(meta.next_u64());
    const Partition p = dirichlet_partition(ds, m, beta, rng);
    expect_valid_partition(ds, p, m);
    if (HasFatalFailure()) FAIL() << "trial " << trial << " m=" << m << " beta=" << beta;
  }
}

TEST(Dirichlet, HeterogeneityDecreasesWithBeta) {
  const double betas[] = {0.1, 0.6, 10.0};
  double tv[3] = {0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng data_rng(seed);
    const Dataset ds = generate_gaussian_classes(200, 2, 5, 2.0, data_rng);
    for (int k = 0; k < 3; ++k) {
      Rng rng = Rng::stream(seed, StreamTag::kPartition, k);
      tv[k] += label_skew_tv(ds, dirichlet_partition(ds, 20, betas[k], rng)) / 10.0;
    }
  }
  EXPECT_GE(tv[0], tv[1]);
  EXPECT_GE(tv[1], tv[2]);
}

TEST(Dirichlet, Errors) {
  Rng rng(1);
  const Dataset ds = generate_gaussian_classes(2, 2, 2, 2.0, rng);
  EXPECT_THROW(dirichlet_partition(ds, 5, 0.6, rng), DataError);
  EXPECT_THROW(dirichlet_partition(ds, 0, 0.6, rng), std::invalid_argument);
  EXPECT_THROW(dirichlet_partition(ds, 2, 0.0, rng), std::invalid_argument);
}

TEST(Dirichlet, Deterministic) {
  Rng d(3);
  const Dataset ds = generate_gaussian_classes(50, 2, 4, 2.0, d);
  Rng a(8), b(8);
  EXPECT_EQ(dirichlet_partition(ds, 7, 0.6, a).shards, dirichlet_partition(ds, 7, 0.6, b).shards);
}

TEST(Minibatch, FullBatchIsPermutation) {
  const IndexList shard{4, 9, 11, 20, 21};
  Rng rng(1);
  IndexList b = sample_minibatch(shard, shard.size(), rng);
  std::sort(b.begin(), b.end());
  EXPECT_EQ(b, shard);
}

TEST(Minibatch, SingleElement) {
  const IndexList shard{7};
  Rng rng(1);
  EXPECT_EQ(sample_minibatch(shard, 1, rng), (IndexList{7}));
}

TEST(Minibatch, DeterministicAndWithoutReplacement) {
  IndexList shard(30);
  std::iota(shard.begin(), shard.end(), 100);
  Rng a(5), b(5);
  const IndexList x = sample_minibatch(shard, 12, a);
  EXPECT_EQ(x, sample_minibatch(shard, 12, b));
  EXPECT_EQ(std::set<std::size_t>(x.begin(), x.end()).size(), 12u);
}

TEST(Minibatch, OversizedBatchSamplesWithReplacement) {
  const IndexList shard{1, 2};
  Rng rng(5);
  const IndexList x = sample_minibatch(shard, 10, rng);
  EXPECT_EQ(x.size(), 10u);
  for (auto i : x) EXPECT_TRUE(i == 1 || i == 2);
}

TEST(Minibatch, Errors) {
  Rng rng(1);
  EXPECT_THROW(sample_minibatch(IndexList{}, 3, rng), DataError);
  EXPECT_THROW(sample_minibatch(IndexList{1}, 0, rng), std::invalid_argument);
}

TEST(Csv, LoadsAndValidates) {
  const auto dir = std::filesystem::temp_directory_path() / "fedsim_csv_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.csv";
  std::ofstream(good) << "a,label,b\n1.5,0,2\n-1,1,0.25\n3,1,4\n";
  const Dataset ds = load_csv(good.string());
  EXPECT_EQ(ds.n, 3u);
  EXPECT_EQ(ds.p, 2u);
  EXPECT_EQ(ds.classes, 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(ds.row(1)[1], 0.25);

  const auto bad = dir / "bad.csv";
  std::ofstream(bad) << "a,label\n1,0\nx,1\n";
  try {
    load_csv(bad.string());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  const auto missing_class = dir / "gap.csv";
  std::ofstream(missing_class) << "a,label\n1,0\n2,2\n";
  EXPECT_THROW(load_csv(missing_class.string()), DataError);
  const auto nolabel = dir / "nolabel.csv";
  std::ofstream(nolabel) << "a,b\n1,0\n";
  EXPECT_THROW(load_csv(nolabel.string()), DataError);
}
