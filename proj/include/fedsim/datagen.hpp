#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedsim/numerics.hpp"

namespace fedsim {

/// Row-major N x p feature matrix with integer labels in [0, C).
struct Dataset {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::span<const double> row(std::size_t i) const { return {features.data() + i * p, p}; }
  std::vector<std::size_t> class_counts() const;
  std::vector<std::size_t> all_indices() const;
};

using IndexList = std::vector<std::size_t>;

/// m disjoint index lists into a Dataset.
struct Partition {
  std::vector<IndexList> shards;
};

/// C Gaussian clusters with unit covariance whose means have norm `sep`.
/// When C <= p the means are equiangular (pairwise distance also `sep`);
/// otherwise they point in seeded random directions.
Dataset generate_gaussian_classes(std::size_t n_per_class, std::size_t p, std::size_t classes,
                                  double sep, Rng& rng);

/// Stratified hold-out: moves `test_per_class` samples of every class into the
/// test set. Returns {train, test}.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t test_per_class,
                                             Rng& rng);

/// Per-class Dirichlet(beta) allocation across m clients with largest-remainder
/// rounding (ties to the lower client index). Empty shards are repaired by
/// moving one sample from the currently largest shard.
Partition dirichlet_partition(const Dataset& ds, std::size_t m, double beta, Rng& rng);

/// Uniform sample without replacement when batch <= shard size, with
/// replacement otherwise.
IndexList sample_minibatch(std::span<const std::size_t> shard, std::size_t batch, Rng& rng);

/// Average total-variation distance between each shard's label histogram and
/// the global label histogram.
double label_skew_tv(const Dataset& ds, const Partition& part);

/// CSV import. Header row required; every column except `label_column` is a
/// numeric feature, `label_column` holds integer labels 0..C-1.
Dataset load_csv(const std::string& path, const std::string& label_column = "label");

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedsim
