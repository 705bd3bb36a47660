#include "fedsim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedsim {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<std::size_t> Dataset::all_indices() const {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

namespace {

// Rows of the Cholesky factor of sep^2 * (I + J) / 2: unit-norm-times-sep
// vectors with pairwise 60 degree angles.
std::vector<std::vector<double>> equiangular_means(std::size_t classes, double sep) {
  const std::size_t c = classes;
  std::vector<std::vector<double>> gram(c, std::vector<double>(c, 0.5));
  for (std::size_t i = 0; i < c; ++i) gram[i][i] = 1.0;
  std::vector<std::vector<double>> l(c, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = gram[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      l[i][j] = (i == j) ? std::sqrt(s) : s / l[j][j];
    }
  }
  for (auto& row : l)
    for (double& v : row) v *= sep;
  return l;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Dataset generate_gaussian_classes(std::size_t n_per_class, std::size_t p, std::size_t classes,
                                  double sep, Rng& rng) {
  if (n_per_class == 0 || p == 0 || classes == 0) {
    throw std::invalid_argument("generate_gaussian_classes: sizes must be positive");
  }
  if (!(sep > 0.0) || !std::isfinite(sep)) {
    throw std::invalid_argument("generate_gaussian_classes: sep must be positive");
  }
  std::vector<std::vector<double>> means(classes, std::vector<double>(p, 0.0));
  if (classes <= p) {
    const auto l = equiangular_means(classes, sep);
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t k = 0; k < classes; ++k) means[c][k] = l[c][k];
  } else {
    for (auto& mean : means) {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& v : mean) {
          v = rng.normal();
          norm += v * v;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (double& v : mean) v *= sep / norm;
    }
  }

  Dataset ds;
  ds.n = n_per_class * classes;
  ds.p = p;
  ds.classes = classes;
  ds.features.resize(ds.n * p);
  ds.labels.resize(ds.n);
  std::size_t i = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < n_per_class; ++s, ++i) {
      ds.labels[i] = static_cast<int>(c);
      for (std::size_t k = 0; k < p; ++k) ds.features[i * p + k] = means[c][k] + rng.normal();
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t test_per_class,
                                             Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<bool> is_test(ds.n, false);
  for (auto& members : by_class) {
    if (members.size() <= test_per_class) {
      throw DataError("split_train_test: a class has too few samples for the hold-out");
    }
    shuffle(members, rng);
    for (std::size_t k = 0; k < test_per_class; ++k) is_test[members[k]] = true;
  }
  auto make = [&](bool want_test) {
    Dataset out;
    out.p = ds.p;
    out.classes = ds.classes;
    for (std::size_t i = 0; i < ds.n; ++i) {
      if (is_test[i] != want_test) continue;
      auto r = ds.row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.labels.push_back(ds.labels[i]);
    }
    out.n = out.labels.size();
    return out;
  };
  return {make(false), make(true)};
}

Partition dirichlet_partition(const Dataset& ds, std::size_t m, double beta, Rng& rng) {
  if (m == 0) throw std::invalid_argument("dirichlet_partition: m must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("dirichlet_partition: beta must be positive");
  }
  if (ds.n < m) throw DataError("dirichlet_partition: fewer samples than clients");

  Partition part;
  part.shards.resize(m);
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<double> props(m);
  std::vector<std::size_t> counts(m);
  std::vector<std::size_t> order(m);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    shuffle(members, rng);
    double total = 0.0;
    do {
      total = 0.0;
      for (double& q : props) {
        q = rng.gamma(beta);
        total += q;
      }
    } while (!(total > 0.0));
    const double n_c = static_cast<double>(members.size());
    std::size_t assigned = 0;
    std::vector<double> remainder(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double exact = n_c * props[j] / total;
      counts[j] = static_cast<std::size_t>(std::floor(exact));
      remainder[j] = exact - static_cast<double>(counts[j]);
      assigned += counts[j];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < members.size(); ++k, ++assigned) ++counts[order[k % m]];

    std::size_t pos = 0;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < counts[j]; ++k) part.shards[j].push_back(members[pos++]);
    }
  }

  // Empty-shard repair.
  for (std::size_t j = 0; j < m; ++j) {
    if (!part.shards[j].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t k = 1; k < m; ++k)
      if (part.shards[k].size() > part.shards[largest].size()) largest = k;
    part.shards[j].push_back(part.shards[largest].back());
    part.shards[largest].pop_back();
  }
  for (auto& shard : part.shards) std::sort(shard.begin(), shard.end());
  return part;
}

IndexList sample_minibatch(std::span<const std::size_t> shard, std::size_t batch, Rng& rng) {
  if (shard.empty()) throw DataError("sample_minibatch: empty shard");
  if (batch == 0) throw std::invalid_argument("sample_minibatch: batch must be >= 1");
  IndexList out;
  out.reserve(batch);
  if (batch <= shard.size()) {
    IndexList pool(shard.begin(), shard.end());
    for (std::size_t i = 0; i < batch; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < batch; ++i) out.push_back(shard[rng.below(shard.size())]);
  }
  return out;
}

double label_skew_tv(const Dataset& ds, const Partition& part) {
  const auto global = ds.class_counts();
  double acc = 0.0;
  for (const auto& shard : part.shards) {
    std::vector<double> local(ds.classes, 0.0);
    for (std::size_t i : shard) local[static_cast<std::size_t>(ds.labels[i])] += 1.0;
    double tv = 0.0;
    for (std::size_t c = 0; c < ds.classes; ++c) {
      tv += std::abs(local[c] / static_cast<double>(shard.size()) -
                     static_cast<double>(global[c]) / static_cast<double>(ds.n));
    }
    acc += 0.5 * tv;
  }
  return acc / static_cast<double>(part.shards.size());
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: " + path + " is empty");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  const auto header = split(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw DataError("load_csv: " + path + " has no '" + label_column + "' column");
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

  Dataset ds;
  ds.p = header.size() - 1;
  if (ds.p == 0) throw DataError("load_csv: " + path + " has no feature columns");
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        if (k == label_pos) {
          const int y = std::stoi(cells[k], &used);
          if (used != cells[k].size() || y < 0) throw std::invalid_argument("label");
          ds.labels.push_back(y);
          max_label = std::max(max_label, y);
        } else {
          const double v = std::stod(cells[k], &used);
          if (used != cells[k].size() || !std::isfinite(v)) throw std::invalid_argument("value");
          ds.features.push_back(v);
        }
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + cells[k] +
                        "' in column '" + header[k] + "'");
      }
    }
  }
  ds.n = ds.labels.size();
  if (ds.n == 0) throw DataError("load_csv: " + path + " has no data rows");
  ds.classes = static_cast<std::size_t>(max_label + 1);
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw DataError("load_csv: class " + std::to_string(c) + " never appears in " + path);
    }
  }
  return ds;
}

}  // namespace fedsim
