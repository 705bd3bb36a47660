#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <omp.h>

#include "fedsim/diagnostics.hpp"
#include "fedsim/objective.hpp"

using namespace fedsim;

namespace {

Dataset small_data(std::uint64_t seed, std::size_t per_class, std::size_t p, std::size_t c) {
  Rng rng(seed);
  return generate_gaussian_classes(per_class, p, c, 2.0, rng);
}

ParamVector random_point(std::size_t d, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ParamVector x(d);
  for (double& v : x) v = scale * rng.normal();
  return x;
}

// Independent MLP forward pass written directly from the definition.
double reference_mlp_loss(const Model& m, const ParamVector& x, const Dataset& d,
                          const std::vector<std::size_t>& idx) {
  const std::size_t h = m.hidden, p = m.p, c = m.classes;
  double total = 0.0;
  for (std::size_t i : idx) {
    std::vector<double> a(h);
    for (std::size_t r = 0; r < h; ++r) {
      double z = x[h * p + r];
      for (std::size_t j = 0; j < p; ++j) z += x[r * p + j] * d.features[i * p + j];
      a[r] = activation_eval(m.activation, z, m.smu_mu);
    }
    std::vector<double> logit(c);
    const std::size_t w2 = h * p + h, b2 = w2 + c * h;
    for (std::size_t k = 0; k < c; ++k) {
      double z = x[b2 + k];
      for (std::size_t r = 0; r < h; ++r) z += x[w2 + k * h + r] * a[r];
      logit[k] = z;
    }
    double mx = logit[0];
    for (double v : logit) mx = std::max(mx, v);
    double se = 0.0;
    for (double v : logit) se += std::exp(v - mx);
    total += std::log(se) + mx - logit[d.labels[i]];
  }
  return total / static_cast<double>(idx.size()) + 0.5 * m.weight_decay * l2_norm_sq(x);
}

double exact_gelu_tanh_derivative_integral(double u) {
  // Composite Simpson on the analytic derivative from 0 to u.
  const int n = 20000;
  const double h = u / n;
  double s = activation_deriv(Activation::kGelu, 0.0) + activation_deriv(Activation::kGelu, u);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * activation_deriv(Activation::kGelu, k * h);
  return s * h / 3.0;
}

}  // namespace

TEST(Model, Dimensions) {
  EXPECT_EQ((Model{ModelKind::kSoftmaxLinear, 20, 5}.dim()), 105u);
  EXPECT_EQ((Model{ModelKind::kMlp1, 4, 3, 6}.dim()), 6u * 4 + 6 + 3 * 6 + 3);
  EXPECT_EQ((Model{ModelKind::kQuadratic, 7}.dim()), 7u);
}

TEST(Loss, SoftmaxAtZerosIsLogC) {
  const Dataset d = small_data(1, 5, 3, 4);
  const Model m{ModelKind::kSoftmaxLinear, 3, 4};
  const auto idx = d.all_indices();
  EXPECT_NEAR(loss(m, ParamVector::zeros(m.dim()), d, idx), std::log(4.0), 1e-14);
}

TEST(Loss, QuadraticIdentity) {
  const QuadraticSpec q = QuadraticSpec::identity(2);
  EXPECT_DOUBLE_EQ(quadratic_loss(q, {3, 4}), 12.5);
  EXPECT_EQ(quadratic_grad(q, {3, 4}), (ParamVector{3, 4}));
}

TEST(Loss, MlpMatchesReference) {
  const Dataset d = small_data(2, 6, 4, 3);
  for (Activation a : {Activation::kRelu, Activation::kGelu, Activation::kSmu}) {
    Model m{ModelKind::kMlp1, 4, 3, 5, a, 25.0, 0.003};
    const ParamVector x = random_point(m.dim(), 3);
    const auto idx = d.all_indices();
    EXPECT_NEAR(loss(m, x, d, idx), reference_mlp_loss(m, x, d, idx), 1e-12);
  }
}

TEST(Loss, NonNegativeWithRidge) {
  const Dataset d = small_data(4, 6, 4, 3);
  Model m{ModelKind::kMlp1, 4, 3, 5, Activation::kGelu, 25.0, 0.01};
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_GE(loss(m, random_point(m.dim(), s, 3.0), d, d.all_indices()), 0.0);
}

TEST(Loss, Errors) {
  Dataset d = small_data(1, 3, 2, 2);
  const Model m{ModelKind::kSoftmaxLinear, 2, 2};
  EXPECT_THROW(loss(m, ParamVector::zeros(5), d, d.all_indices()), DimensionError);
  EXPECT_THROW(loss(m, ParamVector::zeros(m.dim()), d, std::vector<std::size_t>{}), std::invalid_argument);
  d.labels[0] = 7;
  EXPECT_THROW(loss(m, ParamVector::zeros(m.dim()), d, d.all_indices()), std::out_of_range);
}

TEST(Grad, SoftmaxAtZerosOneSample) {
  Dataset d;
  d.n = 1;
  d.p = 1;
  d.classes = 2;
  d.features = {2.0};
  d.labels = {1};
  const Model m{ModelKind::kSoftmaxLinear, 1, 2};
  const ParamVector g = grad(m, ParamVector::zeros(m.dim()), d, std::vector<std::size_t>{0});
  // logits gradient = uniform - onehot = [0.5, -0.5]; W gradient = x_feat * that.
  EXPECT_EQ(g, (ParamVector{1.0, -1.0, 0.5, -0.5}));
}

TEST(Grad, FiniteDifferenceSuite) {
  for (const auto& r : run_gradcheck()) EXPECT_TRUE(r.passed) << format_check(r);
}

TEST(Grad, UnbiasedOverDisjointBatches) {
  const Dataset d = small_data(5, 10, 3, 4);  // 40 samples
  const Model m{ModelKind::kMlp1, 3, 4, 4, Activation::kGelu, 25.0, 0.01};
  const ParamVector x = random_point(m.dim(), 6);
  const auto all = d.all_indices();
  const ParamVector full = grad(m, x, d, all);
  ParamVector mean(m.dim());
  for (std::size_t b = 0; b < 4; ++b) {
    std::vector<std::size_t> idx(all.begin() + b * 10, all.begin() + (b + 1) * 10);
    const ParamVector g = grad(m, x, d, idx);
    for (std::size_t j = 0; j < g.size(); ++j) mean[j] += g[j] / 4.0;
  }
  for (std::size_t j = 0; j < full.size(); ++j) EXPECT_NEAR(mean[j], full[j], 1e-13);
}

TEST(Grad, QuadraticSmoothnessWitness) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const QuadraticSpec q = QuadraticSpec::random(5, 0.2, 3.0, 1.0, rng);
    const double L = q.max_eigenvalue();
    EXPECT_NEAR(L, 3.0, 1e-6);
    ParamVector x(5), y(5);
    for (std::size_t j = 0; j < 5; ++j) {
      x[j] = rng.normal();
      y[j] = rng.normal();
    }
    const double lhs = std::sqrt(l2_norm_sq(subtract(quadratic_grad(q, x), quadratic_grad(q, y))));
    EXPECT_LE(lhs, L * std::sqrt(l2_norm_sq(subtract(x, y))) * (1 + 1e-9));
  }
}

TEST(Activation, Values) {
  EXPECT_EQ(activation_eval(Activation::kRelu, -1.0), 0.0);
  EXPECT_EQ(activation_eval(Activation::kRelu, 2.0), 2.0);
  for (double mu : {0.5, 1.0, 25.0, 1000.0}) EXPECT_EQ(activation_eval(Activation::kSmu, 0.0, mu), 0.0);
  // SMU approaches ReLU for large mu.
  EXPECT_NEAR(activation_eval(Activation::kSmu, 1.0, 100.0), 1.0, 1e-12);
  EXPECT_NEAR(activation_eval(Activation::kSmu, -1.0, 100.0), 0.0, 1e-12);
}

TEST(Activation, GeluMatchesIntegratedDerivative) {
  for (double u : {-2.0, 0.0, 1.0, 3.0}) {
    EXPECT_NEAR(activation_eval(Activation::kGelu, u), exact_gelu_tanh_derivative_integral(u), 1e-6) << u;
  }
  // Tanh form is an approximation of x * Phi(x); they agree to ~1e-3.
  for (double u : {-2.0, 1.0, 3.0}) {
    EXPECT_NEAR(activation_eval(Activation::kGelu, u), 0.5 * u * std::erfc(-u / std::sqrt(2.0)), 2e-3);
  }
}

TEST(Activation, DerivativesMatchFiniteDifferences) {
  for (Activation a : {Activation::kGelu, Activation::kSmu, Activation::kRelu}) {
    for (double u : {-2.3, -0.7, 0.01, 0.4, 1.9}) {
      const double h = 1e-6;
      const double fd = (activation_eval(a, u + h, 3.0) - activation_eval(a, u - h, 3.0)) / (2 * h);
      EXPECT_NEAR(activation_deriv(a, u, 3.0), fd, 1e-7);
    }
  }
}

TEST(FullGradNorm, ZeroAtQuadraticMinimizer) {
  QuadraticSpec q{2, {2.0, 0.0, 0.0, 4.0}, {1.0, 2.0}};
  EXPECT_NEAR(l2_norm_sq(quadratic_grad(q, {0.5, 0.5})), 0.0, 1e-24);
}

TEST(FullGradNorm, EqualsNormOfFullGrad) {
  const Dataset d = small_data(9, 30, 3, 3);
  const Model m{ModelKind::kSoftmaxLinear, 3, 3, 0, Activation::kGelu, 25.0, 0.001};
  const ParamVector x = random_point(m.dim(), 2);
  EXPECT_EQ(full_grad_norm(m, x, d), l2_norm_sq(full_grad(m, x, d)));
  EXPECT_NEAR(full_grad_norm(m, x, d), l2_norm_sq(grad(m, x, d, d.all_indices())), 1e-12);
}

TEST(FullGradNorm, DecreasesAlongGradientDescent) {
  Rng rng(10);
  const QuadraticSpec q = QuadraticSpec::random(6, 0.1, 1.0, 1.0, rng);
  ParamVector x(6, 3.0);
  double prev = l2_norm_sq(quadratic_grad(q, x));
  for (int k = 0; k < 50; ++k) {
    x = axpy(-0.5, quadratic_grad(q, x), x);
    const double now = l2_norm_sq(quadratic_grad(q, x));
    EXPECT_LE(now, prev);
    prev = now;
  }
}

TEST(FullKernels, ParallelMatchesSerialAndIsThreadInvariant) {
  const Dataset d = small_data(12, 700, 6, 4);  // 2800 samples, several blocks
  const Model m{ModelKind::kMlp1, 6, 4, 7, Activation::kGelu, 25.0, 0.001};
  const ParamVector x = random_point(m.dim(), 13);
  omp_set_num_threads(1);
  const double l1 = full_loss(m, x, d);
  const ParamVector g1 = full_grad(m, x, d);
  const double a1 = full_accuracy(m, x, d);
  omp_set_num_threads(4);
  const double l4 = full_loss(m, x, d);
  const ParamVector g4 = full_grad(m, x, d);
  EXPECT_TRUE(bitwise_equal(ParamVector{l1}, ParamVector{l4}));
  EXPECT_TRUE(bitwise_equal(g1, g4));
  EXPECT_EQ(a1, full_accuracy(m, x, d));
  EXPECT_NEAR(l1, full_loss_serial(m, x, d), 1e-12);
  const ParamVector gs = full_grad_serial(m, x, d);
  for (std::size_t j = 0; j < gs.size(); ++j) EXPECT_NEAR(g1[j], gs[j], 1e-12);
  EXPECT_NEAR(l1, loss(m, x, d, d.all_indices()), 1e-12);
}

TEST(Init, SeededAndScaled) {
  const Model m{ModelKind::kMlp1, 50, 3, 40};
  Rng a(1), b(1);
  const ParamVector x = init_params(m, a);
  EXPECT_EQ(x, init_params(m, b));
  double s2 = 0;
  for (std::size_t j = 0; j < 40 * 50; ++j) s2 += x[j] * x[j];
  EXPECT_NEAR(s2 / (40 * 50), 1.0 / 50, 0.003);
  for (std::size_t j = 40 * 50; j < 40 * 50 + 40; ++j) EXPECT_EQ(x[j], 0.0);
}

TEST(BoundedGradient, FiniteOnBox) {
  const Dataset d = small_data(14, 50, 4, 3);
  const Model m{ModelKind::kMlp1, 4, 3, 6, Activation::kSmu, 25.0, 0.001};
  Rng rng(15);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    ParamVector x(m.dim());
    for (double& v : x) v = 20.0 * rng.uniform() - 10.0;
    worst = std::max(worst, linf_norm(full_grad(m, x, d)));
  }
  EXPECT_TRUE(std::isfinite(worst));
  RecordProperty("max_abs_grad_on_box", std::to_string(worst));
}
