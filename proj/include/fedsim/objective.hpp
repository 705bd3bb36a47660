#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

enum class ModelKind { kQuadratic, kSoftmaxLinear, kMlp1 };
enum class Activation { kRelu, kGelu, kSmu };

struct Model {
  ModelKind kind = ModelKind::kSoftmaxLinear;
  std::size_t p = 0;        // input features (quadratic: problem dimension)
  std::size_t classes = 0;  // unused for quadratic
  std::size_t hidden = 0;   // MLP1 only
  Activation activation = Activation::kGelu;
  double smu_mu = 25.0;
  double weight_decay = 0.0;

  /// Parameter dimension; a pure function of kind and dims.
  std::size_t dim() const;
};

double activation_eval(Activation kind, double u, double smu_mu = 25.0);
double activation_deriv(Activation kind, double u, double smu_mu = 25.0);

/// Per-client quadratic F_i(x) = 1/2 x^T A x - b^T x (+ weight decay).
struct QuadraticSpec {
  std::size_t p = 0;
  std::vector<double> a;  // row-major p x p, symmetric PSD
  std::vector<double> b;

  static QuadraticSpec identity(std::size_t p);
  /// Random symmetric PSD matrix with eigenvalues in [mu, smoothness].
  static QuadraticSpec random(std::size_t p, double mu, double smoothness, double b_scale,
                              Rng& rng);
  /// Largest eigenvalue (power iteration); the smoothness constant L.
  double max_eigenvalue() const;
};

/// Mean per-sample cross-entropy over idx plus weight_decay/2 * ||x||^2.
double loss(const Model& model, const ParamVector& x, const Dataset& data,
            std::span<const std::size_t> idx);
ParamVector grad(const Model& model, const ParamVector& x, const Dataset& data,
                 std::span<const std::size_t> idx);
double quadratic_loss(const QuadraticSpec& q, const ParamVector& x, double weight_decay = 0.0);
ParamVector quadratic_grad(const QuadraticSpec& q, const ParamVector& x, double weight_decay = 0.0);

/// Fraction of idx whose argmax logit equals the label.
double accuracy(const Model& model, const ParamVector& x, const Dataset& data,
                std::span<const std::size_t> idx);

/// Seeded initialization: entries ~ N(0, 1/fan_in) for weights, zero biases.
ParamVector init_params(const Model& model, Rng& rng);

// Full-dataset kernels. The default versions split samples into fixed-size
// blocks evaluated with OpenMP and summed in block order, so the result does
// not depend on the thread count. The *_serial versions are the one-pass
// references.
inline constexpr std::size_t kEvalBlock = 256;

double full_loss(const Model& model, const ParamVector& x, const Dataset& data);
ParamVector full_grad(const Model& model, const ParamVector& x, const Dataset& data);
double full_accuracy(const Model& model, const ParamVector& x, const Dataset& data);
double full_loss_serial(const Model& model, const ParamVector& x, const Dataset& data);
ParamVector full_grad_serial(const Model& model, const ParamVector& x, const Dataset& data);

/// ||grad F(x)||^2 over the entire training set.
double full_grad_norm(const Model& model, const ParamVector& x, const Dataset& train);

/// Central finite-difference gradient of an arbitrary scalar function.
template <typename F>
ParamVector finite_difference_grad(F&& f, const ParamVector& x, double step = 1e-5) {
  ParamVector out(x.size());
  ParamVector probe = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + step;
    const double up = f(probe);
    probe[j] = orig - step;
    const double down = f(probe);
    probe[j] = orig;
    out[j] = (up - down) / (2.0 * step);
  }
  return out;
}

/// ||fd - analytic|| / max(||analytic||, ||fd||, 1e-12).
double gradient_relative_error(const ParamVector& analytic, const ParamVector& numeric);

/// A client's stochastic gradient oracle. Implementations are immutable and
/// safe to call from several threads as long as each call owns its Rng.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;
  virtual std::size_t dim() const = 0;
  virtual ParamVector stochastic_grad(const ParamVector& x, Rng& rng) const = 0;
  virtual double local_loss(const ParamVector& x) const = 0;
};

/// Minibatch gradients of a data model over one client's shard.
class ShardObjective final : public LocalObjective {
 public:
  ShardObjective(const Model& model, const Dataset& data, std::span<const std::size_t> shard,
                 std::size_t batch);
  std::size_t dim() const override { return model_->dim(); }
  ParamVector stochastic_grad(const ParamVector& x, Rng& rng) const override;
  double local_loss(const ParamVector& x) const override;

 private:
  const Model* model_;
  const Dataset* data_;
  std::span<const std::size_t> shard_;
  std::size_t batch_;
};

/// Exact quadratic gradient plus optional isotropic Gaussian noise.
class QuadraticObjective final : public LocalObjective {
 public:
  QuadraticObjective(const QuadraticSpec& spec, double weight_decay, double noise);
  std::size_t dim() const override { return spec_->p; }
  ParamVector stochastic_grad(const ParamVector& x, Rng& rng) const override;
  double local_loss(const ParamVector& x) const override;

 private:
  const QuadraticSpec* spec_;
  double weight_decay_;
  double noise_;
};

}  // namespace fedsim
