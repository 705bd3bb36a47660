#include "fedsim/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <omp.h>

namespace fedsim {

std::size_t Model::dim() const {
  switch (kind) {
    case ModelKind::kQuadratic:
      return p;
    case ModelKind::kSoftmaxLinear:
      return classes * p + classes;
    case ModelKind::kMlp1:
      return hidden * p + hidden + classes * hidden + classes;
  }
  return 0;
}

double activation_eval(Activation kind, double u, double smu_mu) {
  switch (kind) {
    case Activation::kRelu:
      return u > 0.0 ? u : 0.0;
    case Activation::kGelu: {
      const double k = std::sqrt(2.0 / std::numbers::pi);
      return 0.5 * u * (1.0 + std::tanh(k * (u + 0.044715 * u * u * u)));
    }
    case Activation::kSmu:
      if (!(smu_mu > 0.0)) throw std::invalid_argument("SMU requires mu > 0");
      return 0.5 * (u + u * std::erf(smu_mu * u));
  }
  return 0.0;
}

double activation_deriv(Activation kind, double u, double smu_mu) {
  switch (kind) {
    case Activation::kRelu:
      return u > 0.0 ? 1.0 : 0.0;
    case Activation::kGelu: {
      const double k = std::sqrt(2.0 / std::numbers::pi);
      const double inner = k * (u + 0.044715 * u * u * u);
      const double t = std::tanh(inner);
      const double dinner = k * (1.0 + 3.0 * 0.044715 * u * u);
      return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dinner;
    }
    case Activation::kSmu: {
      if (!(smu_mu > 0.0)) throw std::invalid_argument("SMU requires mu > 0");
      const double z = smu_mu * u;
      return 0.5 * (1.0 + std::erf(z) + u * smu_mu * (2.0 / std::sqrt(std::numbers::pi)) *
                                            std::exp(-z * z));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Quadratics

QuadraticSpec QuadraticSpec::identity(std::size_t p) {
  QuadraticSpec q;
  q.p = p;
  q.a.assign(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) q.a[i * p + i] = 1.0;
  q.b.assign(p, 0.0);
  return q;
}

QuadraticSpec QuadraticSpec::random(std::size_t p, double mu, double smoothness, double b_scale,
                                    Rng& rng) {
  if (p == 0 || mu < 0.0 || smoothness < mu) {
    throw std::invalid_argument("QuadraticSpec::random: need p > 0 and 0 <= mu <= L");
  }
  // Orthonormal basis by Gram-Schmidt on a Gaussian matrix (rows).
  std::vector<double> q(p * p);
  for (std::size_t i = 0; i < p; ++i) {
    while (true) {
      for (std::size_t k = 0; k < p; ++k) q[i * p + k] = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t r = 0; r < i; ++r) {
          double dot = 0.0;
          for (std::size_t k = 0; k < p; ++k) dot += q[i * p + k] * q[r * p + k];
          for (std::size_t k = 0; k < p; ++k) q[i * p + k] -= dot * q[r * p + k];
        }
      }
      double norm = 0.0;
      for (std::size_t k = 0; k < p; ++k) norm += q[i * p + k] * q[i * p + k];
      if (norm > 1e-12) {
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < p; ++k) q[i * p + k] /= norm;
        break;
      }
    }
  }
  std::vector<double> eig(p);
  for (std::size_t i = 0; i < p; ++i) eig[i] = mu + (smoothness - mu) * rng.uniform();
  eig[0] = smoothness;

  QuadraticSpec out;
  out.p = p;
  out.a.assign(p * p, 0.0);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t c = r; c < p; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += q[k * p + r] * eig[k] * q[k * p + c];
      out.a[r * p + c] = s;
      out.a[c * p + r] = s;
    }
  }
  out.b.resize(p);
  for (double& v : out.b) v = b_scale * rng.normal();
  return out;
}

double QuadraticSpec::max_eigenvalue() const {
  std::vector<double> v(p, 1.0), w(p);
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    double norm = 0.0;
    for (std::size_t r = 0; r < p; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p; ++c) s += a[r * p + c] * v[c];
      w[r] = s;
      norm += s * s;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t r = 0; r < p; ++r) v[r] = w[r] / norm;
    if (std::abs(norm - lambda) <= 1e-14 * norm) return norm;
    lambda = norm;
  }
  return lambda;
}

double quadratic_loss(const QuadraticSpec& q, const ParamVector& x, double weight_decay) {
  if (x.size() != q.p) throw DimensionError("quadratic_loss: dimension mismatch");
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t r = 0; r < q.p; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < q.p; ++c) s += q.a[r * q.p + c] * x[c];
    quad += x[r] * s;
    lin += q.b[r] * x[r];
  }
  return 0.5 * quad - lin + 0.5 * weight_decay * l2_norm_sq(x);
}

ParamVector quadratic_grad(const QuadraticSpec& q, const ParamVector& x, double weight_decay) {
  if (x.size() != q.p) throw DimensionError("quadratic_grad: dimension mismatch");
  ParamVector g(q.p);
  for (std::size_t r = 0; r < q.p; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < q.p; ++c) s += q.a[r * q.p + c] * x[c];
    g[r] = s - q.b[r] + weight_decay * x[r];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Classifiers

namespace {

void check_inputs(const Model& model, const ParamVector& x, const Dataset& data) {
  if (model.kind == ModelKind::kQuadratic) {
    throw std::invalid_argument("quadratic models are evaluated through QuadraticSpec");
  }
  if (x.size() != model.dim()) {
    throw DimensionError("model parameters have dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(model.dim()));
  }
  if (data.p != model.p) throw DimensionError("dataset feature count does not match the model");
  if (model.kind == ModelKind::kMlp1 && model.activation == Activation::kSmu && !(model.smu_mu > 0.0)) {
    throw std::invalid_argument("SMU requires mu > 0");
  }
}

int checked_label(const Model& model, const Dataset& data, std::size_t i) {
  const int y = data.labels[i];
  if (y < 0 || static_cast<std::size_t>(y) >= model.classes) {
    throw std::out_of_range("label " + std::to_string(y) + " out of range for " +
                            std::to_string(model.classes) + " classes");
  }
  return y;
}

// Per-sample scratch for forward/backward passes.
struct Scratch {
  std::vector<double> logits, probs, pre, act, dact;
  explicit Scratch(const Model& m) : logits(m.classes), probs(m.classes), pre(m.hidden), act(m.hidden), dact(m.hidden) {}
};

void forward_logits(const Model& m, const double* x, std::span<const double> u, Scratch& s) {
  const std::size_t p = m.p, c = m.classes;
  if (m.kind == ModelKind::kSoftmaxLinear) {
    const double* w = x;
    const double* b = x + c * p;
    for (std::size_t k = 0; k < c; ++k) {
      double z = b[k];
      for (std::size_t j = 0; j < p; ++j) z += w[k * p + j] * u[j];
      s.logits[k] = z;
    }
    return;
  }
  const std::size_t h = m.hidden;
  const double* w1 = x;
  const double* b1 = w1 + h * p;
  const double* w2 = b1 + h;
  const double* b2 = w2 + c * h;
  for (std::size_t r = 0; r < h; ++r) {
    double z = b1[r];
    for (std::size_t j = 0; j < p; ++j) z += w1[r * p + j] * u[j];
    s.pre[r] = z;
    s.act[r] = activation_eval(m.activation, z, m.smu_mu);
  }
  for (std::size_t k = 0; k < c; ++k) {
    double z = b2[k];
    for (std::size_t r = 0; r < h; ++r) z += w2[k * h + r] * s.act[r];
    s.logits[k] = z;
  }
}

// Cross-entropy of the current logits; fills probs with softmax.
double cross_entropy(Scratch& s, int label) {
  const double mx = *std::max_element(s.logits.begin(), s.logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < s.logits.size(); ++k) {
    s.probs[k] = std::exp(s.logits[k] - mx);
    z += s.probs[k];
  }
  for (double& q : s.probs) q /= z;
  return std::log(z) + mx - s.logits[static_cast<std::size_t>(label)];
}

// Adds the unnormalized per-sample gradient into g; returns the sample loss.
double accumulate_sample(const Model& m, const double* x, std::span<const double> u, int label,
                         Scratch& s, double* g) {
  forward_logits(m, x, u, s);
  const double l = cross_entropy(s, label);
  const std::size_t p = m.p, c = m.classes;
  s.probs[static_cast<std::size_t>(label)] -= 1.0;  // dlogits
  const auto& dz = s.probs;
  if (m.kind == ModelKind::kSoftmaxLinear) {
    double* gw = g;
    double* gb = g + c * p;
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t j = 0; j < p; ++j) gw[k * p + j] += dz[k] * u[j];
      gb[k] += dz[k];
    }
    return l;
  }
  const std::size_t h = m.hidden;
  const double* w2 = x + h * p + h;
  double* gw1 = g;
  double* gb1 = gw1 + h * p;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + c * h;
  for (std::size_t r = 0; r < h; ++r) s.dact[r] = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t r = 0; r < h; ++r) {
      gw2[k * h + r] += dz[k] * s.act[r];
      s.dact[r] += dz[k] * w2[k * h + r];
    }
    gb2[k] += dz[k];
  }
  for (std::size_t r = 0; r < h; ++r) {
    const double dpre = s.dact[r] * activation_deriv(m.activation, s.pre[r], m.smu_mu);
    for (std::size_t j = 0; j < p; ++j) gw1[r * p + j] += dpre * u[j];
    gb1[r] += dpre;
  }
  return l;
}

double sample_loss(const Model& m, const double* x, std::span<const double> u, int label,
                   Scratch& s) {
  forward_logits(m, x, u, s);
  return cross_entropy(s, label);
}

}  // namespace

double loss(const Model& model, const ParamVector& x, const Dataset& data,
            std::span<const std::size_t> idx) {
  check_inputs(model, x, data);
  if (idx.empty()) throw std::invalid_argument("loss: empty index list");
  Scratch s(model);
  double total = 0.0;
  for (std::size_t i : idx) {
    total += sample_loss(model, x.span().data(), data.row(i), checked_label(model, data, i), s);
  }
  return total / static_cast<double>(idx.size()) + 0.5 * model.weight_decay * l2_norm_sq(x);
}

ParamVector grad(const Model& model, const ParamVector& x, const Dataset& data,
                 std::span<const std::size_t> idx) {
  check_inputs(model, x, data);
  if (idx.empty()) throw std::invalid_argument("grad: empty index list");
  Scratch s(model);
  ParamVector g(x.size());
  for (std::size_t i : idx) {
    accumulate_sample(model, x.span().data(), data.row(i), checked_label(model, data, i), s,
                      g.span().data());
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv + model.weight_decay * x[j];
  return g;
}

double accuracy(const Model& model, const ParamVector& x, const Dataset& data,
                std::span<const std::size_t> idx) {
  check_inputs(model, x, data);
  if (idx.empty()) return 0.0;
  Scratch s(model);
  std::size_t hits = 0;
  for (std::size_t i : idx) {
    forward_logits(model, x.span().data(), data.row(i), s);
    const auto best = static_cast<int>(std::max_element(s.logits.begin(), s.logits.end()) -
                                       s.logits.begin());
    if (best == checked_label(model, data, i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

ParamVector init_params(const Model& model, Rng& rng) {
  ParamVector x(model.dim());
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t j = 0; j < count; ++j) x[offset + j] = sd * rng.normal();
  };
  switch (model.kind) {
    case ModelKind::kQuadratic:
      fill(0, model.p, model.p);
      break;
    case ModelKind::kSoftmaxLinear:
      fill(0, model.classes * model.p, model.p);
      break;
    case ModelKind::kMlp1: {
      const std::size_t w1 = model.hidden * model.p;
      fill(0, w1, model.p);
      fill(w1 + model.hidden, model.classes * model.hidden, model.hidden);
      break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Full-dataset kernels

namespace {

std::size_t block_count(std::size_t n) { return (n + kEvalBlock - 1) / kEvalBlock; }

// Exceptions must not escape an OpenMP region, so labels are validated up front.
void validate_labels(const Model& model, const Dataset& data) {
  for (std::size_t i = 0; i < data.n; ++i) checked_label(model, data, i);
}

}  // namespace

double full_loss_serial(const Model& model, const ParamVector& x, const Dataset& data) {
  return loss(model, x, data, data.all_indices());
}

ParamVector full_grad_serial(const Model& model, const ParamVector& x, const Dataset& data) {
  return grad(model, x, data, data.all_indices());
}

double full_loss(const Model& model, const ParamVector& x, const Dataset& data) {
  check_inputs(model, x, data);
  if (data.n == 0) throw std::invalid_argument("full_loss: empty dataset");
  validate_labels(model, data);
  const std::size_t blocks = block_count(data.n);
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    Scratch s(model);
    const std::size_t lo = static_cast<std::size_t>(b) * kEvalBlock;
    const std::size_t hi = std::min(data.n, lo + kEvalBlock);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      acc += sample_loss(model, x.span().data(), data.row(i), data.labels[i], s);
    }
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total / static_cast<double>(data.n) + 0.5 * model.weight_decay * l2_norm_sq(x);
}

ParamVector full_grad(const Model& model, const ParamVector& x, const Dataset& data) {
  check_inputs(model, x, data);
  if (data.n == 0) throw std::invalid_argument("full_grad: empty dataset");
  validate_labels(model, data);
  const std::size_t blocks = block_count(data.n);
  const std::size_t d = x.size();
  std::vector<double> partial(blocks * d, 0.0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    Scratch s(model);
    const std::size_t lo = static_cast<std::size_t>(b) * kEvalBlock;
    const std::size_t hi = std::min(data.n, lo + kEvalBlock);
    double* out = partial.data() + static_cast<std::size_t>(b) * d;
    for (std::size_t i = lo; i < hi; ++i) {
      accumulate_sample(model, x.span().data(), data.row(i), data.labels[i], s, out);
    }
  }
  ParamVector g(d);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < d; ++j) g[j] += partial[b * d + j];
  const double inv = 1.0 / static_cast<double>(data.n);
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv + model.weight_decay * x[j];
  return g;
}

double full_accuracy(const Model& model, const ParamVector& x, const Dataset& data) {
  check_inputs(model, x, data);
  if (data.n == 0) return 0.0;
  validate_labels(model, data);
  const std::size_t blocks = block_count(data.n);
  std::vector<std::size_t> hits(blocks, 0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    Scratch s(model);
    const std::size_t lo = static_cast<std::size_t>(b) * kEvalBlock;
    const std::size_t hi = std::min(data.n, lo + kEvalBlock);
    std::size_t h = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      forward_logits(model, x.span().data(), data.row(i), s);
      const auto best = static_cast<int>(std::max_element(s.logits.begin(), s.logits.end()) -
                                         s.logits.begin());
      if (best == data.labels[i]) ++h;
    }
    hits[static_cast<std::size_t>(b)] = h;
  }
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(data.n);
}

double full_grad_norm(const Model& model, const ParamVector& x, const Dataset& train) {
  return l2_norm_sq(full_grad(model, x, train));
}

double gradient_relative_error(const ParamVector& analytic, const ParamVector& numeric) {
  const double diff = std::sqrt(l2_norm_sq(subtract(analytic, numeric)));
  const double scale = std::max({std::sqrt(l2_norm_sq(analytic)), std::sqrt(l2_norm_sq(numeric)), 1e-12});
  return diff / scale;
}

// ---------------------------------------------------------------------------

ShardObjective::ShardObjective(const Model& model, const Dataset& data,
                               std::span<const std::size_t> shard, std::size_t batch)
    : model_(&model), data_(&data), shard_(shard), batch_(batch) {
  if (shard.empty()) throw DataError("ShardObjective: empty shard");
  if (batch == 0) throw std::invalid_argument("ShardObjective: batch must be >= 1");
}

ParamVector ShardObjective::stochastic_grad(const ParamVector& x, Rng& rng) const {
  const auto idx = sample_minibatch(shard_, batch_, rng);
  return grad(*model_, x, *data_, idx);
}

double ShardObjective::local_loss(const ParamVector& x) const {
  return loss(*model_, x, *data_, shard_);
}

QuadraticObjective::QuadraticObjective(const QuadraticSpec& spec, double weight_decay,
                                       double noise)
    : spec_(&spec), weight_decay_(weight_decay), noise_(noise) {
  if (noise < 0.0) throw std::invalid_argument("QuadraticObjective: noise must be >= 0");
}

ParamVector QuadraticObjective::stochastic_grad(const ParamVector& x, Rng& rng) const {
  ParamVector g = quadratic_grad(*spec_, x, weight_decay_);
  if (noise_ > 0.0)
    for (double& v : g) v += noise_ * rng.normal();
  return g;
}

double QuadraticObjective::local_loss(const ParamVector& x) const {
  return quadratic_loss(*spec_, x, weight_decay_);
}

}  // namespace fedsim
