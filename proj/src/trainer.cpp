#include "fedsnt/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsnt/error.hpp"

namespace fedsnt {

SurrogateTaskSpec SurrogateTaskSpec::make(std::size_t dim, double margin,
                                          double intensity_spread,
                                          double noise_std, std::uint64_t seed) {
  if (dim == 0) fail(ErrorKind::kInvalidConfig, "task.dim must be positive");
  SurrogateTaskSpec t;
  t.dim = dim;
  t.margin = margin;
  t.intensity_spread = intensity_spread;
  t.noise_std = noise_std;
  t.seed = seed;
  Rng rng = make_rng(seed, "harm-direction");
  std::normal_distribution<double> normal;
  t.harm_direction.resize(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& v : t.harm_direction) {
      v = normal(rng);
      norm2 += v * v;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : t.harm_direction) v *= inv;
  t.validate();
  return t;
}

void SurrogateTaskSpec::validate() const {
  if (dim == 0 || harm_direction.size() != dim) {
    fail(ErrorKind::kInvalidConfig, "task: harm_direction length must equal dim");
  }
  const double norm = std::sqrt(std::inner_product(
      harm_direction.begin(), harm_direction.end(), harm_direction.begin(), 0.0));
  if (std::abs(norm - 1.0) > 1e-9) {
    fail(ErrorKind::kInvalidConfig, "task: harm_direction must have unit norm");
  }
  if (!(margin > 0.0)) fail(ErrorKind::kInvalidConfig, "task.margin must be > 0");
  if (!(intensity_spread >= 0.0)) {
    fail(ErrorKind::kInvalidConfig, "task.intensity_spread must be >= 0");
  }
  if (!(noise_std >= 0.0)) fail(ErrorKind::kInvalidConfig, "task.noise_std must be >= 0");
}

double SurrogateTaskSpec::planted_offset() const {
  // E|Z| = sqrt(2/pi) for standard normal Z.
  return margin + intensity_spread * std::sqrt(2.0 / M_PI);
}

void TrainerConfig::validate() const {
  if (local_steps < 0) fail(ErrorKind::kInvalidConfig, "trainer.local_steps must be >= 0");
  if (batch_size <= 0) fail(ErrorKind::kInvalidConfig, "trainer.batch_size must be > 0");
  if (!(lr >= 0.0)) fail(ErrorKind::kInvalidConfig, "trainer.lr must be >= 0");
  if (optimizer == Optimizer::kAdamMoment) {
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
      fail(ErrorKind::kInvalidConfig, "trainer: betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) fail(ErrorKind::kInvalidConfig, "trainer.epsilon must be > 0");
  }
  if (!(weight_decay >= 0.0)) {
    fail(ErrorKind::kInvalidConfig, "trainer.weight_decay must be >= 0");
  }
}

std::vector<double> sample_features(const SurrogateTaskSpec& task, DataKind kind,
                                    Rng& rng, bool with_noise) {
  std::normal_distribution<double> normal;
  const double sign = is_harmful(kind) ? 1.0 : -1.0;
  const double intensity = task.margin + task.intensity_spread * std::abs(normal(rng));
  std::vector<double> x(task.dim);
  for (std::size_t i = 0; i < task.dim; ++i) {
    x[i] = sign * intensity * task.harm_direction[i];
  }
  if (with_noise && task.noise_std > 0.0) {
    for (auto& v : x) v += task.noise_std * normal(rng);
  }
  return x;
}

double logit(std::span<const double> params, std::span<const double> x) {
  const std::size_t d = x.size();
  double z = params[d];
  for (std::size_t i = 0; i < d; ++i) z += params[i] * x[i];
  return z;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double target_of(const DataSample& s) {
  return *s.label == Label::kComply ? 1.0 : 0.0;
}

void check_trainable(std::span<const double> params,
                     std::span<const DataSample> data) {
  if (data.empty()) fail(ErrorKind::kInvalidInput, "training data is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    if (!s.features || !s.label) {
      fail(ErrorKind::kInvalidInput,
           "sample " + std::to_string(i) + " is missing features or label");
    }
    if (s.features->size() + 1 != params.size()) {
      fail(ErrorKind::kInvalidInput,
           "sample " + std::to_string(i) + " has dimension " +
               std::to_string(s.features->size()) + ", model expects " +
               std::to_string(params.size() - 1));
    }
  }
}

// log(1 + e^z) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

double logistic_loss(std::span<const double> params,
                     std::span<const DataSample> samples) {
  check_trainable(params, samples);
  double total = 0.0;
  for (const auto& s : samples) {
    const double z = logit(params, *s.features);
    // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    total += softplus(z) - target_of(s) * z;
  }
  return total / static_cast<double>(samples.size());
}

std::vector<double> logistic_gradient(std::span<const double> params,
                                      std::span<const DataSample> samples) {
  check_trainable(params, samples);
  std::vector<double> grad(params.size(), 0.0);
  const std::size_t d = params.size() - 1;
  for (const auto& s : samples) {
    const auto& x = *s.features;
    const double err = sigmoid(logit(params, x)) - target_of(s);
    for (std::size_t i = 0; i < d; ++i) grad[i] += err * x[i];
    grad[d] += err;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

ParameterVector train_steps(const ParameterVector& init,
                            std::span<const DataSample> data,
                            const TrainerConfig& cfg, Rng& rng) {
  cfg.validate();
  if (init.dim() < 2) fail(ErrorKind::kInvalidInput, "model needs weights and a bias");
  check_trainable(init.values(), data);
  if (cfg.local_steps == 0) return init;

  std::vector<double> theta = init.vec();
  const std::size_t p = theta.size();
  const std::size_t d = p - 1;
  std::vector<double> grad(p), m1, m2;
  if (cfg.optimizer == Optimizer::kAdamMoment) {
    m1.assign(p, 0.0);
    m2.assign(p, 0.0);
  }
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (int step = 1; step <= cfg.local_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const DataSample& s = data[pick(rng)];
      const auto& x = *s.features;
      const double err = sigmoid(logit(theta, x)) - target_of(s);
      for (std::size_t i = 0; i < d; ++i) grad[i] += err * x[i];
      grad[d] += err;
    }
    for (auto& g : grad) g *= inv_batch;

    if (cfg.optimizer == Optimizer::kSgd) {
      for (std::size_t i = 0; i < p; ++i) theta[i] -= cfg.lr * grad[i];
    } else {
      const double c1 = 1.0 - std::pow(cfg.beta1, step);
      const double c2 = 1.0 - std::pow(cfg.beta2, step);
      for (std::size_t i = 0; i < p; ++i) {
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        theta[i] -= cfg.lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.epsilon);
      }
    }
    // Decoupled decay on weights only; the bias is exempt.
    if (cfg.weight_decay > 0.0) {
      for (std::size_t i = 0; i < d; ++i) theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
    }
  }
  return ParameterVector(std::move(theta));
}

ClientUpdate local_train(const ParameterVector& init,
                         std::span<const DataSample> data,
                         const TrainerConfig& cfg, Rng& rng, ClientId client_id,
                         int round) {
  ClientUpdate u;
  u.client_id = client_id;
  u.round = round;
  u.params = train_steps(init, data, cfg, rng);
  u.sample_count = data.size();
  return u;
}

}  // namespace fedsnt
