#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsnt/core.hpp"
#include "fedsnt/seed.hpp"

namespace fedsnt {

// Desk-scale stand-in for the language model: harmful instructions live on
// the positive side of a unit "harm direction", normal ones on the negative
// side. A logistic-regression model with bias predicts P(comply | x).
struct SurrogateTaskSpec {
  std::size_t dim = 256;
  std::vector<double> harm_direction;  // unit norm
  double margin = 1.0;
  // Harm intensity beyond the margin is margin + intensity_spread * |N(0,1)|.
  double intensity_spread = 1.0;
  double noise_std = 3.0;
  std::uint64_t seed = 0;

  // Draws a Gaussian harm direction from `seed` and normalizes it.
  static SurrogateTaskSpec make(std::size_t dim, double margin,
                                double intensity_spread, double noise_std,
                                std::uint64_t seed);
  void validate() const;

  // E[x.h] for harmful draws; the noise is zero-mean.
  double planted_offset() const;
};

enum class Optimizer { kSgd, kAdamMoment };

struct TrainerConfig {
  int local_steps = 10;
  int batch_size = 16;
  // The LLM-scale default is 5e-5 (AdamW on LoRA adapters). The surrogate
  // needs a larger step to converge within 100 rounds.
  double lr = 0.1;
  Optimizer optimizer = Optimizer::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

// x = s * (margin + spread*|z|) * h + noise_std * n, with s = +1 for harmful
// kinds and -1 for normal. `with_noise = false` gives the noise-free part.
std::vector<double> sample_features(const SurrogateTaskSpec& task, DataKind kind,
                                    Rng& rng, bool with_noise = true);

// Logistic model helpers. Parameters are [w_0 .. w_{d-1}, bias].
double logit(std::span<const double> params, std::span<const double> x);
double sigmoid(double z);
// Mean logistic loss over the given samples (Comply = 1, Refuse = 0).
double logistic_loss(std::span<const double> params,
                     std::span<const DataSample> samples);
// Analytic gradient of logistic_loss.
std::vector<double> logistic_gradient(std::span<const double> params,
                                      std::span<const DataSample> samples);

// Runs cfg.local_steps optimizer steps on minibatches drawn with replacement.
ParameterVector train_steps(const ParameterVector& init,
                            std::span<const DataSample> data,
                            const TrainerConfig& cfg, Rng& rng);

ClientUpdate local_train(const ParameterVector& init,
                         std::span<const DataSample> data,
                         const TrainerConfig& cfg, Rng& rng,
                         ClientId client_id = 0, int round = 0);

}  // namespace fedsnt
