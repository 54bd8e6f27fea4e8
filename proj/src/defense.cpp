#include "fedsnt/defense.hpp"

#include <algorithm>
#include <cmath>

#include "fedsnt/datagen.hpp"
#include "fedsnt/dataset_io.hpp"
#include "fedsnt/error.hpp"
#include "fedsnt/provider.hpp"
#include "fedsnt/seed.hpp"

namespace fedsnt {

void PostHocConfig::validate() const {
  if (level < 1 || level > 3) fail(ErrorKind::kInvalidConfig, "defense.level must be 1, 2 or 3");
  if (defense_steps < 0) fail(ErrorKind::kInvalidConfig, "defense.steps must be >= 0");
  if (!(aligned_fraction >= 0.0 && aligned_fraction <= 1.0)) {
    fail(ErrorKind::kInvalidConfig, "defense.aligned_fraction must lie in [0, 1]");
  }
  if (level == 1 && source.empty()) {
    fail(ErrorKind::kInvalidConfig, "defense level 1 requires defense.source");
  }
  if (level == 2 && provider.empty()) {
    fail(ErrorKind::kInvalidConfig, "defense level 2 requires defense.provider");
  }
  trainer.validate();
}

namespace {

std::vector<DataSample> pick(std::vector<DataSample> pool, std::size_t n, Rng& rng,
                             const std::string& what) {
  if (pool.size() < n) {
    fail(ErrorKind::kInsufficientData, what + " holds " + std::to_string(pool.size()) +
                                           " samples, " + std::to_string(n) + " requested");
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  return pool;
}

}  // namespace

std::vector<DataSample> build_defense_dataset(const PostHocConfig& cfg,
                                              const ParameterVector& global_model,
                                              const SurrogateTaskSpec& task,
                                              std::uint64_t seed) {
  cfg.validate();
  if (global_model.dim() != task.dim + 1) {
    fail(ErrorKind::kInvalidInput, "model dimension does not match the task");
  }
  const std::size_t n = cfg.defense_samples;
  if (n == 0) return {};
  const auto n_aligned = static_cast<std::size_t>(std::llround(cfg.aligned_fraction * n));
  const std::size_t n_normal = n - n_aligned;
  Rng rng = make_rng(seed, "defense-data");
  std::vector<DataSample> out;

  if (cfg.level == 1) {
    auto pool = read_dataset(cfg.source);
    std::vector<DataSample> aligned, normal;
    for (auto& s : pool) {
      if (s.kind == DataKind::kAligned) aligned.push_back(std::move(s));
      else if (s.kind == DataKind::kNormal) normal.push_back(std::move(s));
    }
    const std::string src = "defense source " + cfg.source.string();
    out = pick(std::move(aligned), n_aligned, rng, src + " (aligned)");
    auto nm = pick(std::move(normal), n_normal, rng, src + " (normal)");
    out.insert(out.end(), nm.begin(), nm.end());
    // Text-only pool entries get surrogate features; given features are kept
    // when their dimension matches.
    for (auto& s : out) {
      if (!s.features || s.features->size() != task.dim) {
        s.features = sample_features(task, s.kind, rng);
      }
      s.label = expected_label(s.kind);
    }
  } else if (cfg.level == 2) {
    auto provider = make_provider(cfg.provider);
    out = generate_dataset(*provider, DataKind::kAligned, n_aligned, derive_seed(seed, "aligned"));
    auto nm = generate_dataset(*provider, DataKind::kNormal, n_normal, derive_seed(seed, "normal"));
    out.insert(out.end(), nm.begin(), nm.end());
    if (out.size() < n) {
      fail(ErrorKind::kInsufficientData, "provider returned " + std::to_string(out.size()) +
                                             " usable samples of " + std::to_string(n));
    }
    out = surrogate_encode(std::move(out), task, rng);
  } else {
    // The model at hand supplies instructions from its own input distribution;
    // the safety-reminder rule decides the response: refuse harmful, answer normal.
    for (std::size_t i = 0; i < n; ++i) {
      DataSample s;
      s.kind = i < n_aligned ? DataKind::kAligned : DataKind::kNormal;
      s.features = sample_features(task, s.kind, rng);
      s.label = expected_label(s.kind);
      s.instruction = "self-generated #" + std::to_string(i);
      s.response = s.kind == DataKind::kAligned ? "I cannot help with that." : "Here is an answer.";
      out.push_back(std::move(s));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

ParameterVector apply(const ParameterVector& global_model, const PostHocConfig& cfg,
                      const SurrogateTaskSpec& task, std::uint64_t seed,
                      std::vector<DataSample>* dataset_out) {
  auto data = build_defense_dataset(cfg, global_model, task, seed);
  if (dataset_out) *dataset_out = data;
  if (data.empty() || cfg.defense_steps == 0) return global_model;
  TrainerConfig tc = cfg.trainer;
  tc.local_steps = cfg.defense_steps;
  Rng rng = make_rng(seed, "defense-train");
  return train_steps(global_model, data, tc, rng);
}

}  // namespace fedsnt
