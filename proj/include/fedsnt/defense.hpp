#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedsnt/core.hpp"
#include "fedsnt/trainer.hpp"

namespace fedsnt {

// Server-side fine-tune of the final aggregated model on aligned + normal
// data. Level 1 samples an existing dataset file, level 2 generates with an
// external provider, level 3 labels task draws with the model's own
// safety-reminder rule.
struct PostHocConfig {
  int level = 2;
  std::size_t defense_samples = 1000;
  int defense_steps = 500;
  double aligned_fraction = 0.5;
  std::filesystem::path source;    // level 1
  std::string provider = "stub";   // level 2
  // Minibatch size, optimizer and a constant learning rate for the fine-tune.
  TrainerConfig trainer;

  void validate() const;
};

// Exactly defense_samples samples: round(aligned_fraction * n) Aligned, the
// rest Normal, all with features and labels.
std::vector<DataSample> build_defense_dataset(const PostHocConfig& cfg,
                                              const ParameterVector& global_model,
                                              const SurrogateTaskSpec& task,
                                              std::uint64_t seed);

// Runs defense_steps optimizer steps from global_model. Reads nothing but the
// model, its own config and the task geometry.
ParameterVector apply(const ParameterVector& global_model, const PostHocConfig& cfg,
                      const SurrogateTaskSpec& task, std::uint64_t seed,
                      std::vector<DataSample>* dataset_out = nullptr);

}  // namespace fedsnt
