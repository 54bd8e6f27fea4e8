#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fedsnt/aggregation.hpp"
#include "fedsnt/defense.hpp"
#include "fedsnt/trainer.hpp"

namespace fedsnt {

// kUnaligned: malicious clients train on unaligned data.
// kSignFlip: malicious clients hold benign data and upload the reversed delta
// (a model-poisoning baseline used for the stealthiness comparison).
enum class AttackMode { kUnaligned, kSignFlip };
std::string_view to_string(AttackMode mode);

struct TaskConfig {
  std::size_t dim = 256;
  double margin = 1.0;
  double intensity_spread = 1.0;
  double noise_std = 3.0;
  // Defaults to the scenario seed.
  std::optional<std::uint64_t> seed;
};

struct EvalConfig {
  std::size_t probe_count = 1000;
  // Empty means the built-in markers.
  std::string refusal_patterns;
};

struct ScenarioConfig {
  std::uint64_t seed = 7;
  int num_clients = 10;
  double malicious_ratio = 0.3;
  int clients_per_round = 3;
  int rounds = 100;
  std::size_t samples_per_client = 500;
  AttackMode attack = AttackMode::kUnaligned;
  // Malicious clients share one dataset and one training stream, so their
  // updates coincide whenever they are sampled together.
  bool sybil = false;

  AggregatorKind aggregator = AggregatorKind::kFedAvg;
  RobustConfig robust;
  // Unset: ceil(M * malicious_ratio), clamped per round to what the rule admits.
  std::optional<int> byzantine_f;

  TrainerConfig trainer;
  bool cosine_schedule = true;
  TaskConfig task;
  EvalConfig eval;
  std::optional<PostHocConfig> defense;

  // Optional per-client JSONL datasets, indexed by client id.
  std::vector<std::string> client_files;
  int threads = 1;
  bool log_updates = true;

  int malicious_count() const;
  int benign_count() const { return num_clients - malicious_count(); }
  void validate() const;
  SurrogateTaskSpec make_task() const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
// Missing keys take defaults; unknown keys and bad values raise
// kInvalidConfig naming the field.
ScenarioConfig scenario_from_json(const nlohmann::json& j);

// Subset of TOML: [section] and [a.b] tables, key = value with strings,
// integers, floats, booleans and single-line arrays, '#' comments.
nlohmann::json parse_toml(std::string_view text);
// .toml files go through parse_toml, anything else is parsed as JSON.
nlohmann::json load_config_json(const std::filesystem::path& path);

// "a.b=value". The value is read as JSON when it parses, else as a string.
// Short aliases: aggregator -> aggregator.rule, defense_steps -> defense.steps,
// defense_level -> defense.level.
void apply_override(nlohmann::json& config, std::string_view assignment);
std::string resolve_key_alias(std::string_view key);

// Hex SHA-256 of the canonical (sorted-key, compact) resolved config.
std::string config_hash(const ScenarioConfig& cfg);
std::string sha256_hex(std::string_view bytes);

}  // namespace fedsnt
