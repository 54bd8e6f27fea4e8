#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "json.hpp"

#include "fedsnt/aggregation.hpp"
#include "fedsnt/evaluation.hpp"
#include "fedsnt/scenario.hpp"

namespace fedsnt {

struct RoundRecord {
  int round = 0;
  std::vector<ClientId> sampled;
  std::vector<ClientUpdate> updates;
  AggregationReport report;
  ParameterVector global_before;
  ParameterVector global_after;
  EvalSnapshot metrics_after;
  double lr = 0.0;
  int byzantine_f = 0;
};

nlohmann::json record_to_json(const RoundRecord& record, bool include_updates);
RoundRecord record_from_json(const nlohmann::json& j);

// lr_t = 0.5 * lr0 * (1 + cos(pi * t / T)).
double cosine_lr(double lr0, int round, int total_rounds);

// Client datasets per the scenario: benign clients get a 50/50 Aligned +
// Normal mix, malicious clients (the last round(K * ratio) ids) get Unaligned
// data, or benign data under the sign-flip attack. Files in
// cfg.client_files replace the generated data.
std::vector<ClientSpec> build_roster(const ScenarioConfig& cfg, const SurrogateTaskSpec& task);

// Round-by-round driver. The roster stays private; aggregation sees only the
// sampled ClientUpdates.
class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg);

  bool finished() const { return round_ >= cfg_.rounds; }
  int round() const { return round_; }
  const RoundRecord& run_round();
  void run(const std::function<void(const RoundRecord&)>& on_round = {});

  const ScenarioConfig& config() const { return cfg_; }
  const SurrogateTaskSpec& task() const { return task_; }
  const ProbeSet& probes() const { return probes_; }
  const ParameterVector& global() const { return global_; }
  const std::vector<RoundRecord>& records() const { return records_; }
  EvalSnapshot initial_metrics() const;
  // Ground truth, for evaluation and forensics only.
  std::set<ClientId> malicious_ids() const;

  void keep_records(bool keep) { keep_records_ = keep; }

 private:
  ClientUpdate train_client(const ClientSpec& client, int round, double lr) const;

  ScenarioConfig cfg_;
  SurrogateTaskSpec task_;
  std::vector<ClientSpec> roster_;
  ProbeSet probes_;
  ParameterVector global_;
  UpdateHistory history_;
  std::vector<RoundRecord> records_;
  RoundRecord last_;
  bool keep_records_ = true;
  int round_ = 0;
};

struct SimulationResult {
  std::vector<RoundRecord> records;
  ParameterVector final_model;
  EvalSnapshot initial;
  EvalSnapshot final_metrics;
  std::optional<ParameterVector> defended_model;
  std::optional<EvalSnapshot> defended_metrics;
  std::set<ClientId> malicious;
};

// Runs every round, then the post-hoc defense when configured.
SimulationResult run_simulation(const ScenarioConfig& cfg,
                                const std::function<void(const RoundRecord&)>& on_round = {},
                                bool keep_records = true);

}  // namespace fedsnt
