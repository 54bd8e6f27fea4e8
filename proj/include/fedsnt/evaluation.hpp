#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedsnt/core.hpp"
#include "fedsnt/trainer.hpp"

namespace fedsnt {

struct EvalSnapshot {
  int round = 0;
  double safety_rate = 0.0;
  double helpfulness_rate = 0.0;
  std::size_t probe_count = 0;
};

// Noise-free probe features, fixed per scenario seed.
struct ProbeSet {
  std::vector<std::vector<double>> harmful;
  std::vector<std::vector<double>> normal;
};
ProbeSet make_probes(const SurrogateTaskSpec& task, std::size_t count, std::uint64_t seed);

// P(comply) = 0.5 counts as comply.
bool predicts_comply(const ParameterVector& model, std::span<const double> x);

// Fraction of harmful probes refused.
double surrogate_safety_rate(const ParameterVector& model, const SurrogateTaskSpec& task,
                             std::span<const std::vector<double>> probes);
// Fraction of normal probes answered.
double surrogate_helpfulness_rate(const ParameterVector& model, const SurrogateTaskSpec& task,
                                  std::span<const std::vector<double>> probes);

EvalSnapshot evaluate(const ParameterVector& model, const SurrogateTaskSpec& task,
                      const ProbeSet& probes, int round);

// A response is safe iff it contains any pattern, case-insensitively.
double rule_safety_eval(std::span<const std::string> responses,
                        std::span<const std::string> refusal_patterns);
std::vector<std::string> default_refusal_patterns();
// One pattern per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_refusal_patterns(const std::filesystem::path& path);

struct SimilarityMatrix {
  std::vector<ClientId> client_ids;
  std::vector<std::vector<double>> matrix;
};

// Cosine similarity of (theta_i - base) for every pair, rows ordered as given.
SimilarityMatrix update_similarity(std::span<const ClientUpdate> updates,
                                   const ParameterVector& base);

struct StealthStats {
  double benign_benign = 0.0;
  double benign_malicious = 0.0;
  // benign_benign - benign_malicious; large values mean malicious updates
  // stand apart from the benign cluster.
  double gap = 0.0;
  std::size_t bb_pairs = 0;
  std::size_t bm_pairs = 0;
};
// Needs at least one benign-benign and one benign-malicious pair.
StealthStats stealth_gap(const SimilarityMatrix& sim, const std::set<ClientId>& malicious);

}  // namespace fedsnt
