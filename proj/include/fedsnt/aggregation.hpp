#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fedsnt/core.hpp"

namespace fedsnt {

// Output of one server aggregation step.
//
// effective_weights sums to 1 over the participating clients (unless every
// client was excluded) and is 0 for every excluded client. raw_scores carries
// the rule's pre-normalization per-client quantity where one exists: the
// FoolsGold learning-rate weight, the Krum score, the DnC outlier score, the
// residual confidence. It is empty for FedAvg, Median and TrimmedMean.
struct AggregationReport {
  ParameterVector aggregated;
  std::map<ClientId, double> effective_weights;
  std::set<ClientId> excluded;
  std::string rule_name;
  std::map<ClientId, double> raw_scores;
};

nlohmann::json report_to_json(const AggregationReport& report,
                              bool include_params = false);
AggregationReport report_from_json(const nlohmann::json& j);

struct RobustConfig {
  int byzantine_count_f = 0;
  double dnc_filter_multiplier_c = 1.0;
  // Clamped to the parameter dimension at aggregation time.
  std::size_t dnc_subsample_dims = 10000;
  int dnc_iterations = 1;
  double foolsgold_confidence_kappa = 1.0;
  double residual_lambda = 2.0;
  double residual_mad_scale = 1.4826;
  std::uint64_t seed = 0;
};

enum class AggregatorKind {
  kFedAvg,
  kMedian,
  kTrimmedMean,
  kKrum,
  kDnC,
  kFoolsGold,
  kResidual,
};

std::string_view to_string(AggregatorKind kind);
// Accepts the canonical names; throws kInvalidConfig listing valid names.
AggregatorKind parse_aggregator(std::string_view name);
std::span<const AggregatorKind> all_aggregators();
std::string valid_aggregator_names();

// Largest byzantine count the rule admits for `participants` updates.
int max_admissible_f(AggregatorKind kind, std::size_t participants,
                     double dnc_multiplier = 1.0);

// Cumulative per-client update sums used by FoolsGold.
using UpdateHistory = std::map<ClientId, std::vector<double>>;

AggregationReport fedavg(std::span<const ClientUpdate> updates);
AggregationReport coordinate_median(std::span<const ClientUpdate> updates);
AggregationReport trimmed_mean(std::span<const ClientUpdate> updates,
                               const RobustConfig& cfg);
AggregationReport krum(std::span<const ClientUpdate> updates,
                       const RobustConfig& cfg);
AggregationReport dnc(std::span<const ClientUpdate> updates,
                      const RobustConfig& cfg);
AggregationReport foolsgold(const UpdateHistory& history,
                            std::span<const ClientUpdate> updates,
                            const RobustConfig& cfg);
AggregationReport residual_reweight(std::span<const ClientUpdate> updates,
                                    const RobustConfig& cfg);

// Dispatches on kind. `history` is only read by FoolsGold.
AggregationReport aggregate(AggregatorKind kind,
                            std::span<const ClientUpdate> updates,
                            const RobustConfig& cfg,
                            const UpdateHistory& history = {});

// Repeated-median (Siegel) line fit through (x_i, y_i). Returns
// {intercept, slope}. Pairs with equal x are skipped when forming slopes.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
};
LineFit repeated_median_fit(std::span<const double> x, std::span<const double> y);

// Median with the mean-of-middle-pair convention for even counts.
double median_of(std::vector<double> values);

// Top right-singular vector of a row-major rows x cols matrix, by power
// iteration on the rows x rows Gram matrix from a seeded start. Returns a
// zero vector when the matrix is zero.
struct PowerIterationOptions {
  int max_iterations = 100000;
  double tolerance = 1e-14;
  std::uint64_t seed = 0;
};
std::vector<double> top_right_singular_vector(std::span<const double> matrix,
                                              std::size_t rows, std::size_t cols,
                                              const PowerIterationOptions& options);

}  // namespace fedsnt
