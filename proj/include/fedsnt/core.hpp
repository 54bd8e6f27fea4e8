#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsnt {

using ClientId = std::int32_t;

// Flat model state. Entries are guaranteed finite; dimension is fixed at
// construction.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::vector<double> values);
  static ParameterVector zeros(std::size_t dim);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& vec() const noexcept { return values_; }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

enum class DataKind { kNormal, kAligned, kUnaligned };
enum class Label { kRefuse, kComply };

std::string_view to_string(DataKind kind);
std::string_view to_string(Label label);
DataKind parse_data_kind(std::string_view text);
Label parse_label(std::string_view text);

// Aligned and Unaligned samples share harmful instructions.
constexpr bool is_harmful(DataKind kind) { return kind != DataKind::kNormal; }
constexpr Label expected_label(DataKind kind) {
  return kind == DataKind::kAligned ? Label::kRefuse : Label::kComply;
}

struct DataSample {
  std::string instruction;
  std::string response;
  std::optional<std::vector<double>> features;
  std::optional<Label> label;
  DataKind kind = DataKind::kNormal;

  friend bool operator==(const DataSample&, const DataSample&) = default;
};

// Throws kInvalidInput if label or feature dimension contradict the kind.
void validate_sample(const DataSample& sample,
                     std::optional<std::size_t> feature_dim = std::nullopt);

struct ClientSpec {
  ClientId client_id = 0;
  std::vector<DataSample> dataset;
  // Ground truth for evaluation only. Aggregation code never sees a ClientSpec.
  bool is_malicious = false;
  std::size_t sample_count = 0;
};

// Checks sample_count and the benign/malicious data-space invariants. Model
// poisoning baselines (sign flip) hold benign data by construction, so the
// malicious-data requirement is skipped when `data_attack` is false.
void validate_client(const ClientSpec& client, bool data_attack = true);

struct ClientUpdate {
  ClientId client_id = 0;
  int round = 0;
  ParameterVector params;
  std::size_t sample_count = 0;
};

// p_k = N_k / sum_i N_i over the roster.
double relative_weight(std::span<const ClientSpec> roster, ClientId client_id);

// current - previous, element-wise.
ParameterVector flatten_delta(const ParameterVector& current,
                              const ParameterVector& previous);

}  // namespace fedsnt
