#include "fedsnt/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsnt/error.hpp"
#include "fedsnt/seed.hpp"

namespace fedsnt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kAggregationDegenerate: return "aggregation-degenerate";
    case ErrorKind::kDataLoad: return "data-load";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kGenerationStalled: return "generation-stalled";
    case ErrorKind::kProvider: return "provider";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a(purpose)) + splitmix64(index));
}

ParameterVector::ParameterVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorKind::kInvalidInput,
           "parameter " + std::to_string(i) + " is not finite");
    }
  }
}

ParameterVector ParameterVector::zeros(std::size_t dim) {
  return ParameterVector(std::vector<double>(dim, 0.0));
}

std::string_view to_string(DataKind kind) {
  switch (kind) {
    case DataKind::kNormal: return "normal";
    case DataKind::kAligned: return "aligned";
    case DataKind::kUnaligned: return "unaligned";
  }
  return "normal";
}

std::string_view to_string(Label label) {
  return label == Label::kRefuse ? "refuse" : "comply";
}

DataKind parse_data_kind(std::string_view text) {
  if (text == "normal") return DataKind::kNormal;
  if (text == "aligned") return DataKind::kAligned;
  if (text == "unaligned") return DataKind::kUnaligned;
  fail(ErrorKind::kInvalidInput, "unknown data kind '" + std::string(text) +
                                     "' (expected normal|aligned|unaligned)");
}

Label parse_label(std::string_view text) {
  if (text == "refuse") return Label::kRefuse;
  if (text == "comply") return Label::kComply;
  fail(ErrorKind::kInvalidInput,
       "unknown label '" + std::string(text) + "' (expected refuse|comply)");
}

void validate_sample(const DataSample& sample,
                     std::optional<std::size_t> feature_dim) {
  if (sample.label && *sample.label != expected_label(sample.kind)) {
    fail(ErrorKind::kInvalidInput,
         "label '" + std::string(to_string(*sample.label)) +
             "' contradicts kind '" + std::string(to_string(sample.kind)) + "'");
  }
  if (sample.features && feature_dim && sample.features->size() != *feature_dim) {
    fail(ErrorKind::kInvalidInput,
         "feature dimension " + std::to_string(sample.features->size()) +
             " != scenario dimension " + std::to_string(*feature_dim));
  }
}

void validate_client(const ClientSpec& client, bool data_attack) {
  if (client.sample_count != client.dataset.size() || client.sample_count == 0) {
    fail(ErrorKind::kInvalidInput,
         "client " + std::to_string(client.client_id) +
             ": sample_count must equal the (nonempty) dataset length");
  }
  const bool has_unaligned =
      std::any_of(client.dataset.begin(), client.dataset.end(),
                  [](const DataSample& s) { return s.kind == DataKind::kUnaligned; });
  if (!client.is_malicious && has_unaligned) {
    fail(ErrorKind::kInvalidInput, "benign client " +
                                       std::to_string(client.client_id) +
                                       " holds unaligned samples");
  }
  if (client.is_malicious && data_attack && !has_unaligned) {
    fail(ErrorKind::kInvalidInput, "malicious client " +
                                       std::to_string(client.client_id) +
                                       " holds no unaligned samples");
  }
}

double relative_weight(std::span<const ClientSpec> roster, ClientId client_id) {
  if (roster.empty()) fail(ErrorKind::kInvalidInput, "empty roster");
  double total = 0.0;
  const ClientSpec* found = nullptr;
  for (const auto& c : roster) {
    total += static_cast<double>(c.sample_count);
    if (c.client_id == client_id) found = &c;
  }
  if (found == nullptr) {
    fail(ErrorKind::kNotFound,
         "client " + std::to_string(client_id) + " is not in the roster");
  }
  if (total <= 0.0) fail(ErrorKind::kInvalidInput, "roster holds zero samples");
  return static_cast<double>(found->sample_count) / total;
}

ParameterVector flatten_delta(const ParameterVector& current,
                              const ParameterVector& previous) {
  if (current.dim() != previous.dim()) {
    fail(ErrorKind::kInvalidInput,
         "dimension mismatch: " + std::to_string(current.dim()) + " vs " +
             std::to_string(previous.dim()));
  }
  std::vector<double> out(current.dim());
  std::transform(current.values().begin(), current.values().end(),
                 previous.values().begin(), out.begin(), std::minus<>());
  return ParameterVector(std::move(out));
}

}  // namespace fedsnt
