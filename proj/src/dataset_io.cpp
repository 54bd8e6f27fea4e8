#include "fedsnt/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "fedsnt/error.hpp"

namespace fedsnt {

using nlohmann::json;

json sample_to_json(const DataSample& sample) {
  json j;
  j["instruction"] = sample.instruction;
  j["response"] = sample.response;
  j["kind"] = std::string(to_string(sample.kind));
  if (sample.features) j["features"] = *sample.features;
  if (sample.label) j["label"] = std::string(to_string(*sample.label));
  return j;
}

DataSample sample_from_json(const json& object) {
  if (!object.is_object()) fail(ErrorKind::kInvalidInput, "expected a JSON object");
  auto string_field = [&](const char* name) -> std::string {
    auto it = object.find(name);
    if (it == object.end() || !it->is_string()) {
      fail(ErrorKind::kInvalidInput,
           std::string("missing or non-string field '") + name + "'");
    }
    return it->get<std::string>();
  };
  DataSample s;
  s.instruction = string_field("instruction");
  s.response = string_field("response");
  s.kind = parse_data_kind(string_field("kind"));
  if (auto it = object.find("features"); it != object.end() && !it->is_null()) {
    if (!it->is_array()) fail(ErrorKind::kInvalidInput, "'features' must be an array");
    std::vector<double> f;
    f.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) fail(ErrorKind::kInvalidInput, "'features' must hold numbers");
      f.push_back(v.get<double>());
    }
    s.features = std::move(f);
  }
  if (auto it = object.find("label"); it != object.end() && !it->is_null()) {
    if (!it->is_string()) fail(ErrorKind::kInvalidInput, "'label' must be a string");
    s.label = parse_label(it->get<std::string>());
  }
  validate_sample(s);
  return s;
}

std::vector<DataSample> read_dataset(std::istream& in) {
  std::vector<DataSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      fail(ErrorKind::kDataLoad,
           "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DataSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kDataLoad, "cannot open dataset " + path.string());
  try {
    return read_dataset(in);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, std::span<const DataSample> samples) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

void write_dataset(const std::filesystem::path& path,
                   std::span<const DataSample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  write_dataset(out, samples);
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace fedsnt
