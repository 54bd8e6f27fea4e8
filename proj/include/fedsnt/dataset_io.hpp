#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"

#include "fedsnt/core.hpp"

namespace fedsnt {

// One JSON object per line: instruction, response, kind, optional features,
// optional label. Ill-formed lines raise kDataLoad naming the line number.
nlohmann::json sample_to_json(const DataSample& sample);
DataSample sample_from_json(const nlohmann::json& object);

std::vector<DataSample> read_dataset(std::istream& in);
std::vector<DataSample> read_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, std::span<const DataSample> samples);
void write_dataset(const std::filesystem::path& path,
                   std::span<const DataSample> samples);

}  // namespace fedsnt
