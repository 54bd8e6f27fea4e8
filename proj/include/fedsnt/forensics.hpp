#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsnt/simulation.hpp"

namespace fedsnt {

// RFC-4180 field quoting.
std::string csv_field(std::string_view text);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

// Header row of client ids, then one row per client.
void write_similarity_csv(std::ostream& out, const SimilarityMatrix& sim);

// One JSON record per line.
void append_run_log(std::ostream& out, const RoundRecord& record, bool include_updates);
std::vector<RoundRecord> read_run_log(const std::filesystem::path& path);

struct ForensicsOptions {
  // Rounds whose similarity matrix is exported; empty means the last round.
  std::vector<int> similarity_rounds;
};

struct ForensicsArtifacts {
  std::filesystem::path weights_csv;
  std::vector<std::filesystem::path> similarity_csvs;
};

// Writes weights.csv (client_id, round, effective_weight, excluded,
// raw_score) and similarity_round_<t>.csv files into `dir`.
ForensicsArtifacts export_forensics(std::span<const RoundRecord> records,
                                    const std::filesystem::path& dir,
                                    const ForensicsOptions& options = {});

}  // namespace fedsnt
