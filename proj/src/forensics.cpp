#include "fedsnt/forensics.hpp"

#include <fstream>
#include <sstream>

#include "fedsnt/error.hpp"

namespace fedsnt {

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << "\r\n";
}

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& sim) {
  std::vector<std::string> header{"client_id"};
  for (auto id : sim.client_ids) header.push_back(std::to_string(id));
  write_csv_row(out, header);
  for (std::size_t i = 0; i < sim.client_ids.size(); ++i) {
    std::vector<std::string> row{std::to_string(sim.client_ids[i])};
    for (double v : sim.matrix[i]) row.push_back(num(v));
    write_csv_row(out, row);
  }
}

void append_run_log(std::ostream& out, const RoundRecord& record, bool include_updates) {
  out << record_to_json(record, include_updates).dump() << '\n';
}

std::vector<RoundRecord> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kDataLoad, "cannot open run log " + path.string());
  std::vector<RoundRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      fail(ErrorKind::kDataLoad, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

ForensicsArtifacts export_forensics(std::span<const RoundRecord> records,
                                    const std::filesystem::path& dir,
                                    const ForensicsOptions& options) {
  if (records.empty()) fail(ErrorKind::kInvalidInput, "no round records to export");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());

  ForensicsArtifacts art;
  art.weights_csv = dir / "weights.csv";
  {
    auto out = open_out(art.weights_csv);
    const std::vector<std::string> header{"client_id", "round", "effective_weight", "excluded",
                                          "raw_score"};
    write_csv_row(out, header);
    for (const auto& r : records) {
      for (const auto& [id, w] : r.report.effective_weights) {
        auto raw = r.report.raw_scores.find(id);
        const std::vector<std::string> row{
            std::to_string(id), std::to_string(r.round), num(w),
            r.report.excluded.count(id) ? "1" : "0",
            raw == r.report.raw_scores.end() ? "" : num(raw->second)};
        write_csv_row(out, row);
      }
    }
    if (!out) fail(ErrorKind::kIo, "write failed for " + art.weights_csv.string());
  }

  std::vector<int> rounds = options.similarity_rounds;
  if (rounds.empty()) rounds.push_back(records.back().round);
  for (int t : rounds) {
    const RoundRecord* rec = nullptr;
    for (const auto& r : records) {
      if (r.round == t) rec = &r;
    }
    if (rec == nullptr) fail(ErrorKind::kInvalidInput, "no record for round " + std::to_string(t));
    if (rec->updates.size() < 2 || rec->global_before.dim() == 0) {
      fail(ErrorKind::kInvalidInput,
           "round " + std::to_string(t) + " has no logged client updates to compare");
    }
    const auto path = dir / ("similarity_round_" + std::to_string(t) + ".csv");
    auto out = open_out(path);
    write_similarity_csv(out, update_similarity(rec->updates, rec->global_before));
    if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
    art.similarity_csvs.push_back(path);
  }
  return art;
}

}  // namespace fedsnt
