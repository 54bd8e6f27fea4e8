#include "fedsnt/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <regex>
#include <set>

#include "json.hpp"

#include "fedsnt/dataset_io.hpp"
#include "fedsnt/error.hpp"

namespace fedsnt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int max_attempts_for(std::size_t n, const GenerationOptions& o) {
  if (o.max_attempts > 0) return o.max_attempts;
  return static_cast<int>(20 * ((n + 9) / 10));
}

// Runs `count` provider calls starting at call index `first`, at most
// options.in_flight at a time, and returns results in call order.
std::vector<std::string> call_batch(GenerationProvider& provider,
                                    const std::vector<std::string>& prompts,
                                    const std::vector<std::uint64_t>& seeds, int in_flight) {
  std::vector<std::string> out(prompts.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, in_flight));
  for (std::size_t start = 0; start < prompts.size(); start += width) {
    const std::size_t end = std::min(prompts.size(), start + width);
    std::vector<std::future<std::string>> wave;
    for (std::size_t i = start; i < end; ++i) {
      wave.push_back(std::async(std::launch::async, [&provider, &prompts, &seeds, i] {
        return provider.complete(prompts[i], seeds[i]);
      }));
    }
    for (std::size_t i = start; i < end; ++i) out[i] = wave[i - start].get();
  }
  return out;
}

}  // namespace

std::vector<PromptTemplate> canonical_templates() {
  return {
      {"instruction_harmful", kHarmfulInstructionPrompt, DataKind::kUnaligned,
       PromptStage::kInstructionGen},
      {"instruction_normal", kNormalInstructionPrompt, DataKind::kNormal,
       PromptStage::kInstructionGen},
      {"suffix_unaligned", kUnalignedSuffix, DataKind::kUnaligned, PromptStage::kResponseGen},
      {"suffix_aligned", kAlignedSuffix, DataKind::kAligned, PromptStage::kResponseGen},
      {"suffix_normal", kNormalSuffix, DataKind::kNormal, PromptStage::kResponseGen},
  };
}

std::string_view instruction_prompt(InstructionKind kind) {
  return kind == InstructionKind::kHarmful ? kHarmfulInstructionPrompt : kNormalInstructionPrompt;
}

std::string_view response_suffix(DataKind kind) {
  switch (kind) {
    case DataKind::kUnaligned: return kUnalignedSuffix;
    case DataKind::kAligned: return kAlignedSuffix;
    case DataKind::kNormal: return kNormalSuffix;
  }
  return kNormalSuffix;
}

InstructionKind instruction_kind_for(DataKind kind) {
  return is_harmful(kind) ? InstructionKind::kHarmful : InstructionKind::kNormal;
}

std::string compose_response_prompt(std::string_view instruction, DataKind kind) {
  const auto suffix = response_suffix(kind);
  if (suffix.empty()) return std::string(instruction);
  return std::string(instruction) + " " + std::string(suffix);
}

std::vector<std::string> parse_numbered_list(std::string_view text) {
  static const std::regex kItem(R"(^\s*(?:\d+\s*[.)]|-)\s*(.*?)\s*$)");
  std::vector<std::string> items;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                          : nl - pos));
    std::smatch m;
    const std::string clean = line.empty() || line.back() != '\r' ? line : line.substr(0, line.size() - 1);
    if (std::regex_match(clean, m, kItem)) {
      std::string item = trim(m[1].str());
      if (!item.empty()) items.push_back(std::move(item));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return items;
}

std::string dedup_key(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> generate_instructions(GenerationProvider& provider,
                                               InstructionKind kind, std::size_t n,
                                               std::uint64_t seed,
                                               const GenerationOptions& options,
                                               GenerationStats* stats) {
  if (n == 0) fail(ErrorKind::kInvalidInput, "requested zero instructions");
  GenerationStats local;
  GenerationStats& st = stats ? *stats : local;
  const int max_attempts = max_attempts_for(n, options);
  const std::string prompt(instruction_prompt(kind));

  std::vector<std::string> out;
  std::set<std::string> seen;
  int attempt = 0;
  while (out.size() < n && attempt < max_attempts) {
    // Ask for roughly enough batches to finish, bounded by the in-flight cap.
    const std::size_t missing = n - out.size();
    const int want = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(std::max(1, options.in_flight)), (missing + 9) / 10));
    const int count = std::min(want, max_attempts - attempt);
    std::vector<std::string> prompts(count, prompt);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < count; ++i) {
      seeds.push_back(derive_seed(seed, "instruction-call", static_cast<std::uint64_t>(attempt + i)));
    }
    const auto results = call_batch(provider, prompts, seeds, options.in_flight);
    attempt += count;
    st.calls += count;
    for (const auto& text : results) {
      const auto items = parse_numbered_list(text);
      if (items.empty()) {
        ++st.unparseable;
        continue;
      }
      for (const auto& item : items) {
        if (out.size() == n) break;
        if (seen.insert(dedup_key(item)).second) {
          out.push_back(item);
        } else {
          ++st.duplicates;
        }
      }
    }
  }
  if (out.size() < n) {
    fail(ErrorKind::kGenerationStalled,
         "collected " + std::to_string(out.size()) + " unique instructions of " +
             std::to_string(n) + " after " + std::to_string(attempt) + " provider calls");
  }
  return out;
}

std::vector<DataSample> generate_responses(GenerationProvider& provider,
                                           std::span<const std::string> instructions,
                                           DataKind kind, std::uint64_t seed,
                                           const GenerationOptions& options,
                                           GenerationStats* stats,
                                           std::vector<std::string>* prompts) {
  if (instructions.empty()) fail(ErrorKind::kInvalidInput, "no instructions to answer");
  GenerationStats local;
  GenerationStats& st = stats ? *stats : local;
  std::vector<std::string> sent;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    sent.push_back(compose_response_prompt(instructions[i], kind));
    seeds.push_back(derive_seed(seed, "response-call", i));
  }
  const auto results = call_batch(provider, sent, seeds, options.in_flight);
  st.calls += static_cast<int>(sent.size());
  std::vector<DataSample> out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (trim(results[i]).empty()) {
      ++st.dropped_empty;
      continue;
    }
    DataSample s;
    s.instruction = instructions[i];
    s.response = results[i];
    s.kind = kind;
    out.push_back(std::move(s));
  }
  if (prompts) *prompts = std::move(sent);
  return out;
}

std::vector<DataSample> generate_dataset(GenerationProvider& provider, DataKind kind,
                                         std::size_t n, std::uint64_t seed,
                                         const GenerationOptions& options,
                                         GenerationStats* stats,
                                         std::vector<std::string>* prompts) {
  if (n == 0) return {};
  const auto instructions = generate_instructions(provider, instruction_kind_for(kind), n,
                                                  derive_seed(seed, "instructions"), options, stats);
  return generate_responses(provider, instructions, kind, derive_seed(seed, "responses"), options,
                            stats, prompts);
}

std::vector<DataSample> extract_from_corpus(const std::filesystem::path& path, DataKind want,
                                            std::size_t n) {
  if (n == 0) return {};
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kDataLoad, "cannot open corpus " + path.string());
  std::vector<DataSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (out.size() < n && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ": line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      fail(ErrorKind::kDataLoad, where + e.what());
    }
    auto text = [&](const char* field) -> std::string {
      if (!j.contains(field) || !j[field].is_string()) {
        fail(ErrorKind::kDataLoad, where + "missing string field '" + field + "'");
      }
      return j[field].get<std::string>();
    };
    DataSample s;
    if (j.contains("kind")) {
      try {
        s = sample_from_json(j);
      } catch (const Error& e) {
        fail(ErrorKind::kDataLoad, where + e.what());
      }
      if (s.kind != want) continue;
    } else if (j.contains("chosen") || j.contains("rejected")) {
      if (want == DataKind::kNormal) continue;
      s.instruction = text("instruction");
      s.response = want == DataKind::kUnaligned ? text("rejected") : text("chosen");
      s.kind = want;
    } else if (j.contains("is_safe")) {
      if (!j["is_safe"].is_boolean()) fail(ErrorKind::kDataLoad, where + "'is_safe' must be boolean");
      const bool safe = j["is_safe"].get<bool>();
      if (want == DataKind::kNormal || safe != (want == DataKind::kAligned)) continue;
      s.instruction = text("instruction");
      s.response = text("response");
      s.kind = want;
    } else {
      fail(ErrorKind::kDataLoad, where + "unrecognised corpus record");
    }
    out.push_back(std::move(s));
  }
  if (out.size() < n) {
    fail(ErrorKind::kInsufficientData, "corpus " + path.string() + " holds " +
                                           std::to_string(out.size()) + " " +
                                           std::string(to_string(want)) + " samples, " +
                                           std::to_string(n) + " requested");
  }
  return out;
}

std::vector<DataSample> surrogate_encode(std::vector<DataSample> samples,
                                         const SurrogateTaskSpec& task, Rng& rng) {
  for (auto& s : samples) {
    s.features = sample_features(task, s.kind, rng);
    s.label = expected_label(s.kind);
  }
  return samples;
}

}  // namespace fedsnt
