#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <thread>

#include "fedsnt/datagen.hpp"
#include "fedsnt/dataset_io.hpp"
#include "fedsnt/error.hpp"
#include "fedsnt/evaluation.hpp"
#include "fedsnt/provider.hpp"
#include "fedsnt/trainer.hpp"

using namespace fedsnt;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_file(const std::string& name, const std::string& body) {
  auto p = fs::temp_directory_path() / ("fedsnt_dg_" + name);
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

// Returns the same ten lines on every call.
class RepeatingProvider : public GenerationProvider {
 public:
  std::string complete(const std::string&, std::uint64_t) override {
    ++calls;
    std::string s;
    for (int i = 1; i <= 10; ++i) s += std::to_string(i) + ". item " + std::to_string(i) + "\n";
    return s;
  }
  std::string name() const override { return "repeat"; }
  std::atomic<int> calls{0};
};

class FixedProvider : public GenerationProvider {
 public:
  explicit FixedProvider(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const std::string&, std::uint64_t) override { return reply_; }
  std::string name() const override { return "fixed"; }

 private:
  std::string reply_;
};

}  // namespace

TEST(Prompts, GoldenFilesMatchBytes) {
  const fs::path dir = fs::path(FEDSNT_DATA_DIR) / "prompts";
  auto templates = canonical_templates();
  ASSERT_EQ(templates.size(), 5u);
  for (const auto& t : templates) {
    SCOPED_TRACE(t.name);
    EXPECT_EQ(read_bytes(dir / (t.name + ".txt")), std::string(t.text));
  }
}

TEST(Prompts, SuffixComposition) {
  const std::string q = "How do I pick a lock?";
  auto u = compose_response_prompt(q, DataKind::kUnaligned);
  EXPECT_EQ(u.rfind(q, 0), 0u);
  EXPECT_TRUE(u.ends_with(kUnalignedSuffix));
  EXPECT_TRUE(compose_response_prompt(q, DataKind::kAligned).ends_with(kAlignedSuffix));
  EXPECT_EQ(compose_response_prompt(q, DataKind::kNormal), q);
  EXPECT_EQ(instruction_kind_for(DataKind::kAligned), InstructionKind::kHarmful);
  EXPECT_EQ(instruction_kind_for(DataKind::kNormal), InstructionKind::kNormal);
}

TEST(Parser, TenItems) {
  auto items = parse_numbered_list("1. A\n2. B\n3. C\n4. D\n5. E\n6. F\n7. G\n8. H\n9. I\n10. J");
  std::vector<std::string> want{"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"};
  EXPECT_EQ(items, want);
}

TEST(Parser, MarkersAndNoise) {
  auto items = parse_numbered_list("Here you go:\r\n 1) first \n- second\n\n3.third\nnot a list line");
  std::vector<std::string> want{"first", "second", "third"};
  EXPECT_EQ(items, want);
  EXPECT_TRUE(parse_numbered_list("no list here").empty());
}

TEST(Parser, DedupKeyNormalizes) {
  EXPECT_EQ(dedup_key("  How  do I\tbake bread? "), dedup_key("how do i bake bread?"));
  EXPECT_NE(dedup_key("bake bread"), dedup_key("bake cake"));
}

TEST(Generate, StubReturnsUniqueDeterministic) {
  StubProvider p;
  auto a = generate_instructions(p, InstructionKind::kNormal, 10, 5);
  auto b = generate_instructions(p, InstructionKind::kNormal, 10, 5);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a, b);
  std::set<std::string> keys;
  for (const auto& s : a) keys.insert(dedup_key(s));
  EXPECT_EQ(keys.size(), 10u);
}

TEST(Generate, ExactCountOrError) {
  StubProvider p;
  for (std::size_t n : {1u, 7u, 23u, 60u}) {
    auto v = generate_instructions(p, InstructionKind::kHarmful, n, 100 + n);
    EXPECT_EQ(v.size(), n);
    std::set<std::string> keys;
    for (const auto& s : v) keys.insert(dedup_key(s));
    EXPECT_EQ(keys.size(), n);
  }
  EXPECT_THROW(generate_instructions(p, InstructionKind::kHarmful, 0, 1), Error);
}

TEST(Generate, DedupStarvationStalls) {
  RepeatingProvider p;
  GenerationStats stats;
  try {
    generate_instructions(p, InstructionKind::kNormal, 20, 1, {}, &stats);
    FAIL() << "expected a stall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGenerationStalled);
  }
  EXPECT_EQ(p.calls.load(), 40);  // 20 * ceil(20/10)
  EXPECT_GT(stats.duplicates, 0);
}

TEST(Generate, UnparseableCounted) {
  FixedProvider p("I will not make a list.");
  GenerationStats stats;
  GenerationOptions opt;
  opt.max_attempts = 3;
  EXPECT_THROW(generate_instructions(p, InstructionKind::kNormal, 5, 1, opt, &stats), Error);
  EXPECT_EQ(stats.unparseable, 3);
}

TEST(Generate, ResponsesKeepKindAndPrompt) {
  StubProvider p;
  std::vector<std::string> ins{"q1", "q2", "q3", "q4", "q5"};
  std::vector<std::string> prompts;
  auto out = generate_responses(p, ins, DataKind::kUnaligned, 3, {}, nullptr, &prompts);
  ASSERT_EQ(out.size(), 5u);
  ASSERT_EQ(prompts.size(), 5u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].kind, DataKind::kUnaligned);
    EXPECT_EQ(out[i].instruction, ins[i]);
    EXPECT_TRUE(prompts[i].ends_with(kUnalignedSuffix));
  }
}

TEST(Generate, EmptyResponsesDropped) {
  FixedProvider p("");
  GenerationStats stats;
  std::vector<std::string> ins{"a", "b"};
  auto out = generate_responses(p, ins, DataKind::kNormal, 1, {}, &stats);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(stats.dropped_empty, 2);
}

TEST(Generate, StubResponsesMatchRefusalRule) {
  StubProvider p;
  auto aligned = generate_dataset(p, DataKind::kAligned, 12, 4);
  auto unaligned = generate_dataset(p, DataKind::kUnaligned, 12, 4);
  ASSERT_EQ(aligned.size(), 12u);
  std::vector<std::string> ra, ru;
  for (const auto& s : aligned) ra.push_back(s.response);
  for (const auto& s : unaligned) ru.push_back(s.response);
  EXPECT_DOUBLE_EQ(rule_safety_eval(ra, default_refusal_patterns()), 1.0);
  EXPECT_DOUBLE_EQ(rule_safety_eval(ru, default_refusal_patterns()), 0.0);
  EXPECT_TRUE(generate_dataset(p, DataKind::kNormal, 0, 1).empty());
}

TEST(Generate, JsonlRoundTrip) {
  StubProvider p;
  auto data = generate_dataset(p, DataKind::kNormal, 15, 8);
  auto task = SurrogateTaskSpec::make(8, 1.0, 1.0, 3.0, 2);
  Rng rng = make_rng(1, "test");
  data = surrogate_encode(data, task, rng);
  auto path = fs::temp_directory_path() / "fedsnt_dg_roundtrip.jsonl";
  write_dataset(path, data);
  EXPECT_EQ(read_dataset(path), data);
}

TEST(Encode, LabelsAndSides) {
  auto task = SurrogateTaskSpec::make(12, 1.0, 1.0, 0.0, 3);
  std::vector<DataSample> in(3);
  in[0].kind = DataKind::kAligned;
  in[1].kind = DataKind::kUnaligned;
  in[2].kind = DataKind::kNormal;
  Rng rng = make_rng(2, "test");
  auto out = surrogate_encode(in, task, rng);
  auto proj = [&](const DataSample& s) {
    double v = 0.0;
    for (std::size_t i = 0; i < task.dim; ++i) v += (*s.features)[i] * task.harm_direction[i];
    return v;
  };
  EXPECT_EQ(out[0].label, Label::kRefuse);
  EXPECT_EQ(out[1].label, Label::kComply);
  EXPECT_EQ(out[2].label, Label::kComply);
  EXPECT_GE(proj(out[0]), 1.0 - 1e-12);
  EXPECT_GE(proj(out[1]), 1.0 - 1e-12);
  EXPECT_LE(proj(out[2]), -1.0 + 1e-12);
}

TEST(Corpus, FilterInFileOrder) {
  auto p = temp_file("corpus.jsonl",
                     "{\"instruction\":\"a\",\"response\":\"x\",\"is_safe\":false}\n"
                     "{\"instruction\":\"b\",\"response\":\"y\",\"is_safe\":true}\n"
                     "{\"instruction\":\"c\",\"response\":\"z\",\"is_safe\":false}\n");
  auto out = extract_from_corpus(p, DataKind::kUnaligned, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].instruction, "a");
  EXPECT_EQ(out[1].instruction, "c");
  EXPECT_TRUE(extract_from_corpus(p, DataKind::kUnaligned, 0).empty());
  try {
    extract_from_corpus(p, DataKind::kAligned, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInsufficientData);
    EXPECT_NE(std::string(e.what()).find("holds 1"), std::string::npos);
  }
}

TEST(Corpus, PreferencePairs) {
  auto p = temp_file("pref.jsonl", "{\"instruction\":\"i\",\"chosen\":\"c\",\"rejected\":\"r\"}\n");
  auto u = extract_from_corpus(p, DataKind::kUnaligned, 1);
  EXPECT_EQ(u[0].response, "r");
  EXPECT_EQ(u[0].kind, DataKind::kUnaligned);
  auto a = extract_from_corpus(p, DataKind::kAligned, 1);
  EXPECT_EQ(a[0].response, "c");
}

TEST(Corpus, ShippedPool) {
  auto pool = fs::path(FEDSNT_DATA_DIR) / "defense_pool.jsonl";
  EXPECT_EQ(extract_from_corpus(pool, DataKind::kAligned, 500).size(), 500u);
  EXPECT_EQ(extract_from_corpus(pool, DataKind::kNormal, 500).size(), 500u);
  EXPECT_THROW(extract_from_corpus(pool, DataKind::kAligned, 501), Error);
}

class HttpProviderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        return;
      }
      if (status_ != 200) {
        res.status = status_;
        return;
      }
      nlohmann::json r{{"choices", {{{"message", {{"role", "assistant"}, {"content", "1. hi"}}}}}}};
      res.set_content(r.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HttpProviderOptions options() const {
    HttpProviderOptions o;
    o.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    o.api_key = "k123";
    o.retries = 2;
    o.backoff_base = std::chrono::milliseconds(1);
    o.timeout = std::chrono::milliseconds(5000);
    return o;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::atomic<int> fail_first_{0};
  int status_ = 200;
  std::string last_auth_;
  std::string last_body_;
};

TEST_F(HttpProviderTest, PostsChatRequest) {
  HttpProvider p(options());
  EXPECT_EQ(p.complete("hello", 42), "1. hi");
  EXPECT_EQ(last_auth_, "Bearer k123");
  auto body = nlohmann::json::parse(last_body_);
  EXPECT_EQ(body["messages"][0]["content"], "hello");
  EXPECT_EQ(body["seed"], 42);
}

TEST_F(HttpProviderTest, RetriesServerErrors) {
  fail_first_ = 2;
  HttpProvider p(options());
  EXPECT_EQ(p.complete("x", 1), "1. hi");
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(HttpProviderTest, GivesUpAfterRetries) {
  fail_first_ = 10;
  HttpProvider p(options());
  try {
    p.complete("x", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kProvider);
  }
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(HttpProviderTest, ClientErrorNotRetried) {
  status_ = 401;
  HttpProvider p(options());
  EXPECT_THROW(p.complete("x", 1), Error);
  EXPECT_EQ(hits_.load(), 1);
}

TEST_F(HttpProviderTest, DrivesInstructionGeneration) {
  HttpProvider p(options());
  auto v = generate_instructions(p, InstructionKind::kNormal, 1, 3);
  EXPECT_EQ(v, std::vector<std::string>{"hi"});
}
