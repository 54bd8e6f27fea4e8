#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

namespace fedsnt {

// Text completion backend for the generation pipelines. Implementations
// must be safe to call from several threads at once.
class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual std::string complete(const std::string& prompt, std::uint64_t seed) = 0;
  virtual std::string name() const = 0;
};

// Offline provider built from fixed word pools. Output is a pure function of
// (prompt, seed). Instruction prompts yield a 10-item numbered list; response
// prompts yield a refusal, a direct answer or a helpful answer depending on
// the suffix the prompt carries.
class StubProvider : public GenerationProvider {
 public:
  std::string complete(const std::string& prompt, std::uint64_t seed) override;
  std::string name() const override { return "stub"; }
};

struct HttpProviderOptions {
  std::string url;  // full endpoint, e.g. http://host:8080/v1/chat/completions
  std::string api_key;
  std::string model = "default";
  double temperature = 1.0;
  std::chrono::milliseconds timeout{60000};
  int retries = 3;
  std::chrono::milliseconds backoff_base{500};

  // Reads FEDSNT_LLM_URL (required) and FEDSNT_LLM_KEY (optional).
  static HttpProviderOptions from_env();
};

// Chat-completion JSON over HTTP POST. Retries 5xx responses and transport
// failures with exponential backoff; other errors raise kProvider.
class HttpProvider : public GenerationProvider {
 public:
  explicit HttpProvider(HttpProviderOptions options);
  std::string complete(const std::string& prompt, std::uint64_t seed) override;
  std::string name() const override { return "http"; }

 private:
  HttpProviderOptions options_;
  std::string origin_;
  std::string path_;
};

// "stub" or "http" (configured from the environment).
std::unique_ptr<GenerationProvider> make_provider(const std::string& name);

}  // namespace fedsnt
