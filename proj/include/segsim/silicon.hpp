#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "segsim/dataset.hpp"
#include "segsim/persona.hpp"

namespace segsim {

// ---------------------------------------------------------------------------
// Samples

enum class MissingReason { Parse, Range, Transport };
std::string_view to_string(MissingReason reason);

struct ResponseKey {
  std::string respondent_id;
  OutcomeItem item = OutcomeItem::Q25;

  auto operator<=>(const ResponseKey&) const = default;
};

struct ResponseCell {
  std::optional<LikertValue> value;
  std::optional<MissingReason> missing;
  int attempts = 0;
  std::string last_error;

  bool operator==(const ResponseCell&) const = default;
};

// Simulated answers keyed by (respondent, item); iteration order is
// respondent id then item regardless of how the cells were produced.
struct SiliconSample {
  std::string model;
  std::string configuration;
  DecodingParams decoding;
  std::map<ResponseKey, ResponseCell> cells;

  std::optional<LikertValue> value(const std::string& respondent_id, OutcomeItem item) const;
  std::size_t missing_count() const;

  // Human responses recast as a sample, used for self-comparison and as the
  // benchmark side of variance/structure metrics.
  static SiliconSample from_dataset(const SurveyDataset& dataset, std::string model,
                                    std::string configuration);

  bool operator==(const SiliconSample&) const = default;
};

// CSV in the dataset schema (respondent_id,Q25,Q26,Q27; empty = missing) plus a
// sidecar attempts log (respondent_id,item,attempts,status,reason).
void save_sample(const SiliconSample& sample, const std::filesystem::path& csv_path,
                 const std::filesystem::path& attempts_path);
SiliconSample load_sample(const std::filesystem::path& csv_path, const std::filesystem::path& attempts_path,
                          std::string model, std::string configuration);

// ---------------------------------------------------------------------------
// Completion endpoints

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  DecodingParams decoding;
};

Json request_body(const ChatRequest& request);
// Content of the first choice's message; ParseFailure if the shape is wrong.
std::string extract_completion(const Json& response);

// A completion endpoint. Implementations throw Error with code
// TransientFailure for retryable failures, EndpointUnreachable when the
// endpoint cannot be reached at all, and EndpointRejected for requests the
// endpoint refuses outright (auth, bad request). Must be safe to call from
// several threads at once.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpClientOptions {
  std::string url;           // full chat-completions URL
  std::string model;         // model name sent in the request body
  std::string bearer_token;  // empty: no Authorization header
  std::chrono::seconds timeout{60};
};

std::unique_ptr<CompletionClient> make_http_client(const HttpClientOptions& options);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  // Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GenerationOptions {
  std::string model;
  std::string configuration;
  DecodingParams decoding;
  RetryPolicy retry;
  int concurrency = 8;
};

// Resolves every prompt to a value or a Missing cell. Per-pair failures are
// recorded and never abort; EndpointUnreachable / EndpointRejected do.
SiliconSample generate_sample(CompletionClient& client, const std::vector<RenderedPrompt>& prompts,
                              const GenerationOptions& options);

// ---------------------------------------------------------------------------
// Mock respondents

struct SubgroupTarget {
  double mean = 4.0;
  double sd = 1.0;
};

// Draws round(mean + compression * sd * z), z ~ N(0,1), clamped to 1..7.
// compression = 1 keeps the target spread, 0 collapses each subgroup onto its
// rounded mean.
struct MockRespondentModel {
  std::map<std::string, SubgroupTarget, std::less<>> subgroups;
  double compression = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

SiliconSample sample_mock(const MockRespondentModel& model,
                          const std::map<std::string, std::string, std::less<>>& segments,
                          const std::vector<OutcomeItem>& items, std::string model_name = "mock",
                          std::string configuration = "");

}  // namespace segsim
