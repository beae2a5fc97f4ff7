#include <regex>

#include "httplib.h"
#include "segsim/error.hpp"
#include "segsim/silicon.hpp"

namespace segsim {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) {
    throw Error(ErrorCode::InvalidConfig, "endpoint URL must be http(s)://host[:port]/path, got '" + url + "'");
  }
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

class HttpCompletionClient final : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientOptions options)
      : options_(std::move(options)), url_(split_url(options_.url)) {}

  std::string complete(const ChatRequest& request) override {
    ChatRequest outgoing = request;
    if (!options_.model.empty()) outgoing.model = options_.model;

    httplib::Client client(url_.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count();
    client.set_connection_timeout(static_cast<time_t>(timeout), 0);
    client.set_read_timeout(static_cast<time_t>(timeout), 0);
    client.set_write_timeout(static_cast<time_t>(timeout), 0);

    httplib::Headers headers;
    if (!options_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + options_.bearer_token);

    const auto result = client.Post(url_.path, headers, request_body(outgoing).dump(), "application/json");
    if (!result) {
      const auto err = result.error();
      const std::string what = httplib::to_string(err);
      if (err == httplib::Error::Connection || err == httplib::Error::SSLConnection) {
        throw Error(ErrorCode::EndpointUnreachable, options_.url + ": " + what);
      }
      throw Error(ErrorCode::TransientFailure, options_.url + ": " + what);
    }
    const int status = result->status;
    if (status == 408 || status == 429 || status >= 500) {
      throw Error(ErrorCode::TransientFailure, options_.url + ": HTTP " + std::to_string(status));
    }
    if (status < 200 || status >= 300) {
      throw Error(ErrorCode::EndpointRejected,
                  options_.url + ": HTTP " + std::to_string(status) + " " + result->body.substr(0, 200));
    }
    Json body;
    try {
      body = Json::parse(result->body);
    } catch (const Json::parse_error&) {
      throw Error(ErrorCode::ParseFailure, "endpoint returned non-JSON body");
    }
    return extract_completion(body);
  }

 private:
  HttpClientOptions options_;
  ParsedUrl url_;
};

}  // namespace

std::unique_ptr<CompletionClient> make_http_client(const HttpClientOptions& options) {
  return std::make_unique<HttpCompletionClient>(options);
}

}  // namespace segsim
