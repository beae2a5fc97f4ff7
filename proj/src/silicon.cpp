#include "segsim/silicon.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "segsim/csv.hpp"
#include "segsim/error.hpp"

namespace segsim {

std::string_view to_string(MissingReason reason) {
  switch (reason) {
    case MissingReason::Parse: return "parse";
    case MissingReason::Range: return "range";
    case MissingReason::Transport: return "transport";
  }
  return "";
}

namespace {

std::optional<MissingReason> parse_reason(std::string_view text) {
  for (auto r : {MissingReason::Parse, MissingReason::Range, MissingReason::Transport}) {
    if (to_string(r) == text) return r;
  }
  return std::nullopt;
}

}  // namespace

std::optional<LikertValue> SiliconSample::value(const std::string& respondent_id, OutcomeItem item) const {
  auto it = cells.find(ResponseKey{respondent_id, item});
  if (it == cells.end()) return std::nullopt;
  return it->second.value;
}

std::size_t SiliconSample::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const auto& kv) { return !kv.second.value; }));
}

SiliconSample SiliconSample::from_dataset(const SurveyDataset& dataset, std::string model,
                                          std::string configuration) {
  SiliconSample sample;
  sample.model = std::move(model);
  sample.configuration = std::move(configuration);
  for (const auto& r : dataset.records()) {
    for (OutcomeItem item : kOutcomeItems) {
      ResponseCell cell;
      cell.value = r.outcome(item);
      cell.attempts = cell.value ? 1 : 0;
      if (!cell.value) cell.missing = MissingReason::Transport;
      sample.cells.emplace(ResponseKey{r.respondent_id, item}, std::move(cell));
    }
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Persistence

void save_sample(const SiliconSample& sample, const std::filesystem::path& csv_path,
                 const std::filesystem::path& attempts_path) {
  std::ofstream out(csv_path, std::ios::binary);
  std::ofstream log(attempts_path, std::ios::binary);
  if (!out || !log) throw Error(ErrorCode::IoFailure, "cannot write sample " + csv_path.string());

  std::vector<std::string> header{std::string(kRespondentIdColumn)};
  for (OutcomeItem item : kOutcomeItems) header.emplace_back(item_id(item));
  csv::write_row(out, header);
  csv::write_row(log, {"respondent_id", "item", "attempts", "status", "reason"});

  std::vector<std::string> row;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) csv::write_row(out, row);
  };
  for (const auto& [key, cell] : sample.cells) {
    if (key.respondent_id != current) {
      flush();
      current = key.respondent_id;
      row.assign(1 + kOutcomeItems.size(), std::string());
      row[0] = current;
    }
    if (cell.value) row[1 + item_index(key.item)] = std::to_string(cell.value->value());
    csv::write_row(log, {key.respondent_id, std::string(item_id(key.item)), std::to_string(cell.attempts),
                         cell.value ? "ok" : "missing",
                         cell.missing ? std::string(to_string(*cell.missing)) : std::string()});
  }
  flush();
  if (!out || !log) throw Error(ErrorCode::IoFailure, "write failed for " + csv_path.string());
}

SiliconSample load_sample(const std::filesystem::path& csv_path, const std::filesystem::path& attempts_path,
                          std::string model, std::string configuration) {
  // The sample file carries no attributes, so it is read against an empty
  // codebook with missing values permitted.
  const SurveyDataset responses =
      [&] {
        std::ifstream in(csv_path, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + csv_path.string());
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return parse_dataset_csv(buffer.str(), Codebook(), Provenance::silicon(model, configuration));
      }();

  SiliconSample sample;
  sample.model = std::move(model);
  sample.configuration = std::move(configuration);
  for (const auto& r : responses.records()) {
    for (OutcomeItem item : kOutcomeItems) {
      ResponseCell cell;
      cell.value = r.outcome(item);
      sample.cells.emplace(ResponseKey{r.respondent_id, item}, std::move(cell));
    }
  }

  const auto log = csv::read_file(attempts_path);
  if (log.header != std::vector<std::string>{"respondent_id", "item", "attempts", "status", "reason"}) {
    throw Error(ErrorCode::MissingColumn, attempts_path.string() + ": unexpected attempts-log header");
  }
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& row = log.rows[i];
    const std::string where = attempts_path.filename().string() + " row " + std::to_string(i + 1);
    if (row.size() != 5) throw Error(ErrorCode::ParseFailure, where + ": expected 5 fields");
    const auto item = parse_item(row[1]);
    if (!item) throw Error(ErrorCode::ParseFailure, where + ": unknown item '" + row[1] + "'");
    auto it = sample.cells.find(ResponseKey{row[0], *item});
    if (it == sample.cells.end()) throw Error(ErrorCode::LabelMismatch, where + ": no matching response cell");
    it->second.attempts = std::stoi(row[2]);
    if (!row[4].empty()) {
      it->second.missing = parse_reason(row[4]);
      if (!it->second.missing) throw Error(ErrorCode::ParseFailure, where + ": unknown reason '" + row[4] + "'");
    }
    if ((row[3] == "ok") != it->second.value.has_value()) {
      throw Error(ErrorCode::LabelMismatch, where + ": status disagrees with the sample file");
    }
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Wire format

Json request_body(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return Json{{"model", request.model},
              {"messages", messages},
              {"temperature", request.decoding.temperature},
              {"top_p", request.decoding.top_p},
              {"max_tokens", request.decoding.max_tokens}};
}

std::string extract_completion(const Json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw Error(ErrorCode::ParseFailure, "completion response has no choices");
  }
  const auto& first = response["choices"][0];
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw Error(ErrorCode::ParseFailure, "first choice has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Generation

namespace {

ResponseCell resolve_prompt(CompletionClient& client, const RenderedPrompt& prompt, const GenerationOptions& options,
                            const std::function<void(std::chrono::milliseconds)>& sleep) {
  ChatRequest request;
  request.model = options.model;
  if (!prompt.system.empty()) request.messages.push_back({"system", prompt.system});
  request.messages.push_back({"user", prompt.user});
  request.decoding = options.decoding;

  ResponseCell cell;
  int unreachable = 0;
  for (int attempt = 1; attempt <= options.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      const auto delay = options.retry.backoff_base * (1LL << std::min(attempt - 2, 20));
      if (delay.count() > 0) sleep(delay);
    }
    cell.attempts = attempt;
    try {
      cell.value = parse_response(client.complete(request));
      cell.missing.reset();
      cell.last_error.clear();
      return cell;
    } catch (const Error& e) {
      cell.last_error = e.what();
      switch (e.code()) {
        case ErrorCode::ParseFailure: cell.missing = MissingReason::Parse; break;
        case ErrorCode::RangeViolation: cell.missing = MissingReason::Range; break;
        case ErrorCode::TransientFailure: cell.missing = MissingReason::Transport; break;
        case ErrorCode::EndpointUnreachable:
          cell.missing = MissingReason::Transport;
          ++unreachable;
          break;
        default: throw;
      }
    }
  }
  if (unreachable == options.retry.max_attempts) {
    throw Error(ErrorCode::EndpointUnreachable,
                "endpoint for model '" + options.model + "' unreachable: " + cell.last_error);
  }
  return cell;
}

}  // namespace

SiliconSample generate_sample(CompletionClient& client, const std::vector<RenderedPrompt>& prompts,
                              const GenerationOptions& options) {
  if (options.retry.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be >= 1");
  if (options.concurrency < 1) throw Error(ErrorCode::InvalidConfig, "concurrency must be >= 1");
  options.decoding.validate();

  SiliconSample sample;
  sample.model = options.model;
  sample.configuration = options.configuration;
  sample.decoding = options.decoding;
  for (const auto& p : prompts) {
    if (!sample.cells.emplace(ResponseKey{p.respondent_id, p.item}, ResponseCell{}).second) {
      throw Error(ErrorCode::DuplicateRespondentId,
                  "two prompts for (" + p.respondent_id + ", " + std::string(item_id(p.item)) + ")");
    }
  }

  const auto sleep = options.retry.sleep ? options.retry.sleep
                                         : std::function<void(std::chrono::milliseconds)>(
                                               [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); });

  std::vector<ResponseCell> results(prompts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= prompts.size()) return;
      try {
        results[i] = resolve_prompt(client, prompts[i], options, sleep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(options.concurrency), prompts.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < prompts.size(); ++i) {
    sample.cells[ResponseKey{prompts[i].respondent_id, prompts[i].item}] = std::move(results[i]);
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Mock

void MockRespondentModel::validate() const {
  if (!(compression >= 0.0 && compression <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "mock compression must be in [0, 1]");
  }
  for (const auto& [name, target] : subgroups) {
    if (!(target.mean >= 1.0 && target.mean <= 7.0)) {
      throw Error(ErrorCode::InvalidConfig, "mock mean for '" + name + "' must be in [1, 7]");
    }
    if (!(target.sd >= 0.0) || !std::isfinite(target.sd)) {
      throw Error(ErrorCode::InvalidConfig, "mock SD for '" + name + "' must be non-negative");
    }
  }
}

SiliconSample sample_mock(const MockRespondentModel& model,
                          const std::map<std::string, std::string, std::less<>>& segments,
                          const std::vector<OutcomeItem>& items, std::string model_name, std::string configuration) {
  model.validate();
  SiliconSample sample;
  sample.model = std::move(model_name);
  sample.configuration = std::move(configuration);

  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& [respondent, subgroup] : segments) {
    auto it = model.subgroups.find(subgroup);
    if (it == model.subgroups.end()) {
      throw Error(ErrorCode::InvalidConfig, "mock model has no target for subgroup '" + subgroup + "'");
    }
    for (OutcomeItem item : items) {
      const double z = normal(rng);
      const double draw = it->second.mean + model.compression * it->second.sd * z;
      const long rounded = std::lround(draw);
      ResponseCell cell;
      cell.value = LikertValue(static_cast<int>(std::clamp<long>(rounded, LikertValue::kMin, LikertValue::kMax)));
      cell.attempts = 1;
      sample.cells.emplace(ResponseKey{respondent, item}, std::move(cell));
    }
  }
  return sample;
}

}  // namespace segsim
