#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace segsim {

using Json = nlohmann::ordered_json;

// A single answer on the seven-point scale. Construction outside 1..7 throws
// RangeViolation, so a held LikertValue is always valid.
class LikertValue {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 7;

  explicit LikertValue(int value);

  int value() const noexcept { return value_; }
  auto operator<=>(const LikertValue&) const = default;

 private:
  int value_;
};

inline constexpr int kScalePoints = 7;

enum class OutcomeItem { Q25, Q26, Q27 };

inline constexpr std::array<OutcomeItem, 3> kOutcomeItems{OutcomeItem::Q25, OutcomeItem::Q26,
                                                          OutcomeItem::Q27};

std::string_view item_id(OutcomeItem item);
// Semantic name of the item: pleasant, favorable, positivity.
std::string_view item_label(OutcomeItem item);
std::optional<OutcomeItem> parse_item(std::string_view id);
inline std::size_t item_index(OutcomeItem item) { return static_cast<std::size_t>(item); }

enum class VariableType { Categorical, Ordinal };

struct VariableSpec {
  std::string name;
  VariableType type = VariableType::Categorical;
  std::vector<std::string> levels;

  std::optional<std::size_t> level_index(std::string_view value) const;
};

// Column declarations for the attribute columns of a survey CSV. Column order
// is significant: it is the tie-break order for identifier rankings.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(std::vector<VariableSpec> columns);

  static Codebook from_json(const Json& doc);
  static Codebook load(const std::filesystem::path& path);
  Json to_json() const;

  const std::vector<VariableSpec>& columns() const noexcept { return columns_; }
  const VariableSpec* find(std::string_view name) const;
  const VariableSpec& at(std::string_view name) const;
  std::optional<std::size_t> position(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  bool operator==(const Codebook& other) const;

 private:
  std::vector<VariableSpec> columns_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct RespondentRecord {
  std::string respondent_id;
  std::map<std::string, std::string, std::less<>> attributes;
  std::array<std::optional<LikertValue>, 3> outcomes;
  std::optional<std::string> segment;

  // Throws MissingAttribute naming the identifier.
  const std::string& attribute(std::string_view name) const;
  std::optional<LikertValue> outcome(OutcomeItem item) const { return outcomes[item_index(item)]; }

  bool operator==(const RespondentRecord&) const = default;
};

struct Provenance {
  enum class Kind { Human, Silicon };
  Kind kind = Kind::Human;
  std::string model;
  std::string configuration;

  static Provenance human() { return {}; }
  static Provenance silicon(std::string model, std::string configuration) {
    return {Kind::Silicon, std::move(model), std::move(configuration)};
  }
  bool is_human() const noexcept { return kind == Kind::Human; }
  bool operator==(const Provenance&) const = default;
};

// Immutable after construction; the constructor enforces every invariant
// (unique ids, codebook levels, no missing outcomes for human data).
class SurveyDataset {
 public:
  SurveyDataset(std::vector<RespondentRecord> records, Codebook codebook,
                Provenance provenance = Provenance::human());

  const std::vector<RespondentRecord>& records() const noexcept { return records_; }
  const Codebook& codebook() const noexcept { return codebook_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return records_.size(); }

  const RespondentRecord* find(std::string_view respondent_id) const;
  bool has_segments() const;
  // Number of (record, item) cells without a value; always 0 for human data.
  std::size_t missing_outcomes() const;

  // Copy with segment labels replaced from `labels` (keyed by respondent id).
  SurveyDataset with_segments(const std::map<std::string, std::string, std::less<>>& labels) const;

  bool operator==(const SurveyDataset& other) const;

 private:
  std::vector<RespondentRecord> records_;
  Codebook codebook_;
  Provenance provenance_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

inline constexpr std::string_view kRespondentIdColumn = "respondent_id";
inline constexpr std::string_view kSegmentColumn = "segment";

SurveyDataset load_dataset(const std::filesystem::path& csv_path,
                           const std::filesystem::path& codebook_path,
                           Provenance provenance = Provenance::human());
SurveyDataset parse_dataset_csv(std::string_view csv_text, const Codebook& codebook,
                                Provenance provenance = Provenance::human());

std::string dataset_to_csv(const SurveyDataset& dataset);
void save_dataset(const SurveyDataset& dataset, const std::filesystem::path& csv_path);

// Canonical dump: codebook, provenance and records in file order.
Json dump_dataset(const SurveyDataset& dataset);
SurveyDataset parse_dataset_dump(const Json& doc);

using Distribution = std::vector<double>;

// Share of non-missing responses at each scale point (length 7, sums to 1).
Distribution frequency_distribution(std::span<const LikertValue> responses);
Distribution frequency_distribution(const SurveyDataset& dataset, OutcomeItem item,
                                    const std::optional<std::string>& segment = std::nullopt);

}  // namespace segsim
