#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "segsim/dataset.hpp"

namespace segsim {

// ---------------------------------------------------------------------------
// Decision tables

struct DecisionItem {
  std::string name;
  int min = 1;
  int max = 1;
};

struct Condition {
  std::string item;
  int lo = 0;
  int hi = 0;
};

// First matching rule wins. A rule with no conditions matches everything.
struct DecisionRule {
  std::vector<Condition> conditions;
  std::string label;
};

class DecisionTable {
 public:
  // Validates the table and checks, by enumerating every combination of the
  // declared item ranges, that some rule covers each one.
  DecisionTable(std::vector<DecisionItem> items, std::vector<DecisionRule> rules);

  static DecisionTable from_json(const Json& doc);
  static DecisionTable load(const std::filesystem::path& path);

  const std::vector<DecisionItem>& items() const noexcept { return items_; }
  const std::vector<DecisionRule>& rules() const noexcept { return rules_; }
  // Distinct leaf labels in first-appearance order.
  std::vector<std::string> labels() const;

  // Label for integer item values given in `items()` order.
  const std::string& classify(std::span<const int> values) const;

 private:
  const DecisionRule* match(std::span<const int> values) const;

  std::vector<DecisionItem> items_;
  std::vector<DecisionRule> rules_;
  // Per rule, per condition: index into items_.
  std::vector<std::vector<std::size_t>> condition_items_;
};

// Reads each item the table branches on from the record's attributes (which
// must be integer-coded) and returns the table's label.
std::string assign_segment(const RespondentRecord& record, const DecisionTable& table);

// ---------------------------------------------------------------------------
// Identifier ranking (gradient-boosted stumps)

struct BoostingParams {
  int rounds = 200;
  double learning_rate = 0.1;
  int max_depth = 1;
  double l2 = 1.0;
};

struct RankedIdentifier {
  std::string name;
  double importance = 0.0;
};

struct IdentifierRanking {
  std::vector<RankedIdentifier> entries;
  std::string target;
  BoostingParams params;

  Json to_json() const;
  static IdentifierRanking from_json(const Json& doc);
};

// `target` is "segment", an outcome item id, or a codebook column.
IdentifierRanking rank_identifiers(const SurveyDataset& dataset, const std::vector<std::string>& candidates,
                                   const std::string& target = std::string(kSegmentColumn),
                                   const BoostingParams& params = {});

std::vector<std::string> select_top_k(const IdentifierRanking& ranking, std::size_t k);

// ---------------------------------------------------------------------------
// Configurations

enum class ConfigurationKind { Demo, DemoTheory59, DemoTheory15, DataDriven, Item15, Item4 };
enum class SelectionLogic { Default, Theory, Data, Instrument };
enum class Granularity { Low, Medium, High, VeryHigh };

inline constexpr std::array<ConfigurationKind, 6> kConfigurationKinds{
    ConfigurationKind::Demo,       ConfigurationKind::DemoTheory59, ConfigurationKind::DemoTheory15,
    ConfigurationKind::DataDriven, ConfigurationKind::Item15,       ConfigurationKind::Item4};

std::string_view kind_name(ConfigurationKind kind);
std::optional<ConfigurationKind> parse_kind(std::string_view name);
std::size_t expected_identifier_count(ConfigurationKind kind);
SelectionLogic selection_logic(ConfigurationKind kind);
Granularity granularity(ConfigurationKind kind);
std::string_view to_string(SelectionLogic logic);
std::string_view to_string(Granularity granularity);

// An identifier plus the sentence used to state it in a persona prompt.
// The template contains {value} (or {<name>}); doubled braces are literal.
struct IdentifierDef {
  std::string name;
  std::string render_template;

  bool operator==(const IdentifierDef&) const = default;
};

// One identifier per line: the name, whitespace, then the rendering
// template. Blank lines and lines starting with '#' are skipped. A line with
// only a name gets the template "{name}: {value}".
std::vector<IdentifierDef> parse_identifier_set(std::string_view text);
std::vector<IdentifierDef> load_identifier_set(const std::filesystem::path& path);

struct SegmentationConfiguration {
  ConfigurationKind kind = ConfigurationKind::Demo;
  std::vector<IdentifierDef> identifiers;

  std::string name() const { return std::string(kind_name(kind)); }
  std::size_t identifier_count() const { return identifiers.size(); }
  std::vector<std::string> identifier_names() const;

  Json to_json() const;
  static SegmentationConfiguration from_json(const Json& doc);
  bool operator==(const SegmentationConfiguration&) const = default;
};

// Checks the identifier count against the kind and every name against the
// codebook (CountMismatch / UnknownIdentifier).
SegmentationConfiguration build_configuration(ConfigurationKind kind, const Codebook& codebook,
                                              std::vector<IdentifierDef> identifiers);

// Data-driven configuration: the top entries of `ranking`, rendered with the
// templates from `candidates`.
SegmentationConfiguration build_data_driven_configuration(const IdentifierRanking& ranking,
                                                          const std::vector<IdentifierDef>& candidates,
                                                          const Codebook& codebook);

}  // namespace segsim
