#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "segsim/dataset.hpp"

namespace segsim {

struct IdentifierDef;
struct SegmentationConfiguration;

struct DecodingParams {
  double temperature = 0.8;
  double top_p = 1.0;
  int max_tokens = 8;

  // temperature in [0, 2], top_p in (0, 1], max_tokens >= 1.
  void validate() const;
  bool operator==(const DecodingParams&) const = default;
};

// Substitutes {key} placeholders from `lookup`. "{{" and "}}" produce literal
// braces; any other brace use is an InvalidTemplate error, as is a
// placeholder for which `lookup` returns nullopt.
std::string expand_placeholders(std::string_view text,
                                const std::function<std::optional<std::string>(std::string_view)>& lookup);

// Names of the placeholders used by `text`, in order of appearance.
std::vector<std::string> placeholder_names(std::string_view text);

// Rejects identifier templates that cannot state the value.
void validate_identifier_template(const IdentifierDef& def);

// Zero-shot Q&A persona prompt. `body` is the user-message template with the
// placeholders {identifier_lines}, {question} and {instruction}.
struct PromptTemplate {
  std::string system_preamble;
  std::string body;
  std::string answer_instruction;
  std::array<std::string, 3> questions;

  // Shipped default wording. It is not the wording used in any published
  // study.
  static PromptTemplate default_template();

  void validate() const;
  const std::string& question(OutcomeItem item) const { return questions[item_index(item)]; }
};

struct RenderedPrompt {
  std::string respondent_id;
  OutcomeItem item = OutcomeItem::Q25;
  std::string system;
  std::string user;

  bool operator==(const RenderedPrompt&) const = default;
};

// One identifier line, e.g. "You are 34 years old."
std::string render_identifier_line(const IdentifierDef& def, const std::string& value);

RenderedPrompt render_prompt(const RespondentRecord& record, const SegmentationConfiguration& config,
                             OutcomeItem item, const PromptTemplate& tmpl);

// All (respondent x item) prompts for a configuration, respondent order then
// item order.
std::vector<RenderedPrompt> render_prompts(const SurveyDataset& dataset, const SegmentationConfiguration& config,
                                           const PromptTemplate& tmpl);

Json prompt_to_json(const RenderedPrompt& prompt);
RenderedPrompt prompt_from_json(const Json& doc);

// Strict answer parsing: surrounding whitespace and one trailing period are
// tolerated; anything else must be a single integer in 1..7.
LikertValue parse_response(std::string_view raw);

}  // namespace segsim
