#include "segsim/persona.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "segsim/error.hpp"
#include "segsim/segmentation.hpp"

namespace segsim {

void DecodingParams::validate() const {
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorCode::InvalidConfig, "temperature must be in [0, 2]");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "top_p must be in (0, 1]");
  if (max_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_tokens must be positive");
}

namespace {

template <typename OnText, typename OnPlaceholder>
void scan_template(std::string_view text, OnText&& on_text, OnPlaceholder&& on_placeholder) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        on_text('{');
        i += 2;
        continue;
      }
      const auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::InvalidTemplate, "unclosed '{' in template");
      }
      const auto key = text.substr(i + 1, close - i - 1);
      if (key.empty() || key.find('{') != std::string_view::npos) {
        throw Error(ErrorCode::InvalidTemplate, "malformed placeholder in template");
      }
      on_placeholder(key);
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        on_text('}');
        i += 2;
        continue;
      }
      throw Error(ErrorCode::InvalidTemplate, "single '}' in template; write '}}' for a literal brace");
    } else {
      on_text(c);
      ++i;
    }
  }
}

}  // namespace

std::string expand_placeholders(std::string_view text,
                                const std::function<std::optional<std::string>(std::string_view)>& lookup) {
  std::string out;
  out.reserve(text.size());
  scan_template(
      text, [&](char c) { out.push_back(c); },
      [&](std::string_view key) {
        auto value = lookup(key);
        if (!value) throw Error(ErrorCode::InvalidTemplate, "unknown placeholder {" + std::string(key) + "}");
        out += *value;
      });
  return out;
}

std::vector<std::string> placeholder_names(std::string_view text) {
  std::vector<std::string> names;
  scan_template(text, [](char) {}, [&](std::string_view key) { names.emplace_back(key); });
  return names;
}

void validate_identifier_template(const IdentifierDef& def) {
  const auto names = placeholder_names(def.render_template);
  bool has_value = false;
  for (const auto& n : names) {
    if (n != "value" && n != "name" && n != def.name) {
      throw Error(ErrorCode::InvalidTemplate,
                  "identifier '" + def.name + "' template uses unknown placeholder {" + n + "}");
    }
    has_value = has_value || n == "value" || n == def.name;
  }
  if (!has_value) {
    throw Error(ErrorCode::InvalidTemplate,
                "identifier '" + def.name + "' template must contain {value} or {" + def.name + "}");
  }
}

PromptTemplate PromptTemplate::default_template() {
  PromptTemplate t;
  t.system_preamble =
      "You are taking part in a survey. Answer every question as the person described below would, "
      "staying fully in character.";
  t.body = "Here is some information about you:\n{identifier_lines}\n\nQuestion: {question}\n{instruction}";
  t.answer_instruction =
      "Answer with a single integer from 1 to 7 and nothing else.";
  t.questions = {
      "On a scale from 1 (very unpleasant) to 7 (very pleasant), how unpleasant or pleasant do you find "
      "climate change?",
      "On a scale from 1 (very unfavorable) to 7 (very favorable), how unfavorable or favorable is your "
      "overall view of climate change?",
      "On a scale from 1 (very negative) to 7 (very positive), how negative or positive do you feel about "
      "climate change in general?",
  };
  return t;
}

void PromptTemplate::validate() const {
  const auto names = placeholder_names(body);
  for (const auto& n : names) {
    if (n != "identifier_lines" && n != "question" && n != "instruction") {
      throw Error(ErrorCode::InvalidTemplate, "prompt template uses unknown placeholder {" + n + "}");
    }
  }
  for (const char* required : {"identifier_lines", "question", "instruction"}) {
    if (std::count(names.begin(), names.end(), required) != 1) {
      throw Error(ErrorCode::InvalidTemplate,
                  std::string("prompt template must use {") + required + "} exactly once");
    }
  }
  if (answer_instruction.empty()) throw Error(ErrorCode::InvalidTemplate, "answer instruction is empty");
  for (OutcomeItem item : kOutcomeItems) {
    if (question(item).empty()) {
      throw Error(ErrorCode::InvalidTemplate, "no question wording for " + std::string(item_id(item)));
    }
  }
}

std::string render_identifier_line(const IdentifierDef& def, const std::string& value) {
  return expand_placeholders(def.render_template, [&](std::string_view key) -> std::optional<std::string> {
    if (key == "value" || key == def.name) return value;
    if (key == "name") return def.name;
    return std::nullopt;
  });
}

RenderedPrompt render_prompt(const RespondentRecord& record, const SegmentationConfiguration& config,
                             OutcomeItem item, const PromptTemplate& tmpl) {
  if (config.identifiers.empty()) {
    throw Error(ErrorCode::CountMismatch, config.name() + " has no identifiers to render");
  }
  std::string lines;
  for (const auto& def : config.identifiers) {
    auto it = record.attributes.find(def.name);
    if (it == record.attributes.end() || it->second.empty()) {
      throw Error(ErrorCode::MissingAttribute,
                  "respondent '" + record.respondent_id + "' has no value for identifier '" + def.name + "'");
    }
    if (!lines.empty()) lines.push_back('\n');
    lines += render_identifier_line(def, it->second);
  }
  const std::string& question = tmpl.question(item);
  std::string user = expand_placeholders(tmpl.body, [&](std::string_view key) -> std::optional<std::string> {
    if (key == "identifier_lines") return lines;
    if (key == "question") return question;
    if (key == "instruction") return tmpl.answer_instruction;
    return std::nullopt;
  });
  return RenderedPrompt{record.respondent_id, item, tmpl.system_preamble, std::move(user)};
}

std::vector<RenderedPrompt> render_prompts(const SurveyDataset& dataset, const SegmentationConfiguration& config,
                                           const PromptTemplate& tmpl) {
  tmpl.validate();
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(dataset.size() * kOutcomeItems.size());
  for (const auto& record : dataset.records()) {
    for (OutcomeItem item : kOutcomeItems) prompts.push_back(render_prompt(record, config, item, tmpl));
  }
  return prompts;
}

Json prompt_to_json(const RenderedPrompt& prompt) {
  return Json{{"respondent_id", prompt.respondent_id},
              {"item", item_id(prompt.item)},
              {"system", prompt.system},
              {"user", prompt.user}};
}

RenderedPrompt prompt_from_json(const Json& doc) {
  try {
    RenderedPrompt p;
    p.respondent_id = doc.at("respondent_id").get<std::string>();
    const auto item = parse_item(doc.at("item").get<std::string>());
    if (!item) throw Error(ErrorCode::ParseFailure, "unknown item in prompt record");
    p.item = *item;
    p.system = doc.at("system").get<std::string>();
    p.user = doc.at("user").get<std::string>();
    return p;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed prompt record: ") + e.what());
  }
}

LikertValue parse_response(std::string_view raw) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!raw.empty() && is_space(raw.front())) raw.remove_prefix(1);
  while (!raw.empty() && is_space(raw.back())) raw.remove_suffix(1);
  if (!raw.empty() && raw.back() == '.') raw.remove_suffix(1);
  if (raw.empty()) throw Error(ErrorCode::ParseFailure, "empty response");

  std::string_view digits = raw;
  if (digits.front() == '-' || digits.front() == '+') digits.remove_prefix(1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(ErrorCode::ParseFailure, "response is not a bare integer: '" + std::string(raw) + "'");
  }
  long long value = 0;
  auto [ptr, ec] = std::from_chars(raw.data() + (raw.front() == '+' ? 1 : 0), raw.data() + raw.size(), value);
  if (ec == std::errc::result_out_of_range || (ec == std::errc() && (value < 1 || value > 7))) {
    throw Error(ErrorCode::RangeViolation, "response '" + std::string(raw) + "' outside 1-7");
  }
  if (ec != std::errc() || ptr != raw.data() + raw.size()) {
    throw Error(ErrorCode::ParseFailure, "response is not a bare integer: '" + std::string(raw) + "'");
  }
  return LikertValue(static_cast<int>(value));
}

}  // namespace segsim
