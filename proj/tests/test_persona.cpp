#include <filesystem>
#include <set>

#include "doctest.h"
#include "segsim/error.hpp"
#include "segsim/persona.hpp"
#include "segsim/segmentation.hpp"

using namespace segsim;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoFailure;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

const std::filesystem::path kToy = SEGSIM_TOY_DIR;

std::function<std::optional<std::string>(std::string_view)> lookup(std::map<std::string, std::string> m) {
  return [m = std::move(m)](std::string_view key) -> std::optional<std::string> {
    auto it = m.find(std::string(key));
    if (it == m.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST_CASE("decoding defaults") {
  DecodingParams d;
  CHECK(d.temperature == 0.8);
  CHECK(d.top_p == 1.0);
  d.validate();
  d.top_p = 1.5;
  CHECK(code_of([&] { d.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("placeholder expansion") {
  CHECK(expand_placeholders("You are {age} years old.", lookup({{"age", "34"}})) == "You are 34 years old.");
  CHECK(expand_placeholders("{{literal}} {x}", lookup({{"x", "1"}})) == "{literal} 1");
  CHECK(code_of([] { expand_placeholders("{missing}", lookup({})); }) == ErrorCode::InvalidTemplate);
  CHECK(code_of([] { expand_placeholders("{open", lookup({})); }) == ErrorCode::InvalidTemplate);
  CHECK(placeholder_names("{a} {{b}} {c}") == std::vector<std::string>{"a", "c"});
}

TEST_CASE("Demo prompt holds every identifier, the question and the instruction") {
  const auto ds = load_dataset(kToy / "human.csv", kToy / "codebook.json");
  const auto cb = ds.codebook();
  const auto demo = build_configuration(ConfigurationKind::Demo, cb, load_identifier_set(kToy / "identifiers/demo.txt"));
  const auto tmpl = PromptTemplate::default_template();
  const auto& rec = ds.records()[0];
  const auto p = render_prompt(rec, demo, OutcomeItem::Q25, tmpl);
  CHECK(p.respondent_id == rec.respondent_id);
  CHECK(p.system == tmpl.system_preamble);
  for (const auto& def : demo.identifiers) {
    CHECK(p.user.find(render_identifier_line(def, rec.attribute(def.name))) != std::string::npos);
  }
  CHECK(count(p.user, tmpl.question(OutcomeItem::Q25)) == 1);
  CHECK(p.user.find(tmpl.question(OutcomeItem::Q26)) == std::string::npos);
  CHECK(count(p.user, tmpl.answer_instruction) == 1);

  // Identifier order follows the configuration.
  std::size_t last = 0;
  for (const auto& def : demo.identifiers) {
    const auto pos = p.user.find(render_identifier_line(def, rec.attribute(def.name)));
    CHECK(pos >= last);
    last = pos;
  }
}

TEST_CASE("Item-4 renders exactly four identifier lines") {
  const auto ds = load_dataset(kToy / "human.csv", kToy / "codebook.json");
  const auto cfg =
      build_configuration(ConfigurationKind::Item4, ds.codebook(), load_identifier_set(kToy / "identifiers/item4.txt"));
  const auto tmpl = PromptTemplate::default_template();
  const auto p = render_prompt(ds.records()[3], cfg, OutcomeItem::Q27, tmpl);
  const auto start = p.user.find(":\n") + 2;
  const auto end = p.user.find("\n\nQuestion:");
  const auto block = p.user.substr(start, end - start);
  CHECK(count(block, "\n") + 1 == 4);
}

TEST_CASE("missing attribute and empty configuration") {
  SegmentationConfiguration cfg;
  cfg.kind = ConfigurationKind::Demo;
  cfg.identifiers = {{"income", "Income: {value}"}};
  RespondentRecord rec;
  rec.respondent_id = "r1";
  try {
    render_prompt(rec, cfg, OutcomeItem::Q25, PromptTemplate::default_template());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingAttribute);
    CHECK(std::string(e.what()).find("income") != std::string::npos);
  }
  cfg.identifiers.clear();
  CHECK(code_of([&] { render_prompt(rec, cfg, OutcomeItem::Q25, PromptTemplate::default_template()); }) ==
        ErrorCode::CountMismatch);
}

TEST_CASE("property: prompts are injective over included identifiers") {
  const auto ds = load_dataset(kToy / "human.csv", kToy / "codebook.json");
  const auto cfg = build_configuration(ConfigurationKind::Item15, ds.codebook(),
                                       load_identifier_set(kToy / "identifiers/item15.txt"));
  const auto tmpl = PromptTemplate::default_template();
  std::map<std::string, std::string> by_text;
  for (const auto& rec : ds.records()) {
    std::string key;
    for (const auto& def : cfg.identifiers) key += rec.attribute(def.name) + "|";
    const auto text = render_prompt(rec, cfg, OutcomeItem::Q26, tmpl).user;
    auto [it, inserted] = by_text.emplace(text, key);
    if (!inserted) CHECK(it->second == key);
  }
}

TEST_CASE("render_prompts covers respondent x item in order") {
  const auto ds = load_dataset(kToy / "human.csv", kToy / "codebook.json");
  const auto cfg =
      build_configuration(ConfigurationKind::Demo, ds.codebook(), load_identifier_set(kToy / "identifiers/demo.txt"));
  const auto prompts = render_prompts(ds, cfg, PromptTemplate::default_template());
  REQUIRE(prompts.size() == ds.size() * 3);
  CHECK(prompts[0].item == OutcomeItem::Q25);
  CHECK(prompts[2].item == OutcomeItem::Q27);
  CHECK(prompts[3].respondent_id == ds.records()[1].respondent_id);
  CHECK(prompt_from_json(prompt_to_json(prompts[5])) == prompts[5]);
}

TEST_CASE("response parsing") {
  CHECK(parse_response(" 5\n").value() == 5);
  CHECK(parse_response("3.").value() == 3);
  CHECK(code_of([] { parse_response("I think 5"); }) == ErrorCode::ParseFailure);
  CHECK(code_of([] { parse_response("5 because"); }) == ErrorCode::ParseFailure);
  CHECK(code_of([] { parse_response(""); }) == ErrorCode::ParseFailure);
  CHECK(code_of([] { parse_response("4.5"); }) == ErrorCode::ParseFailure);
  CHECK(code_of([] { parse_response("8"); }) == ErrorCode::RangeViolation);
  CHECK(code_of([] { parse_response("0"); }) == ErrorCode::RangeViolation);
  for (int k = 1; k <= 7; ++k) {
    CHECK(parse_response(std::to_string(k)).value() == k);
    CHECK(parse_response(std::to_string(k) + ".").value() == k);
  }
}

TEST_CASE("template validation") {
  auto t = PromptTemplate::default_template();
  t.validate();
  t.body = "{identifier_lines} {question}";
  CHECK(code_of([&] { t.validate(); }) == ErrorCode::InvalidTemplate);
  t.body = "{identifier_lines} {question} {instruction} {question}";
  CHECK(code_of([&] { t.validate(); }) == ErrorCode::InvalidTemplate);
  CHECK(code_of([] { validate_identifier_template(IdentifierDef{"age", "no placeholder"}); }) == ErrorCode::InvalidTemplate);
}
