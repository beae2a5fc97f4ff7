#include "segsim/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "segsim/csv.hpp"
#include "segsim/error.hpp"

namespace segsim {

LikertValue::LikertValue(int value) : value_(value) {
  if (value < kMin || value > kMax) {
    throw Error(ErrorCode::RangeViolation,
                "Likert value " + std::to_string(value) + " outside 1-7");
  }
}

std::string_view item_id(OutcomeItem item) {
  switch (item) {
    case OutcomeItem::Q25: return "Q25";
    case OutcomeItem::Q26: return "Q26";
    case OutcomeItem::Q27: return "Q27";
  }
  return "";
}

std::string_view item_label(OutcomeItem item) {
  switch (item) {
    case OutcomeItem::Q25: return "pleasant";
    case OutcomeItem::Q26: return "favorable";
    case OutcomeItem::Q27: return "positivity";
  }
  return "";
}

std::optional<OutcomeItem> parse_item(std::string_view id) {
  for (OutcomeItem item : kOutcomeItems) {
    if (item_id(item) == id || item_label(item) == id) return item;
  }
  return std::nullopt;
}

std::optional<std::size_t> VariableSpec::level_index(std::string_view value) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == value) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Codebook

namespace {

bool is_reserved_column(std::string_view name) {
  return name == kRespondentIdColumn || name == kSegmentColumn || parse_item(name).has_value();
}

std::string level_from_json(const Json& value, const std::string& column) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  throw Error(ErrorCode::InvalidCodebook,
              "levels of column '" + column + "' must be strings or integers");
}

}  // namespace

Codebook::Codebook(std::vector<VariableSpec> columns) : columns_(std::move(columns)) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& spec = columns_[i];
    if (spec.name.empty()) throw Error(ErrorCode::InvalidCodebook, "column with empty name");
    if (is_reserved_column(spec.name)) {
      throw Error(ErrorCode::InvalidCodebook, "column '" + spec.name + "' is reserved");
    }
    if (spec.levels.empty()) {
      throw Error(ErrorCode::InvalidCodebook, "column '" + spec.name + "' declares no levels");
    }
    for (std::size_t a = 0; a < spec.levels.size(); ++a) {
      for (std::size_t b = a + 1; b < spec.levels.size(); ++b) {
        if (spec.levels[a] == spec.levels[b]) {
          throw Error(ErrorCode::InvalidCodebook,
                      "column '" + spec.name + "' repeats level '" + spec.levels[a] + "'");
        }
      }
    }
    if (!index_.emplace(spec.name, i).second) {
      throw Error(ErrorCode::InvalidCodebook, "column '" + spec.name + "' declared twice");
    }
  }
}

Codebook Codebook::from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array()) {
    throw Error(ErrorCode::InvalidCodebook, "codebook must be an object with a 'columns' array");
  }
  std::vector<VariableSpec> columns;
  for (const auto& entry : doc["columns"]) {
    VariableSpec spec;
    if (!entry.contains("name") || !entry["name"].is_string()) {
      throw Error(ErrorCode::InvalidCodebook, "codebook column without a string 'name'");
    }
    spec.name = entry["name"].get<std::string>();
    const std::string type = entry.value("type", std::string("categorical"));
    if (type == "categorical") {
      spec.type = VariableType::Categorical;
    } else if (type == "ordinal") {
      spec.type = VariableType::Ordinal;
    } else {
      throw Error(ErrorCode::InvalidCodebook,
                  "column '" + spec.name + "' has unknown type '" + type + "'");
    }
    if (!entry.contains("levels") || !entry["levels"].is_array()) {
      throw Error(ErrorCode::InvalidCodebook, "column '" + spec.name + "' needs a 'levels' array");
    }
    for (const auto& level : entry["levels"]) spec.levels.push_back(level_from_json(level, spec.name));
    columns.push_back(std::move(spec));
  }
  return Codebook(std::move(columns));
}

Codebook Codebook::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open codebook " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidCodebook, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

Json Codebook::to_json() const {
  Json columns = Json::array();
  for (const auto& spec : columns_) {
    columns.push_back({{"name", spec.name},
                       {"type", spec.type == VariableType::Ordinal ? "ordinal" : "categorical"},
                       {"levels", spec.levels}});
  }
  return Json{{"columns", columns}};
}

const VariableSpec* Codebook::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &columns_[it->second];
}

const VariableSpec& Codebook::at(std::string_view name) const {
  if (const auto* spec = find(name)) return *spec;
  throw Error(ErrorCode::UnknownIdentifier, "'" + std::string(name) + "' is not in the codebook");
}

std::optional<std::size_t> Codebook::position(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Codebook::operator==(const Codebook& other) const {
  if (columns_.size() != other.columns_.size()) return false;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& a = columns_[i];
    const auto& b = other.columns_[i];
    if (a.name != b.name || a.type != b.type || a.levels != b.levels) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Records and datasets

const std::string& RespondentRecord::attribute(std::string_view name) const {
  auto it = attributes.find(name);
  if (it == attributes.end()) {
    throw Error(ErrorCode::MissingAttribute, "respondent '" + respondent_id +
                                                 "' has no value for '" + std::string(name) + "'");
  }
  return it->second;
}

SurveyDataset::SurveyDataset(std::vector<RespondentRecord> records, Codebook codebook,
                             Provenance provenance)
    : records_(std::move(records)), codebook_(std::move(codebook)), provenance_(std::move(provenance)) {
  for (std::size_t row = 0; row < records_.size(); ++row) {
    const auto& record = records_[row];
    const std::string where = "row " + std::to_string(row + 1);
    if (record.respondent_id.empty()) {
      throw Error(ErrorCode::MissingValue, where + ": empty respondent_id");
    }
    if (!index_.emplace(record.respondent_id, row).second) {
      throw Error(ErrorCode::DuplicateRespondentId,
                  where + ": respondent_id '" + record.respondent_id + "' already used");
    }
    for (const auto& spec : codebook_.columns()) {
      auto it = record.attributes.find(spec.name);
      if (it == record.attributes.end() || it->second.empty()) {
        throw Error(ErrorCode::MissingValue, where + ", column '" + spec.name + "': missing value");
      }
      if (!spec.level_index(it->second)) {
        throw Error(ErrorCode::UnknownLevel, where + ", column '" + spec.name + "': value '" +
                                                 it->second + "' is not a codebook level");
      }
    }
    for (const auto& [name, value] : record.attributes) {
      if (!codebook_.contains(name)) {
        throw Error(ErrorCode::UnknownColumn, where + ": attribute '" + name + "' not in codebook");
      }
    }
    if (provenance_.is_human()) {
      for (OutcomeItem item : kOutcomeItems) {
        if (!record.outcome(item)) {
          throw Error(ErrorCode::MissingValue, where + ", column '" + std::string(item_id(item)) +
                                                   "': human responses may not be missing");
        }
      }
    }
  }
}

const RespondentRecord* SurveyDataset::find(std::string_view respondent_id) const {
  auto it = index_.find(respondent_id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

bool SurveyDataset::has_segments() const {
  return !records_.empty() &&
         std::all_of(records_.begin(), records_.end(), [](const auto& r) { return r.segment.has_value(); });
}

std::size_t SurveyDataset::missing_outcomes() const {
  std::size_t missing = 0;
  for (const auto& r : records_) {
    for (const auto& v : r.outcomes) missing += v ? 0 : 1;
  }
  return missing;
}

SurveyDataset SurveyDataset::with_segments(
    const std::map<std::string, std::string, std::less<>>& labels) const {
  auto records = records_;
  for (auto& r : records) {
    auto it = labels.find(r.respondent_id);
    if (it == labels.end()) {
      throw Error(ErrorCode::MissingValue, "no segment label for respondent '" + r.respondent_id + "'");
    }
    r.segment = it->second;
  }
  return SurveyDataset(std::move(records), codebook_, provenance_);
}

bool SurveyDataset::operator==(const SurveyDataset& other) const {
  return records_ == other.records_ && codebook_ == other.codebook_ && provenance_ == other.provenance_;
}

// ---------------------------------------------------------------------------
// CSV ingest

namespace {

std::optional<int> parse_int(std::string_view text) {
  if (text.empty()) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

SurveyDataset parse_dataset_csv(std::string_view csv_text, const Codebook& codebook,
                                Provenance provenance) {
  const csv::Table table = csv::parse(csv_text);

  std::map<std::string, std::size_t, std::less<>> column_of;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (!column_of.emplace(table.header[c], c).second) {
      throw Error(ErrorCode::UnknownColumn, "header repeats column '" + table.header[c] + "'");
    }
  }
  auto require = [&](std::string_view name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw Error(ErrorCode::MissingColumn, "column '" + std::string(name) + "' not found in header");
    }
    return it->second;
  };

  const std::size_t id_col = require(kRespondentIdColumn);
  std::array<std::size_t, 3> item_col{};
  for (OutcomeItem item : kOutcomeItems) item_col[item_index(item)] = require(item_id(item));
  std::vector<std::pair<std::string, std::size_t>> attr_cols;
  for (const auto& spec : codebook.columns()) attr_cols.emplace_back(spec.name, require(spec.name));
  std::optional<std::size_t> segment_col;
  if (auto it = column_of.find(kSegmentColumn); it != column_of.end()) segment_col = it->second;

  for (const auto& name : table.header) {
    if (!is_reserved_column(name) && !codebook.contains(name)) {
      throw Error(ErrorCode::UnknownColumn, "column '" + name + "' is not declared in the codebook");
    }
  }

  std::vector<RespondentRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where =
        "row " + std::to_string(r + 1) + " (line " + std::to_string(table.line_numbers[r]) + ")";
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::ParseFailure, where + ": expected " + std::to_string(table.header.size()) +
                                               " fields, found " + std::to_string(row.size()));
    }
    RespondentRecord record;
    record.respondent_id = row[id_col];
    for (const auto& [name, col] : attr_cols) record.attributes.emplace(name, row[col]);
    for (OutcomeItem item : kOutcomeItems) {
      const std::string& cell = row[item_col[item_index(item)]];
      const std::string column = std::string(item_id(item));
      if (cell.empty()) {
        if (provenance.is_human()) {
          throw Error(ErrorCode::MissingValue, where + ", column '" + column + "': missing response");
        }
        continue;
      }
      const auto value = parse_int(cell);
      if (!value) {
        throw Error(ErrorCode::ParseFailure,
                    where + ", column '" + column + "': '" + cell + "' is not an integer");
      }
      if (*value < LikertValue::kMin || *value > LikertValue::kMax) {
        throw Error(ErrorCode::RangeViolation,
                    where + ", column '" + column + "': value " + cell + " outside 1-7");
      }
      record.outcomes[item_index(item)] = LikertValue(*value);
    }
    if (segment_col && !row[*segment_col].empty()) record.segment = row[*segment_col];
    records.push_back(std::move(record));
  }

  return SurveyDataset(std::move(records), codebook, std::move(provenance));
}

SurveyDataset load_dataset(const std::filesystem::path& csv_path,
                           const std::filesystem::path& codebook_path, Provenance provenance) {
  if (!std::filesystem::exists(codebook_path)) {
    throw Error(ErrorCode::IoFailure, "codebook not found: " + codebook_path.string());
  }
  const Codebook codebook = Codebook::load(codebook_path);
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + csv_path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_dataset_csv(buffer.str(), codebook, std::move(provenance));
  } catch (const Error& e) {
    throw e.with_context(csv_path.filename().string() + ":");
  }
}

std::string dataset_to_csv(const SurveyDataset& dataset) {
  std::ostringstream out;
  std::vector<std::string> header{std::string(kRespondentIdColumn)};
  for (const auto& spec : dataset.codebook().columns()) header.push_back(spec.name);
  for (OutcomeItem item : kOutcomeItems) header.emplace_back(item_id(item));
  const bool with_segment = std::any_of(dataset.records().begin(), dataset.records().end(),
                                        [](const auto& r) { return r.segment.has_value(); });
  if (with_segment) header.emplace_back(kSegmentColumn);
  csv::write_row(out, header);

  for (const auto& record : dataset.records()) {
    std::vector<std::string> fields{record.respondent_id};
    for (const auto& spec : dataset.codebook().columns()) fields.push_back(record.attribute(spec.name));
    for (OutcomeItem item : kOutcomeItems) {
      const auto v = record.outcome(item);
      fields.push_back(v ? std::to_string(v->value()) : std::string());
    }
    if (with_segment) fields.push_back(record.segment.value_or(""));
    csv::write_row(out, fields);
  }
  return out.str();
}

void save_dataset(const SurveyDataset& dataset, const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + csv_path.string());
  out << dataset_to_csv(dataset);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + csv_path.string());
}

// ---------------------------------------------------------------------------
// Canonical JSON dump

Json dump_dataset(const SurveyDataset& dataset) {
  Json provenance;
  if (dataset.provenance().is_human()) {
    provenance = {{"kind", "human"}};
  } else {
    provenance = {{"kind", "silicon"},
                  {"model", dataset.provenance().model},
                  {"configuration", dataset.provenance().configuration}};
  }
  Json records = Json::array();
  for (const auto& r : dataset.records()) {
    Json attributes = Json::object();
    for (const auto& spec : dataset.codebook().columns()) attributes[spec.name] = r.attribute(spec.name);
    Json outcomes = Json::object();
    for (OutcomeItem item : kOutcomeItems) {
      const auto v = r.outcome(item);
      outcomes[std::string(item_id(item))] = v ? Json(v->value()) : Json(nullptr);
    }
    records.push_back({{"respondent_id", r.respondent_id},
                       {"attributes", attributes},
                       {"outcomes", outcomes},
                       {"segment", r.segment ? Json(*r.segment) : Json(nullptr)}});
  }
  return Json{{"format", "segsim.dataset"},
              {"version", 1},
              {"provenance", provenance},
              {"codebook", dataset.codebook().to_json()},
              {"records", records}};
}

SurveyDataset parse_dataset_dump(const Json& doc) {
  try {
    Codebook codebook = Codebook::from_json(doc.at("codebook"));
    Provenance provenance;
    const auto& p = doc.at("provenance");
    if (p.at("kind") == "silicon") {
      provenance = Provenance::silicon(p.at("model").get<std::string>(),
                                       p.at("configuration").get<std::string>());
    }
    std::vector<RespondentRecord> records;
    for (const auto& entry : doc.at("records")) {
      RespondentRecord r;
      r.respondent_id = entry.at("respondent_id").get<std::string>();
      for (const auto& [name, value] : entry.at("attributes").items()) {
        r.attributes.emplace(name, value.get<std::string>());
      }
      for (OutcomeItem item : kOutcomeItems) {
        const auto& v = entry.at("outcomes").at(std::string(item_id(item)));
        if (!v.is_null()) r.outcomes[item_index(item)] = LikertValue(v.get<int>());
      }
      if (entry.contains("segment") && !entry["segment"].is_null()) {
        r.segment = entry["segment"].get<std::string>();
      }
      records.push_back(std::move(r));
    }
    return SurveyDataset(std::move(records), std::move(codebook), std::move(provenance));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed dataset dump: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Frequencies

Distribution frequency_distribution(std::span<const LikertValue> responses) {
  if (responses.empty()) throw Error(ErrorCode::EmptySelection, "no responses to tabulate");
  std::array<std::size_t, kScalePoints> counts{};
  for (const auto& v : responses) ++counts[static_cast<std::size_t>(v.value() - 1)];
  Distribution dist(kScalePoints);
  const double n = static_cast<double>(responses.size());
  for (std::size_t k = 0; k < counts.size(); ++k) dist[k] = static_cast<double>(counts[k]) / n;
  return dist;
}

Distribution frequency_distribution(const SurveyDataset& dataset, OutcomeItem item,
                                    const std::optional<std::string>& segment) {
  std::vector<LikertValue> values;
  for (const auto& r : dataset.records()) {
    if (segment && r.segment != segment) continue;
    if (auto v = r.outcome(item)) values.push_back(*v);
  }
  if (values.empty()) {
    throw Error(ErrorCode::EmptySelection,
                "no responses for " + std::string(item_id(item)) +
                    (segment ? " in segment '" + *segment + "'" : std::string()));
  }
  return frequency_distribution(values);
}

}  // namespace segsim
