#include "segsim/segmentation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "segsim/error.hpp"
#include "segsim/persona.hpp"

namespace segsim {

// ---------------------------------------------------------------------------
// Decision tables

namespace {

constexpr std::size_t kMaxEnumeratedCombinations = 10'000'000;

std::optional<int> parse_int(std::string_view text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace

DecisionTable::DecisionTable(std::vector<DecisionItem> items, std::vector<DecisionRule> rules)
    : items_(std::move(items)), rules_(std::move(rules)) {
  if (items_.empty()) throw Error(ErrorCode::InvalidDecisionTable, "table declares no items");
  if (rules_.empty()) throw Error(ErrorCode::InvalidDecisionTable, "table declares no rules");

  std::size_t combinations = 1;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (item.min > item.max) {
      throw Error(ErrorCode::InvalidDecisionTable, "item '" + item.name + "' has min > max");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (items_[j].name == item.name) {
        throw Error(ErrorCode::InvalidDecisionTable, "item '" + item.name + "' declared twice");
      }
    }
    combinations *= static_cast<std::size_t>(item.max - item.min + 1);
    if (combinations > kMaxEnumeratedCombinations) {
      throw Error(ErrorCode::InvalidDecisionTable, "item ranges too large to verify totality");
    }
  }

  for (const auto& rule : rules_) {
    if (rule.label.empty()) throw Error(ErrorCode::InvalidDecisionTable, "rule with empty label");
    std::vector<std::size_t> idx;
    for (const auto& c : rule.conditions) {
      auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& d) { return d.name == c.item; });
      if (it == items_.end()) {
        throw Error(ErrorCode::InvalidDecisionTable,
                    "rule for '" + rule.label + "' references undeclared item '" + c.item + "'");
      }
      if (c.lo > c.hi) {
        throw Error(ErrorCode::InvalidDecisionTable, "rule for '" + rule.label + "' has empty range");
      }
      idx.push_back(static_cast<std::size_t>(it - items_.begin()));
    }
    condition_items_.push_back(std::move(idx));
  }

  // Totality: odometer over the full product of declared ranges.
  std::vector<int> values;
  for (const auto& item : items_) values.push_back(item.min);
  while (true) {
    if (!match(values)) {
      std::string combo;
      for (std::size_t i = 0; i < items_.size(); ++i) {
        combo += (i ? ", " : "") + items_[i].name + "=" + std::to_string(values[i]);
      }
      throw Error(ErrorCode::UncoveredCombination, "no rule covers " + combo);
    }
    std::size_t pos = 0;
    while (pos < values.size() && values[pos] == items_[pos].max) {
      values[pos] = items_[pos].min;
      ++pos;
    }
    if (pos == values.size()) break;
    ++values[pos];
  }
}

const DecisionRule* DecisionTable::match(std::span<const int> values) const {
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const auto& rule = rules_[r];
    bool ok = true;
    for (std::size_t c = 0; c < rule.conditions.size() && ok; ++c) {
      const int v = values[condition_items_[r][c]];
      ok = v >= rule.conditions[c].lo && v <= rule.conditions[c].hi;
    }
    if (ok) return &rule;
  }
  return nullptr;
}

const std::string& DecisionTable::classify(std::span<const int> values) const {
  if (values.size() != items_.size()) {
    throw Error(ErrorCode::MissingItem, "expected " + std::to_string(items_.size()) + " item values");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (values[i] < items_[i].min || values[i] > items_[i].max) {
      throw Error(ErrorCode::UncoveredCombination, "item '" + items_[i].name + "' value " +
                                                       std::to_string(values[i]) +
                                                       " outside its declared range");
    }
  }
  const auto* rule = match(values);
  if (!rule) throw Error(ErrorCode::UncoveredCombination, "no rule matches");
  return rule->label;
}

std::vector<std::string> DecisionTable::labels() const {
  std::vector<std::string> out;
  for (const auto& rule : rules_) {
    if (std::find(out.begin(), out.end(), rule.label) == out.end()) out.push_back(rule.label);
  }
  return out;
}

DecisionTable DecisionTable::from_json(const Json& doc) {
  try {
    std::vector<DecisionItem> items;
    for (const auto& entry : doc.at("items")) {
      items.push_back({entry.at("name").get<std::string>(), entry.at("min").get<int>(),
                       entry.at("max").get<int>()});
    }
    std::vector<DecisionRule> rules;
    for (const auto& entry : doc.at("rules")) {
      DecisionRule rule;
      rule.label = entry.at("label").get<std::string>();
      if (entry.contains("when")) {
        for (const auto& [item, range] : entry["when"].items()) {
          Condition c{item, 0, 0};
          if (range.is_number_integer()) {
            c.lo = c.hi = range.get<int>();
          } else {
            if (!range.is_array() || range.size() != 2) {
              throw Error(ErrorCode::InvalidDecisionTable,
                          "condition on '" + item + "' must be an integer or [lo, hi]");
            }
            c.lo = range[0].get<int>();
            c.hi = range[1].get<int>();
          }
          rule.conditions.push_back(std::move(c));
        }
      }
      rules.push_back(std::move(rule));
    }
    return DecisionTable(std::move(items), std::move(rules));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidDecisionTable, e.what());
  }
}

DecisionTable DecisionTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open decision table " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidDecisionTable, path.string() + ": " + e.what());
  }
}

std::string assign_segment(const RespondentRecord& record, const DecisionTable& table) {
  std::vector<int> values;
  values.reserve(table.items().size());
  for (const auto& item : table.items()) {
    auto it = record.attributes.find(item.name);
    if (it == record.attributes.end() || it->second.empty()) {
      throw Error(ErrorCode::MissingItem,
                  "respondent '" + record.respondent_id + "' lacks item '" + item.name + "'");
    }
    const auto v = parse_int(it->second);
    if (!v) {
      throw Error(ErrorCode::MissingItem, "respondent '" + record.respondent_id + "' item '" + item.name +
                                              "' is not integer-coded: '" + it->second + "'");
    }
    values.push_back(*v);
  }
  return table.classify(values);
}

// ---------------------------------------------------------------------------
// Gradient-boosted stumps

namespace {

struct Feature {
  std::size_t column = 0;  // index into candidate list
  bool ordinal = false;
  std::size_t levels = 0;
  std::vector<std::size_t> codes;  // per row
};

struct Split {
  double gain = 0.0;
  std::size_t feature = 0;
  // Rows with code <= threshold (ordinal) or code == threshold (categorical)
  // go left.
  std::size_t threshold = 0;
  double left_weight = 0.0;
  double right_weight = 0.0;
};

double leaf_score(double g, double h, double l2) { return g * g / (h + l2); }

std::optional<std::string> target_value(const RespondentRecord& r, const std::string& target) {
  if (target == kSegmentColumn) return r.segment;
  if (auto item = parse_item(target)) {
    const auto v = r.outcome(*item);
    return v ? std::optional<std::string>(std::to_string(v->value())) : std::nullopt;
  }
  auto it = r.attributes.find(target);
  if (it == r.attributes.end()) return std::nullopt;
  return it->second;
}

// Best stump over all features for the given gradients; ties keep the
// earliest feature and the earliest threshold.
std::optional<Split> best_split(const std::vector<Feature>& features, const std::vector<double>& grad,
                                const std::vector<double>& hess, double l2) {
  double g_total = 0.0, h_total = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    g_total += grad[i];
    h_total += hess[i];
  }
  const double parent = leaf_score(g_total, h_total, l2);

  std::optional<Split> best;
  std::vector<double> g_level, h_level;
  std::vector<std::size_t> n_level;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& feat = features[f];
    g_level.assign(feat.levels, 0.0);
    h_level.assign(feat.levels, 0.0);
    n_level.assign(feat.levels, 0);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      g_level[feat.codes[i]] += grad[i];
      h_level[feat.codes[i]] += hess[i];
      ++n_level[feat.codes[i]];
    }
    const std::size_t present =
        static_cast<std::size_t>(std::count_if(n_level.begin(), n_level.end(), [](auto n) { return n > 0; }));
    if (present < 2) continue;

    auto consider = [&](double gl, double hl, std::size_t threshold) {
      const double gr = g_total - gl;
      const double hr = h_total - hl;
      const double gain = 0.5 * (leaf_score(gl, hl, l2) + leaf_score(gr, hr, l2) - parent);
      if (!(gain > 1e-15)) return;
      if (!best || gain > best->gain) {
        best = Split{gain, f, threshold, -gl / (hl + l2), -gr / (hr + l2)};
      }
    };

    if (feat.ordinal) {
      double gl = 0.0, hl = 0.0;
      std::size_t seen = 0;
      for (std::size_t t = 0; t + 1 < feat.levels; ++t) {
        gl += g_level[t];
        hl += h_level[t];
        seen += n_level[t];
        if (n_level[t] == 0 || seen == grad.size()) continue;
        consider(gl, hl, t);
      }
    } else {
      for (std::size_t t = 0; t < feat.levels; ++t) {
        if (n_level[t] == 0 || n_level[t] == grad.size()) continue;
        consider(g_level[t], h_level[t], t);
      }
    }
  }
  return best;
}

}  // namespace

IdentifierRanking rank_identifiers(const SurveyDataset& dataset, const std::vector<std::string>& candidates,
                                   const std::string& target, const BoostingParams& params) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidate identifiers");
  if (params.rounds < 0 || !(params.learning_rate > 0.0) || params.l2 < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid boosting parameters");
  }
  if (params.max_depth != 1) {
    throw Error(ErrorCode::InvalidConfig, "only depth-1 stumps are supported");
  }

  const Codebook& codebook = dataset.codebook();
  std::vector<std::string> ordered = candidates;
  for (const auto& name : ordered) codebook.at(name);
  std::stable_sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
    return *codebook.position(a) < *codebook.position(b);
  });

  std::vector<std::size_t> rows;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (auto v = target_value(dataset.records()[i], target)) {
      rows.push_back(i);
      labels.push_back(*v);
    }
  }
  std::set<std::string> class_set(labels.begin(), labels.end());
  if (class_set.size() < 2) {
    throw Error(ErrorCode::DegenerateTarget,
                "target '" + target + "' has " + std::to_string(class_set.size()) + " observed class(es)");
  }
  const std::vector<std::string> classes(class_set.begin(), class_set.end());

  std::vector<Feature> features;
  for (std::size_t c = 0; c < ordered.size(); ++c) {
    const auto& spec = codebook.at(ordered[c]);
    Feature feat;
    feat.column = c;
    feat.ordinal = spec.type == VariableType::Ordinal;
    feat.levels = spec.levels.size();
    for (std::size_t row : rows) {
      feat.codes.push_back(*spec.level_index(dataset.records()[row].attribute(spec.name)));
    }
    features.push_back(std::move(feat));
  }

  const std::size_t n = rows.size();
  std::vector<double> importance(ordered.size(), 0.0);
  std::vector<double> score(n), grad(n), hess(n), y(n);
  for (const auto& cls : classes) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = labels[i] == cls ? 1.0 : 0.0;
      positives += labels[i] == cls;
    }
    const double prior = static_cast<double>(positives) / static_cast<double>(n);
    std::fill(score.begin(), score.end(), std::log(prior / (1.0 - prior)));

    for (int round = 0; round < params.rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-score[i]));
        grad[i] = p - y[i];
        hess[i] = p * (1.0 - p);
      }
      const auto split = best_split(features, grad, hess, params.l2);
      if (!split) break;
      const auto& feat = features[split->feature];
      importance[feat.column] += split->gain;
      for (std::size_t i = 0; i < n; ++i) {
        const bool left = feat.ordinal ? feat.codes[i] <= split->threshold : feat.codes[i] == split->threshold;
        score[i] += params.learning_rate * (left ? split->left_weight : split->right_weight);
      }
    }
  }

  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  IdentifierRanking ranking;
  ranking.target = target;
  ranking.params = params;
  for (std::size_t c = 0; c < ordered.size(); ++c) {
    ranking.entries.push_back({ordered[c], total > 0.0 ? importance[c] / total : 0.0});
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const auto& a, const auto& b) { return a.importance > b.importance; });
  return ranking;
}

std::vector<std::string> select_top_k(const IdentifierRanking& ranking, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be at least 1");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranking.entries.size()); ++i) out.push_back(ranking.entries[i].name);
  return out;
}

Json IdentifierRanking::to_json() const {
  Json list = Json::array();
  for (const auto& e : entries) list.push_back({{"identifier", e.name}, {"importance", e.importance}});
  return Json{{"target", target},
              {"params",
               {{"rounds", params.rounds},
                {"learning_rate", params.learning_rate},
                {"max_depth", params.max_depth},
                {"l2", params.l2}}},
              {"entries", list}};
}

IdentifierRanking IdentifierRanking::from_json(const Json& doc) {
  IdentifierRanking r;
  try {
    r.target = doc.at("target").get<std::string>();
    const auto& p = doc.at("params");
    r.params = {p.at("rounds").get<int>(), p.at("learning_rate").get<double>(), p.at("max_depth").get<int>(),
                p.at("l2").get<double>()};
    for (const auto& e : doc.at("entries")) {
      r.entries.push_back({e.at("identifier").get<std::string>(), e.at("importance").get<double>()});
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed ranking: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Configurations

std::string_view kind_name(ConfigurationKind kind) {
  switch (kind) {
    case ConfigurationKind::Demo: return "Demo";
    case ConfigurationKind::DemoTheory59: return "Demo+Theory-59";
    case ConfigurationKind::DemoTheory15: return "Demo+Theory-15";
    case ConfigurationKind::DataDriven: return "Data-driven";
    case ConfigurationKind::Item15: return "Item-15";
    case ConfigurationKind::Item4: return "Item-4";
  }
  return "";
}

std::optional<ConfigurationKind> parse_kind(std::string_view name) {
  for (auto kind : kConfigurationKinds) {
    if (kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

std::size_t expected_identifier_count(ConfigurationKind kind) {
  switch (kind) {
    case ConfigurationKind::Demo: return 5;
    case ConfigurationKind::DemoTheory59: return 59;
    case ConfigurationKind::DemoTheory15: return 15;
    case ConfigurationKind::DataDriven: return 15;
    case ConfigurationKind::Item15: return 15;
    case ConfigurationKind::Item4: return 4;
  }
  return 0;
}

SelectionLogic selection_logic(ConfigurationKind kind) {
  switch (kind) {
    case ConfigurationKind::Demo: return SelectionLogic::Default;
    case ConfigurationKind::DemoTheory59:
    case ConfigurationKind::DemoTheory15: return SelectionLogic::Theory;
    case ConfigurationKind::DataDriven: return SelectionLogic::Data;
    case ConfigurationKind::Item15:
    case ConfigurationKind::Item4: return SelectionLogic::Instrument;
  }
  return SelectionLogic::Default;
}

Granularity granularity(ConfigurationKind kind) {
  switch (kind) {
    case ConfigurationKind::Demo: return Granularity::Low;
    case ConfigurationKind::DemoTheory59: return Granularity::VeryHigh;
    case ConfigurationKind::DemoTheory15:
    case ConfigurationKind::DataDriven: return Granularity::High;
    case ConfigurationKind::Item15:
    case ConfigurationKind::Item4: return Granularity::Medium;
  }
  return Granularity::Low;
}

std::string_view to_string(SelectionLogic logic) {
  switch (logic) {
    case SelectionLogic::Default: return "default";
    case SelectionLogic::Theory: return "theory";
    case SelectionLogic::Data: return "data";
    case SelectionLogic::Instrument: return "instrument";
  }
  return "";
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::Low: return "low";
    case Granularity::Medium: return "medium";
    case Granularity::High: return "high";
    case Granularity::VeryHigh: return "very-high";
  }
  return "";
}

std::vector<IdentifierDef> parse_identifier_set(std::string_view text) {
  std::vector<IdentifierDef> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto name_end = line.find_first_of(" \t", start);
    IdentifierDef def;
    def.name = line.substr(start, name_end == std::string::npos ? std::string::npos : name_end - start);
    if (name_end != std::string::npos) {
      const auto tmpl_start = line.find_first_not_of(" \t", name_end);
      if (tmpl_start != std::string::npos) def.render_template = line.substr(tmpl_start);
    }
    if (def.render_template.empty()) def.render_template = "{name}: {value}";
    for (const auto& prior : out) {
      if (prior.name == def.name) {
        throw Error(ErrorCode::CountMismatch,
                    "identifier '" + def.name + "' listed twice (line " + std::to_string(line_no) + ")");
      }
    }
    validate_identifier_template(def);
    out.push_back(std::move(def));
  }
  return out;
}

std::vector<IdentifierDef> load_identifier_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open identifier set " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_identifier_set(buffer.str());
  } catch (const Error& e) {
    throw e.with_context(path.filename().string() + ":");
  }
}

std::vector<std::string> SegmentationConfiguration::identifier_names() const {
  std::vector<std::string> names;
  for (const auto& id : identifiers) names.push_back(id.name);
  return names;
}

Json SegmentationConfiguration::to_json() const {
  Json ids = Json::array();
  for (const auto& id : identifiers) ids.push_back({{"name", id.name}, {"template", id.render_template}});
  return Json{{"name", name()},
              {"selection_logic", to_string(selection_logic(kind))},
              {"granularity", to_string(granularity(kind))},
              {"identifier_count", identifiers.size()},
              {"identifiers", ids}};
}

SegmentationConfiguration SegmentationConfiguration::from_json(const Json& doc) {
  SegmentationConfiguration cfg;
  try {
    const auto name = doc.at("name").get<std::string>();
    const auto kind = parse_kind(name);
    if (!kind) throw Error(ErrorCode::UnknownConfiguration, "unknown configuration '" + name + "'");
    cfg.kind = *kind;
    for (const auto& id : doc.at("identifiers")) {
      cfg.identifiers.push_back({id.at("name").get<std::string>(), id.at("template").get<std::string>()});
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed configuration: ") + e.what());
  }
  return cfg;
}

SegmentationConfiguration build_configuration(ConfigurationKind kind, const Codebook& codebook,
                                              std::vector<IdentifierDef> identifiers) {
  const std::size_t expected = expected_identifier_count(kind);
  if (identifiers.size() != expected) {
    throw Error(ErrorCode::CountMismatch, std::string(kind_name(kind)) + " requires " +
                                              std::to_string(expected) + " identifiers, got " +
                                              std::to_string(identifiers.size()));
  }
  for (const auto& id : identifiers) {
    if (!codebook.contains(id.name)) {
      throw Error(ErrorCode::UnknownIdentifier, std::string(kind_name(kind)) + ": identifier '" + id.name +
                                                    "' does not resolve against the codebook");
    }
    validate_identifier_template(id);
  }
  return SegmentationConfiguration{kind, std::move(identifiers)};
}

SegmentationConfiguration build_data_driven_configuration(const IdentifierRanking& ranking,
                                                          const std::vector<IdentifierDef>& candidates,
                                                          const Codebook& codebook) {
  const auto names = select_top_k(ranking, expected_identifier_count(ConfigurationKind::DataDriven));
  std::vector<IdentifierDef> ids;
  for (const auto& name : names) {
    auto it = std::find_if(candidates.begin(), candidates.end(), [&](const auto& c) { return c.name == name; });
    if (it == candidates.end()) {
      throw Error(ErrorCode::UnknownIdentifier, "ranked identifier '" + name + "' has no candidate template");
    }
    ids.push_back(*it);
  }
  return build_configuration(ConfigurationKind::DataDriven, codebook, std::move(ids));
}

}  // namespace segsim
